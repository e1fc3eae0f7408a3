#pragma once

// Local HTTP server for registry tests. Serves files under `root` at
// /<relative path>, counts GETs per path and records Range headers.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "test_support.hpp"

namespace testing_support {

class StubServer {
 public:
  explicit StubServer(fs::path root, std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : root_(std::move(root)), delay_(delay) {
    server_.Get(R"(/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string rel = req.matches[1];
      {
        std::lock_guard<std::mutex> lock(mutex_);
        ++hits_[rel];
        if (req.has_header("Range")) ranges_[rel].push_back(req.get_header_value("Range"));
      }
      if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
      const fs::path file = root_ / rel;
      std::error_code ec;
      if (rel.find("..") != std::string::npos || !fs::is_regular_file(file, ec)) {
        res.status = 404;
        return;
      }
      res.set_content(read_file(file), "application/octet-stream");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::size_t hits(const std::string& rel) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = hits_.find(rel);
    return it == hits_.end() ? 0 : it->second;
  }

  std::size_t total_hits() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::size_t n = 0;
    for (const auto& [_, c] : hits_) n += c;
    return n;
  }

  std::vector<std::string> ranges(const std::string& rel) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = ranges_.find(rel);
    return it == ranges_.end() ? std::vector<std::string>{} : it->second;
  }

 private:
  fs::path root_;
  std::chrono::milliseconds delay_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::map<std::string, std::size_t> hits_;
  std::map<std::string, std::vector<std::string>> ranges_;
};

/// Lays out fixture models the way the registry expects:
/// <root>/fixtures/<name>/{model.mfrg,vocab.txt}.
inline void publish_fixtures(const fs::path& root) {
  const fs::path& fx = fixture_dir();
  for (const auto& spec : fixtures::kModels) {
    const fs::path dir = root / "fixtures" / spec.name;
    fs::create_directories(dir);
    fs::copy_file(fx / (std::string(spec.name) + ".mfrg"), dir / "model.mfrg", fs::copy_options::overwrite_existing);
    fs::copy_file(fx / "vocab.txt", dir / "vocab.txt", fs::copy_options::overwrite_existing);
  }
}

}  // namespace testing_support
