#pragma once

// Metric name -> local model files.
//
// Cache layout: <root>/<name>/<revision>/<files...> plus a `.complete`
// sentinel written only after every file verified. Entries without the
// sentinel are treated as absent. Mutations of an entry happen under an
// advisory flock on <root>/<name>/.lock.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "metricforge/error.hpp"
#include "metricforge/metric_kind.hpp"
#include "metricforge/model_format.hpp"
#include "metricforge/resolved_model.hpp"
#include "metricforge/sha256.hpp"

namespace metricforge {

enum class FileRole { kModel, kVocab };

struct RegistryFile {
  std::string name;    // relative to the entry directory
  std::string sha256;  // lowercase hex; empty = not pinned
  std::uint64_t size = 0;  // 0 = not pinned
  FileRole role = FileRole::kModel;
};

struct RegistryEntry {
  std::string name;
  std::string remote_id;
  std::string revision = "main";
  MetricKind kind = MetricKind::kCometQe;
  std::vector<RegistryFile> files;

  const RegistryFile& file(FileRole role) const {
    for (const auto& f : files) {
      if (f.role == role) return f;
    }
    raise(ErrorCode::kInvalidConfig, "registry entry '" + name + "' has no " +
                                         (role == FileRole::kModel ? "model" : "vocabulary") + " file");
  }

  void check() const {
    int models = 0, vocabs = 0;
    for (const auto& f : files) (f.role == FileRole::kModel ? models : vocabs)++;
    if (models != 1 || vocabs != 1) {
      raise(ErrorCode::kInvalidConfig,
            "registry entry '" + name + "' must list exactly one model file and one vocabulary file");
    }
  }
};

/// Names and remote ids of the published converted checkpoints. File hashes
/// are not pinned for these; the container's own payload checksum still
/// guards the model file.
inline std::vector<RegistryEntry> builtin_registry() {
  struct Row {
    const char* name;
    const char* remote;
    MetricKind kind;
  };
  static constexpr Row kRows[] = {
      {"bleurt-20", "marian-nmt/bleurt-20", MetricKind::kBleurt},
      {"wmt20-comet-da", "unbabel/wmt20-comet-da-marian", MetricKind::kComet},
      {"wmt20-comet-qe-da", "unbabel/wmt20-comet-qe-da-marian", MetricKind::kCometQe},
      {"wmt20-comet-qe-da-v2", "unbabel/wmt20-comet-qe-da-v2-marian", MetricKind::kCometQe},
      {"wmt21-comet-da", "unbabel/wmt21-comet-da-marian", MetricKind::kComet},
      {"wmt21-comet-qe-da", "unbabel/wmt21-comet-qe-da-marian", MetricKind::kCometQe},
      {"wmt21-comet-qe-mqm", "unbabel/wmt21-comet-qe-mqm-marian", MetricKind::kCometQe},
      {"wmt22-comet-da", "unbabel/wmt22-comet-da-marian", MetricKind::kComet},
      {"wmt22-cometkiwi-da", "unbabel/wmt22-cometkiwi-da-marian", MetricKind::kCometQe},
      {"wmt23-cometkiwi-da-xl", "unbabel/wmt23-cometkiwi-da-xl-marian", MetricKind::kCometQe},
      {"wmt23-cometkiwi-da-xxl", "unbabel/wmt23-cometkiwi-da-xxl-marian", MetricKind::kCometQe},
      {"cometoid22-wmt21", "marian-nmt/cometoid22-wmt21", MetricKind::kCometQe},
      {"cometoid22-wmt22", "marian-nmt/cometoid22-wmt22", MetricKind::kCometQe},
      {"cometoid22-wmt23", "marian-nmt/cometoid22-wmt23", MetricKind::kCometQe},
      {"chrfoid-wmt23", "marian-nmt/chrfoid-wmt23", MetricKind::kCometQe},
  };
  std::vector<RegistryEntry> out;
  for (const auto& r : kRows) {
    out.push_back({r.name, r.remote, "main", r.kind,
                   {{"model.mfrg", "", 0, FileRole::kModel}, {"vocab.txt", "", 0, FileRole::kVocab}}});
  }
  return out;
}

struct RegistrySettings {
  std::filesystem::path cache_root;
  std::string base_url = "https://huggingface.co";
  bool offline = false;
  std::chrono::milliseconds lock_timeout{60'000};
  std::function<void(const std::string&)> log;  // diagnostics sink, optional

  /// METRICFORGE_CACHE, METRICFORGE_BASE_URL, METRICFORGE_OFFLINE.
  static RegistrySettings from_env() {
    RegistrySettings s;
    if (const char* cache = std::getenv("METRICFORGE_CACHE"); cache && *cache) {
      s.cache_root = cache;
    } else if (const char* home = std::getenv("HOME"); home && *home) {
      s.cache_root = std::filesystem::path(home) / ".cache" / "metricforge";
    } else {
      s.cache_root = std::filesystem::temp_directory_path() / "metricforge-cache";
    }
    if (const char* url = std::getenv("METRICFORGE_BASE_URL"); url && *url) s.base_url = url;
    if (const char* off = std::getenv("METRICFORGE_OFFLINE"); off && *off && std::string(off) != "0") s.offline = true;
    return s;
  }
};

namespace detail {

/// Exclusive flock held for the object's lifetime.
class FileLock {
 public:
  FileLock(const std::filesystem::path& path, std::chrono::milliseconds timeout) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) raise(ErrorCode::kIo, "cannot open lock file '" + path.string() + "'");
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      if (errno != EWOULDBLOCK && errno != EINTR) {
        ::close(fd_);
        raise(ErrorCode::kIo, "flock on '" + path.string() + "' failed");
      }
      if (std::chrono::steady_clock::now() >= deadline) {
        ::close(fd_);
        raise(ErrorCode::kLockTimeout, "timed out waiting for cache lock '" + path.string() + "'");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing '/'
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  SplitUrl out;
  out.origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  out.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

}  // namespace detail

class Registry {
 public:
  explicit Registry(RegistrySettings settings = RegistrySettings::from_env()) : settings_(std::move(settings)) {
    for (auto& e : builtin_registry()) entries_[e.name] = std::move(e);
  }

  const RegistrySettings& settings() const { return settings_; }

  void add(RegistryEntry entry) {
    entry.check();
    entries_[entry.name] = std::move(entry);
  }

  /// Merges entries from a JSON list:
  /// [{"name", "remote_id", "revision"?, "kind", "files": [{"name", "sha256", "size", "role"}]}]
  void load_entries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::kNotFound, "cannot open registry file '" + path.string() + "'");
    try {
      for (const auto& j : nlohmann::json::parse(in)) {
        RegistryEntry e;
        e.name = j.at("name").get<std::string>();
        e.remote_id = j.at("remote_id").get<std::string>();
        e.revision = j.value("revision", std::string("main"));
        e.kind = metric_kind_or_throw(j.at("kind").get<std::string>());
        for (const auto& f : j.at("files")) {
          const auto role = f.at("role").get<std::string>();
          if (role != "model" && role != "vocab") {
            raise(ErrorCode::kInvalidConfig, "registry file role must be 'model' or 'vocab', got '" + role + "'");
          }
          e.files.push_back({f.at("name").get<std::string>(), f.value("sha256", std::string()),
                             f.value("size", std::uint64_t{0}), role == "model" ? FileRole::kModel : FileRole::kVocab});
        }
        add(std::move(e));
      }
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::kInvalidConfig, "malformed registry file '" + path.string() + "': " + e.what());
    }
  }

  const RegistryEntry* find(const std::string& name) const {
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
  }

  std::filesystem::path entry_dir(const RegistryEntry& e) const { return settings_.cache_root / e.name / e.revision; }

  /// An existing file path passes through untouched (kind read from its
  /// manifest). Otherwise the name is looked up, served from a complete
  /// cache entry, or downloaded.
  ResolvedModel resolve(const std::string& name_or_path) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (fs::is_regular_file(name_or_path, ec)) {
      const auto container = open_container(name_or_path, Backing::kMmap, false);
      return {name_or_path, std::nullopt, container.manifest().like};
    }
    const RegistryEntry* entry = find(name_or_path);
    if (!entry) {
      raise(ErrorCode::kUnknownName, "unknown model '" + name_or_path + "': not a file and not a registered metric name");
    }
    const fs::path dir = entry_dir(*entry);
    bool poisoned = false;
    if (fs::exists(dir / ".complete")) {
      if (files_valid(*entry, dir)) return local_paths(*entry, dir);
      if (settings_.offline) {
        raise(ErrorCode::kChecksumMismatch, "cached files for '" + entry->name +
                                                "' failed verification and METRICFORGE_OFFLINE prevents re-download");
      }
      poisoned = true;
    } else if (settings_.offline) {
      raise(ErrorCode::kOffline, "model '" + entry->name + "' is not cached and METRICFORGE_OFFLINE is set");
    }

    fs::create_directories(settings_.cache_root / entry->name);
    detail::FileLock lock(settings_.cache_root / entry->name / ".lock", settings_.lock_timeout);
    // another process may have finished (or repaired the entry) while we waited
    if (fs::exists(dir / ".complete") && files_valid(*entry, dir)) return local_paths(*entry, dir);
    if (poisoned || fs::exists(dir / ".complete")) {
      notify("checksum mismatch in cached '" + entry->name + "'; evicting and downloading again");
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
    download(*entry, dir);
    return local_paths(*entry, dir);
  }

  /// Fetches every file of `entry` into `dest`, verifies, then writes
  /// `.complete`. Caller holds the entry lock.
  void download(const RegistryEntry& entry, const std::filesystem::path& dest) const {
    namespace fs = std::filesystem;
    fs::create_directories(dest);
    fs::remove(dest / ".complete");
    const auto url = detail::split_url(settings_.base_url);
    httplib::Client client(url.origin);
    client.set_follow_location(true);
    client.set_connection_timeout(std::chrono::seconds(30));
    client.set_read_timeout(std::chrono::seconds(300));
    notify("downloading '" + entry.name + "' from " + settings_.base_url + "/" + entry.remote_id);
    for (const auto& f : entry.files) {
      const std::string path = url.prefix + "/" + entry.remote_id + "/" + f.name;
      fetch(client, url.origin + path, path, dest / f.name);
      if (!verify_file(f, dest / f.name)) {
        fs::remove(dest / f.name);
        raise(ErrorCode::kChecksumMismatch, "downloaded file '" + f.name + "' for '" + entry.name +
                                                "' failed size/sha256 verification");
      }
    }
    std::ofstream(dest / ".complete") << entry.remote_id << '\n';
  }

  static bool verify_file(const RegistryFile& f, const std::filesystem::path& path) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) return false;
    if (f.size != 0 && size != f.size) return false;
    if (!f.sha256.empty() && sha256_file_hex(path) != f.sha256) return false;
    return true;
  }

 private:
  ResolvedModel local_paths(const RegistryEntry& e, const std::filesystem::path& dir) const {
    return {dir / e.file(FileRole::kModel).name, dir / e.file(FileRole::kVocab).name, e.kind};
  }

  bool files_valid(const RegistryEntry& e, const std::filesystem::path& dir) const {
    for (const auto& f : e.files) {
      if (!verify_file(f, dir / f.name)) return false;
    }
    return true;
  }

  void notify(const std::string& message) const {
    if (settings_.log) settings_.log(message);
  }

  /// GET into `<target>.part`, resuming with a Range request when a partial
  /// file exists, then rename into place.
  static void fetch(httplib::Client& client, const std::string& url, const std::string& path,
                    const std::filesystem::path& target) {
    namespace fs = std::filesystem;
    const fs::path part = target.string() + ".part";
    std::error_code ec;
    std::uint64_t have = fs::exists(part, ec) ? fs::file_size(part, ec) : 0;

    httplib::Headers headers;
    if (have > 0) headers.emplace("Range", "bytes=" + std::to_string(have) + "-");

    std::ofstream out;
    int status = 0;
    auto result = client.Get(
        path, headers,
        [&](const httplib::Response& res) {
          status = res.status;
          if (res.status >= 400) return res.status == 416 && have > 0;  // 416: nothing left to fetch
          if (res.status == 206 && have > 0) {
            out.open(part, std::ios::binary | std::ios::app);
          } else {
            out.open(part, std::ios::binary | std::ios::trunc);
          }
          return static_cast<bool>(out);
        },
        [&](const char* data, std::size_t len) {
          out.write(data, static_cast<std::streamsize>(len));
          return static_cast<bool>(out);
        });
    out.close();
    if (status >= 400 && !(status == 416 && have > 0)) {
      raise(status == 404 ? ErrorCode::kNotFound : ErrorCode::kHttpStatus,
            "HTTP " + std::to_string(status) + " fetching " + url);
    }
    if (!result) {
      raise(ErrorCode::kDownload, "download of " + url + " failed: " + httplib::to_string(result.error()));
    }
    fs::rename(part, target);
  }

  RegistrySettings settings_;
  std::map<std::string, RegistryEntry> entries_;
};

}  // namespace metricforge
