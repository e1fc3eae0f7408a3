#pragma once

// Deterministic on-disk fixtures shared by the unit, golden and acceptance
// tests: a 64-token vocabulary, one tiny model per metric kind, an
// interchange directory, parallel text files and a registry description.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "metricforge/metricforge.hpp"
#include "metricforge/synthetic.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace metricforge;

inline const std::vector<std::string>& sources() {
  static const std::vector<std::string> v = {"Hallo Welt", "der Tag ist gut", "die Katze", "das ist gut .",
                                             "Guten Tag , Welt"};
  return v;
}
inline const std::vector<std::string>& translations() {
  static const std::vector<std::string> v = {"hello world", "the day is good", "the cat", "that is good .",
                                             "good day , world"};
  return v;
}
inline const std::vector<std::string>& references() {
  static const std::vector<std::string> v = {"Hello world", "the day is good", "a cat", "this is good .",
                                             "good day world"};
  return v;
}

struct ModelSpec {
  const char* name;
  MetricKind kind;
  NormStyle norm;
  std::uint64_t seed;
};

inline constexpr ModelSpec kModels[] = {
    {"tiny-qe", MetricKind::kCometQe, NormStyle::kPost, 11},
    {"tiny-comet", MetricKind::kComet, NormStyle::kPre, 12},
    {"tiny-bleurt", MetricKind::kBleurt, NormStyle::kPost, 13},
};

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
}

/// Writes the full fixture set into `dir` (created if needed).
inline void write_all(const fs::path& dir) {
  fs::create_directories(dir);
  synthetic::write_vocab(synthetic::fixture_vocab_tokens(), dir / "vocab.txt");
  nlohmann::json registry = nlohmann::json::array();
  for (const auto& spec : kModels) {
    const auto manifest = synthetic::tiny_manifest(spec.kind, spec.norm);
    const auto tensors = synthetic::random_model(manifest, spec.seed);
    const fs::path model = dir / (std::string(spec.name) + ".mfrg");
    write_container(manifest, tensors, model);
    write_interchange(manifest, tensors, dir / (std::string(spec.name) + ".interchange"));
    registry.push_back({{"name", spec.name},
                        {"remote_id", std::string("fixtures/") + spec.name},
                        {"kind", std::string(like_name(spec.kind))},
                        {"files",
                         {{{"name", "model.mfrg"},
                           {"role", "model"},
                           {"sha256", sha256_file_hex(model)},
                           {"size", fs::file_size(model)}},
                          {{"name", "vocab.txt"},
                           {"role", "vocab"},
                           {"sha256", sha256_file_hex(dir / "vocab.txt")},
                           {"size", fs::file_size(dir / "vocab.txt")}}}}});
  }
  std::ofstream(dir / "registry.json") << registry.dump(2) << '\n';
  write_lines(dir / "src.txt", sources());
  write_lines(dir / "mt.txt", translations());
  write_lines(dir / "ref.txt", references());
  std::vector<std::string> short_ref(references().begin(), references().end() - 1);
  write_lines(dir / "ref_short.txt", short_ref);
  std::vector<std::string> qe, comet, bleurt;
  for (std::size_t i = 0; i < sources().size(); ++i) {
    qe.push_back(sources()[i] + "\t" + translations()[i]);
    comet.push_back(sources()[i] + "\t" + translations()[i] + "\t" + references()[i]);
    bleurt.push_back(translations()[i] + "\t" + references()[i]);
  }
  write_lines(dir / "qe.tsv", qe);
  write_lines(dir / "comet.tsv", comet);
  write_lines(dir / "bleurt.tsv", bleurt);
}

}  // namespace fixtures
