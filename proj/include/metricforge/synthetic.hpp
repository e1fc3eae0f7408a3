#pragma once

// Deterministic synthetic models, vocabularies and records. Values depend
// only on the seed (no std::*_distribution, whose output is
// implementation-defined), so fixtures are identical across toolchains.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "metricforge/encoder.hpp"
#include "metricforge/model_format.hpp"
#include "metricforge/tokenizer.hpp"

namespace metricforge::synthetic {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 24 random bits.
  float unit() { return static_cast<float>(engine_() >> 40) * 0x1p-24f; }
  float uniform(float lo, float hi) { return lo + (hi - lo) * unit(); }
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

struct WeightScale {
  float weight = 0.5f;  // uniform(-w, w) / sqrt(fan_in) for matrices
  float bias = 0.1f;
  float gain_jitter = 0.1f;
  float head_bias = 0.5f;  // final head bias
};

inline std::vector<float> random_values(Rng& rng, std::size_t n, float lo, float hi) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

/// Random tensors for every name in the architecture contract.
inline std::vector<TensorInput> random_model(const ModelManifest& m, std::uint64_t seed, DType dtype = DType::kF32,
                                             WeightScale scale = {}) {
  Rng rng(seed);
  std::vector<TensorInput> tensors;
  for (const auto& req : required_tensors(m)) {
    const auto n = static_cast<std::size_t>(element_count(req.shape));
    std::vector<float> values;
    const bool is_bias = req.name.ends_with(".b") || req.name.ends_with(".b1") || req.name.ends_with(".b2");
    const bool is_gain = req.name.ends_with(".g");
    const bool is_norm_bias = req.name.find(".norm") != std::string::npos && req.name.ends_with(".b");
    const bool is_final_head_bias = req.name == "head." + std::to_string(m.head_hidden.size()) + ".b";
    if (is_gain) {
      values = random_values(rng, n, 1.0f - scale.gain_jitter, 1.0f + scale.gain_jitter);
    } else if (is_final_head_bias) {
      values.assign(n, scale.head_bias);
    } else if (is_bias || is_norm_bias) {
      values = random_values(rng, n, -scale.bias, scale.bias);
    } else if (req.name.starts_with("emb.")) {
      values = random_values(rng, n, -1.0f, 1.0f);
    } else {
      const float bound = scale.weight * std::sqrt(3.0f / static_cast<float>(req.shape.front()));
      values = random_values(rng, n, -bound, bound);
    }
    tensors.push_back(make_tensor(req.name, req.shape, values, dtype));
  }
  return tensors;
}

/// The 64-entry fixture vocabulary.
inline std::vector<std::string> fixture_vocab_tokens() {
  std::vector<std::string> tokens(std::begin(Vocabulary::kSpecials), std::end(Vocabulary::kSpecials));
  const std::string marker(kWordMarker);
  tokens.push_back(marker);
  for (char c = 'a'; c <= 'z'; ++c) tokens.emplace_back(1, c);
  for (const char* w : {"hello", "he", "hi", "Hello", "Hallo", "Howdy", "world", "Welt", "the", "a", "cat", "dog",
                        "is", "on", "mat", "good", "bad", "day", "Tag", "gut", "der", "die", "das", "H", "W", "T"}) {
    tokens.push_back(marker + w);
  }
  for (const char* piece : {"llo", "ing", "er", "en", ".", ","}) tokens.emplace_back(piece);
  return tokens;
}

inline void write_vocab(const std::vector<std::string>& tokens, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& t : tokens) out << t << '\n';
  if (!out) raise(ErrorCode::kIo, "cannot write vocabulary '" + path.string() + "'");
}

/// Tiny fixture architecture: vocab 64, d_model 16, 2 heads, 2 layers, d_ffn 32.
inline ModelManifest tiny_manifest(MetricKind kind, NormStyle norm = NormStyle::kPost) {
  ModelManifest m;
  m.like = kind;
  m.vocab_size = 64;
  m.d_model = 16;
  m.n_heads = 2;
  m.n_layers = 2;
  m.d_ffn = 32;
  m.max_position = 64;
  m.norm_style = norm;
  m.head_hidden = {16};
  return m;
}

/// Random small architecture (d_model <= 32, layers <= 3).
inline ModelManifest random_manifest(Rng& rng, MetricKind kind) {
  static constexpr std::uint32_t kDims[] = {4, 8, 12, 16, 24, 32};
  ModelManifest m;
  m.like = kind;
  m.d_model = kDims[rng.below(std::size(kDims))];
  std::vector<std::uint32_t> heads;
  for (std::uint32_t h = 1; h <= 4; ++h) {
    if (m.d_model % h == 0) heads.push_back(h);
  }
  m.n_heads = heads[rng.below(heads.size())];
  m.n_layers = 1 + static_cast<std::uint32_t>(rng.below(3));
  m.d_ffn = m.d_model * (1 + static_cast<std::uint32_t>(rng.below(3)));
  m.vocab_size = 64;
  m.max_position = 48;
  m.norm_style = rng.below(2) ? NormStyle::kPre : NormStyle::kPost;
  const auto hidden = rng.below(3);
  for (std::uint64_t i = 0; i < hidden; ++i) m.head_hidden.push_back(4 + static_cast<std::uint32_t>(rng.below(13)));
  return m;
}

/// Space-separated random words drawn from the fixture vocabulary (plus the
/// occasional out-of-vocabulary character).
inline std::string random_sentence(Rng& rng, std::size_t max_words) {
  static const std::vector<std::string> kWords = {"hello", "hi", "Hello", "Hallo", "Howdy", "world", "Welt", "the",
                                                  "a", "cat", "dog", "is", "on", "mat", "good", "bad", "day", "Tag",
                                                  "gut", "der", "die", "das", "going", "better", "Zebra", "xyz",
                                                  "q!", "ok.", "yes,", "über"};
  const auto n = rng.below(max_words + 1);
  std::string out;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += kWords[rng.below(kWords.size())];
  }
  return out;
}

inline EvalRecord random_record(Rng& rng, MetricKind kind, std::size_t max_words = 12) {
  EvalRecord r;
  for (Field f : required_fields(kind)) {
    auto text = random_sentence(rng, max_words);
    switch (f) {
      case Field::kSource: r.source = std::move(text); break;
      case Field::kTranslation: r.translation = std::move(text); break;
      case Field::kReference: r.reference = std::move(text); break;
    }
  }
  return r;
}

/// A scorable model whose payload is at least `target_bytes`, dominated by
/// a large token-embedding table.
inline ModelManifest large_manifest(std::uint64_t target_bytes) {
  ModelManifest m = tiny_manifest(MetricKind::kCometQe);
  m.d_model = 64;
  m.n_heads = 4;
  m.d_ffn = 128;
  m.vocab_size = static_cast<std::uint32_t>(target_bytes / (4ull * m.d_model) + 1);
  return m;
}

/// Fast fill for large synthetic models: embeddings get cheap pseudo-random
/// values, everything else comes from random_model's initialisation.
inline std::vector<TensorInput> large_model(const ModelManifest& m, std::uint64_t seed) {
  ModelManifest small = m;
  small.vocab_size = 64;
  auto tensors = random_model(small, seed);
  std::uint64_t state = seed * 0x9E3779B97F4A7C15ull + 1;
  std::vector<float> table(static_cast<std::size_t>(m.vocab_size) * m.d_model);
  for (auto& v : table) {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    v = static_cast<float>(static_cast<std::int32_t>(state >> 40) - (1 << 23)) * 0x1p-23f;
  }
  for (auto& t : tensors) {
    if (t.name == "emb.tok") t = make_tensor("emb.tok", {m.vocab_size, m.d_model}, table);
  }
  return tensors;
}

}  // namespace metricforge::synthetic
