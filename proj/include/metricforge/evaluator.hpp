#pragma once

// Streaming scorer: tokenizer -> batcher -> encoder, with average-mode
// post-processing. This is the engine behind the CLI and the C boundary.

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "metricforge/batcher.hpp"
#include "metricforge/encoder.hpp"
#include "metricforge/error.hpp"
#include "metricforge/metric_kind.hpp"
#include "metricforge/model_format.hpp"
#include "metricforge/resolved_model.hpp"
#include "metricforge/tokenizer.hpp"

namespace metricforge {

enum class AverageMode { kSkip, kAppend, kOnly };

inline std::optional<AverageMode> parse_average_mode(std::string_view s) {
  if (s == "skip") return AverageMode::kSkip;
  if (s == "append") return AverageMode::kAppend;
  if (s == "only") return AverageMode::kOnly;
  return std::nullopt;
}

struct EvaluatorConfig {
  std::string model;  // container path or registry name
  std::optional<std::filesystem::path> vocab;
  std::optional<MetricKind> like;
  ComputeMode compute_mode = ComputeMode::kFp32;
  std::size_t max_len = 512;
  BatchConfig batch;
  AverageMode average = AverageMode::kSkip;
  bool quiet = false;
  Backing backing = Backing::kMmap;
  bool validate = true;
};

struct ScoreReport {
  std::vector<double> segment_scores;
  std::optional<double> system_score;  // absent for empty input
};

/// Kahan-compensated sum.
inline double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

inline std::optional<double> system_score(std::span<const double> scores) {
  if (scores.empty()) return std::nullopt;
  return compensated_sum(scores) / static_cast<double>(scores.size());
}

inline ScoreReport make_report(std::vector<double> scores) {
  ScoreReport r;
  r.system_score = system_score(scores);
  r.segment_scores = std::move(scores);
  return r;
}

/// SKIP -> segments; ONLY -> [system]; APPEND -> segments + [system].
inline std::vector<double> apply_average_mode(const ScoreReport& report, AverageMode mode) {
  if (mode == AverageMode::kSkip) return report.segment_scores;
  if (!report.system_score) {
    raise(ErrorCode::kEmptyReport, "no segment scores to average (empty input)");
  }
  if (mode == AverageMode::kOnly) return {*report.system_score};
  std::vector<double> out = report.segment_scores;
  out.push_back(*report.system_score);
  return out;
}

/// Splits one TSV line into the fields `kind` requires, in (S, T, R) order
/// restricted to that kind. Any other column count is an error.
inline EvalRecord parse_tsv_record(std::string_view line, MetricKind kind, std::size_t index) {
  const auto fields = required_fields(kind);
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (cols.size() != fields.size()) {
    std::string expect;
    for (Field f : fields) expect += (expect.empty() ? "" : "\\t") + std::string(1, field_letter(f));
    raise(ErrorCode::kColumnCount, "line " + std::to_string(index + 1) + " (record index " + std::to_string(index) +
                                       "): expected " +
                                       std::to_string(fields.size()) + " tab-separated columns (" + expect +
                                       ") for metric kind " + std::string(like_name(kind)) + ", got " +
                                       std::to_string(cols.size()));
  }
  EvalRecord r;
  r.index = index;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    std::string value(cols[i]);
    switch (fields[i]) {
      case Field::kSource: r.source = std::move(value); break;
      case Field::kTranslation: r.translation = std::move(value); break;
      case Field::kReference: r.reference = std::move(value); break;
    }
  }
  return r;
}

/// Returns the next record, or nullopt at end of stream.
using RecordSource = std::function<std::optional<EvalRecord>()>;

/// Receives segment scores (input order) each time a maxi-batch window completes.
using WindowSink = std::function<void(std::span<const double>)>;

class Evaluator {
 public:
  /// Opens the model and vocabulary and runs a one-record warmup. Names
  /// that are not existing files go through `resolver`.
  static std::unique_ptr<Evaluator> create(const EvaluatorConfig& config, const ModelResolver& resolver = {}) {
    config.batch.check();
    if (config.max_len == 0) raise(ErrorCode::kInvalidConfig, "max_len must be positive");
    ResolvedModel resolved;
    std::error_code ec;
    if (std::filesystem::is_regular_file(config.model, ec)) {
      resolved.model = config.model;
    } else if (resolver) {
      resolved = resolver(config.model);
    } else {
      raise(ErrorCode::kNotFound, "model '" + config.model + "' not found");
    }
    std::optional<std::filesystem::path> vocab_path = config.vocab ? config.vocab : resolved.vocab;
    if (!vocab_path) {
      raise(ErrorCode::kNotFound, "no vocabulary given for model '" + config.model + "'");
    }
    auto container = open_container(resolved.model, config.backing, config.validate);
    const MetricKind kind = container.manifest().like;
    if (config.like && *config.like != kind) {
      raise(ErrorCode::kKindMismatch, "requested metric kind " + std::string(like_name(*config.like)) +
                                          " but model '" + resolved.model.string() + "' is " +
                                          std::string(like_name(kind)));
    }
    auto vocab = Vocabulary::load(*vocab_path);
    if (vocab.size() > container.manifest().vocab_size) {
      raise(ErrorCode::kInvalidConfig, "vocabulary has " + std::to_string(vocab.size()) +
                                           " tokens but the model embeds only " +
                                           std::to_string(container.manifest().vocab_size));
    }
    std::unique_ptr<Evaluator> ev(
        new Evaluator(config, Encoder(std::move(container), config.compute_mode), std::move(vocab)));
    ev->warmup();
    return ev;
  }

  MetricKind kind() const { return encoder_.kind(); }
  const EvaluatorConfig& config() const { return config_; }
  const Encoder& encoder() const { return encoder_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t max_len() const { return max_len_; }

  /// Scores a stream window by window; `sink` (optional) sees each window's
  /// scores as soon as it completes. Fails fast on the first bad record.
  ScoreReport evaluate_stream(const RecordSource& next, const WindowSink& sink = {}) const {
    std::lock_guard<std::mutex> guard(mutex_);
    std::vector<double> all;
    std::vector<EvalRecord> window;
    const std::size_t window_size = config_.batch.window();
    std::size_t index = 0;
    bool done = false;
    while (!done) {
      window.clear();
      while (window.size() < window_size) {
        auto rec = next();
        if (!rec) {
          done = true;
          break;
        }
        rec->index = index++;
        check_record(*rec, kind());
        window.push_back(std::move(*rec));
      }
      if (window.empty()) break;
      const auto scores = score_window(window);
      if (sink) sink(scores);
      all.insert(all.end(), scores.begin(), scores.end());
    }
    return make_report(std::move(all));
  }

  ScoreReport evaluate(std::span<const EvalRecord> records) const {
    std::size_t i = 0;
    return evaluate_stream([&]() -> std::optional<EvalRecord> {
      if (i == records.size()) return std::nullopt;
      return records[i++];
    });
  }

  /// TAB-joined lines in the kind's column order.
  ScoreReport evaluate_lines(std::span<const std::string> lines) const {
    std::size_t i = 0;
    return evaluate_stream([&]() -> std::optional<EvalRecord> {
      if (i == lines.size()) return std::nullopt;
      auto r = parse_tsv_record(lines[i], kind(), i);
      ++i;
      return r;
    });
  }

 private:
  Evaluator(EvaluatorConfig config, Encoder encoder, Vocabulary vocab)
      : config_(std::move(config)),
        encoder_(std::move(encoder)),
        vocab_(std::move(vocab)),
        max_len_(std::min<std::size_t>(config_.max_len, encoder_.manifest().max_position)) {
    if (max_len_ < min_sequence_length(kind())) {
      raise(ErrorCode::kInvalidConfig, "max_len " + std::to_string(max_len_) + " is too short for metric kind " +
                                           std::string(like_name(kind())));
    }
  }

  void warmup() const {
    EvalRecord r;
    for (Field f : required_fields(kind())) {
      std::string text = "warmup";
      switch (f) {
        case Field::kSource: r.source = text; break;
        case Field::kTranslation: r.translation = text; break;
        case Field::kReference: r.reference = text; break;
      }
    }
    std::vector<std::vector<TokenSequence>> one{encode_fields(vocab_, r, kind(), max_len_)};
    encoder_.score_batch(one);
  }

  std::vector<double> score_window(std::span<const EvalRecord> window) const {
    std::vector<std::vector<TokenSequence>> encoded;
    std::vector<std::size_t> lengths;
    encoded.reserve(window.size());
    lengths.reserve(window.size());
    for (const auto& rec : window) {
      encoded.push_back(encode_fields(vocab_, rec, kind(), max_len_));
      std::size_t total = 0;
      for (const auto& s : encoded.back()) total += s.size();
      lengths.push_back(total);
    }
    // the window already bounds memory; plan it as a single maxi-batch
    BatchConfig cfg = config_.batch;
    cfg.maxi_batch_factor = (window.size() + cfg.mini_batch - 1) / cfg.mini_batch;
    if (cfg.maxi_batch_factor == 0) cfg.maxi_batch_factor = 1;
    const BatchPlan plan = plan_batches(lengths, cfg);

    std::vector<std::size_t> batch_start(plan.batches.size());
    for (std::size_t b = 1; b < plan.batches.size(); ++b) {
      batch_start[b] = batch_start[b - 1] + plan.batches[b - 1].size();
    }
    std::vector<double> scored(plan.size());
    auto run_batch = [&](std::size_t b) {
      std::vector<std::vector<TokenSequence>> records;
      records.reserve(plan.batches[b].size());
      for (std::size_t idx : plan.batches[b]) records.push_back(std::move(encoded[idx]));
      const auto scores = encoder_.score_batch(records);
      for (std::size_t k = 0; k < scores.size(); ++k) scored[batch_start[b] + k] = scores[k];
    };

    const std::size_t workers = std::min(config_.batch.workers, plan.batches.size());
    if (workers <= 1) {
      for (std::size_t b = 0; b < plan.batches.size(); ++b) run_batch(b);
    } else {
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t b = next++; b < plan.batches.size(); b = next++) {
            try {
              run_batch(b);
            } catch (...) {
              std::lock_guard<std::mutex> lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
      for (auto& t : pool) t.join();
      if (failure) std::rethrow_exception(failure);
    }
    return restore_order<double>(scored, plan);
  }

  EvaluatorConfig config_;
  Encoder encoder_;
  Vocabulary vocab_;
  std::size_t max_len_;
  mutable std::mutex mutex_;
};

}  // namespace metricforge
