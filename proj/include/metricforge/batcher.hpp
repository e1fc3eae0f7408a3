#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "metricforge/error.hpp"
#include "metricforge/tokenizer.hpp"

namespace metricforge {

struct BatchConfig {
  std::size_t mini_batch = 128;
  std::size_t maxi_batch_factor = 8;
  bool sort_by_length = true;
  std::size_t workers = 1;

  std::size_t window() const { return mini_batch * maxi_batch_factor; }

  void check() const {
    if (mini_batch == 0) raise(ErrorCode::kInvalidConfig, "mini_batch must be positive");
    if (maxi_batch_factor == 0) raise(ErrorCode::kInvalidConfig, "maxi_batch factor must be positive");
    if (workers == 0) raise(ErrorCode::kInvalidConfig, "workers must be positive");
  }
};

/// batches[b] lists input indices; order[k] is the input index scored at
/// position k (batches flattened in order).
struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> order;

  std::size_t size() const { return order.size(); }
};

inline BatchPlan plan_batches(std::span<const std::size_t> lengths, const BatchConfig& config) {
  config.check();
  BatchPlan plan;
  plan.order.resize(lengths.size());
  std::iota(plan.order.begin(), plan.order.end(), std::size_t{0});

  const std::size_t window = config.window();
  for (std::size_t start = 0; start < lengths.size(); start += window) {
    const std::size_t end = std::min(lengths.size(), start + window);
    const auto first = plan.order.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = plan.order.begin() + static_cast<std::ptrdiff_t>(end);
    if (config.sort_by_length) {
      std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
    }
    for (std::size_t b = start; b < end; b += config.mini_batch) {
      const std::size_t e = std::min(end, b + config.mini_batch);
      plan.batches.emplace_back(plan.order.begin() + static_cast<std::ptrdiff_t>(b),
                                plan.order.begin() + static_cast<std::ptrdiff_t>(e));
    }
  }
  return plan;
}

/// scored[k] belongs to input plan.order[k]; returns values in input order.
template <typename T>
std::vector<T> restore_order(std::span<const T> scored, const BatchPlan& plan) {
  if (scored.size() != plan.order.size()) {
    raise(ErrorCode::kCountMismatch, "restore_order: " + std::to_string(scored.size()) + " scores for a plan of " +
                                         std::to_string(plan.order.size()) + " records");
  }
  std::vector<T> out(scored.size());
  for (std::size_t k = 0; k < scored.size(); ++k) out[plan.order[k]] = scored[k];
  return out;
}

enum class Segment { kSource, kTranslation, kReference, kJoint };

/// Row-major [batch, max_seq] ids with a prefix-contiguous mask.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t max_seq = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;
  Segment segment = Segment::kTranslation;

  std::span<const TokenId> row_ids(std::size_t r) const { return {ids.data() + r * max_seq, max_seq}; }
  std::span<const std::uint8_t> row_mask(std::size_t r) const { return {mask.data() + r * max_seq, max_seq}; }

  std::size_t row_length(std::size_t r) const {
    const auto m = row_mask(r);
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
  }
};

/// Pads to the longest sequence. max_position == 0 disables the length check.
inline PaddedBatch pad_batch(std::span<const TokenSequence* const> sequences, std::size_t max_position = 0,
                             Segment segment = Segment::kTranslation) {
  PaddedBatch out;
  out.segment = segment;
  out.batch = sequences.size();
  for (const auto* s : sequences) {
    if (max_position && s->size() > max_position) {
      raise(ErrorCode::kSequenceTooLong, "sequence of length " + std::to_string(s->size()) +
                                             " exceeds max_position " + std::to_string(max_position));
    }
    out.max_seq = std::max(out.max_seq, s->size());
  }
  out.ids.assign(out.batch * out.max_seq, Vocabulary::kPad);
  out.mask.assign(out.batch * out.max_seq, 0);
  for (std::size_t r = 0; r < sequences.size(); ++r) {
    std::copy(sequences[r]->begin(), sequences[r]->end(), out.ids.begin() + static_cast<std::ptrdiff_t>(r * out.max_seq));
    std::fill_n(out.mask.begin() + static_cast<std::ptrdiff_t>(r * out.max_seq), sequences[r]->size(), 1);
  }
  return out;
}

inline PaddedBatch pad_batch(std::span<const TokenSequence> sequences, std::size_t max_position = 0,
                             Segment segment = Segment::kTranslation) {
  std::vector<const TokenSequence*> ptrs;
  ptrs.reserve(sequences.size());
  for (const auto& s : sequences) ptrs.push_back(&s);
  return pad_batch(std::span<const TokenSequence* const>(ptrs), max_position, segment);
}

}  // namespace metricforge
