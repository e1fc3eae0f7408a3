#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "metricforge/batcher.hpp"

namespace {

using namespace metricforge;

// Brute-force comparator oracle: within each window, index a precedes b iff
// it is longer, or equally long with a smaller index.
std::vector<std::size_t> expected_order(const std::vector<std::size_t>& lengths, const BatchConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t start = 0; start < lengths.size(); start += cfg.window()) {
    std::vector<std::size_t> win;
    for (std::size_t i = start; i < std::min(lengths.size(), start + cfg.window()); ++i) win.push_back(i);
    if (cfg.sort_by_length) {
      for (std::size_t i = 0; i < win.size(); ++i)
        for (std::size_t j = i + 1; j < win.size(); ++j) {
          const auto a = win[i], b = win[j];
          const bool b_first = lengths[b] > lengths[a] || (lengths[b] == lengths[a] && b < a);
          if (b_first) std::swap(win[i], win[j]);
        }
    }
    out.insert(out.end(), win.begin(), win.end());
  }
  return out;
}

TEST(Batcher, SortsByDescendingLengthWithIndexTieBreak) {
  const std::vector<std::size_t> lengths = {3, 9, 9, 1};
  BatchConfig cfg;
  cfg.mini_batch = 2;
  cfg.maxi_batch_factor = 2;
  const auto plan = plan_batches(lengths, cfg);
  EXPECT_EQ(plan.order, (std::vector<std::size_t>{1, 2, 0, 3}));
  EXPECT_EQ(plan.batches, (std::vector<std::vector<std::size_t>>{{1, 2}, {0, 3}}));
}

TEST(Batcher, RestoreOrderInvertsThePermutation) {
  BatchPlan plan;
  plan.order = {1, 2, 0, 3};
  const std::vector<char> scored = {'a', 'b', 'c', 'd'};
  EXPECT_EQ(restore_order<char>(scored, plan), (std::vector<char>{'c', 'a', 'b', 'd'}));
  const std::vector<char> short_list = {'a'};
  EXPECT_THROW(restore_order<char>(short_list, plan), Error);
}

TEST(Batcher, UnsortedKeepsInputOrder) {
  const std::vector<std::size_t> lengths = {3, 9, 9, 1, 5};
  BatchConfig cfg;
  cfg.mini_batch = 2;
  cfg.sort_by_length = false;
  const auto plan = plan_batches(lengths, cfg);
  EXPECT_EQ(plan.order, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(plan.batches.size(), 3u);
}

TEST(Batcher, EmptyInput) {
  const std::vector<std::size_t> none;
  const auto plan = plan_batches(none, BatchConfig{});
  EXPECT_TRUE(plan.batches.empty());
  EXPECT_TRUE(plan.order.empty());
}

TEST(Batcher, RejectsZeroSizes) {
  const std::vector<std::size_t> l = {1};
  BatchConfig cfg;
  cfg.mini_batch = 0;
  EXPECT_THROW(plan_batches(l, cfg), Error);
  cfg = {};
  cfg.maxi_batch_factor = 0;
  EXPECT_THROW(plan_batches(l, cfg), Error);
  cfg = {};
  cfg.workers = 0;
  EXPECT_THROW(plan_batches(l, cfg), Error);
}

TEST(Batcher, RandomizedPlanProperties) {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::size_t> lengths(rng() % 200);
    for (auto& l : lengths) l = 1 + rng() % 12;
    BatchConfig cfg;
    cfg.mini_batch = 1 + rng() % 9;
    cfg.maxi_batch_factor = 1 + rng() % 4;
    cfg.sort_by_length = rng() % 2;
    const auto plan = plan_batches(lengths, cfg);
    ASSERT_EQ(plan.order, expected_order(lengths, cfg));
    // bijection and batch coverage
    std::vector<std::size_t> sorted = plan.order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(lengths.size());
    std::iota(iota.begin(), iota.end(), 0);
    ASSERT_EQ(sorted, iota);
    std::size_t total = 0;
    std::vector<std::size_t> flat;
    for (const auto& b : plan.batches) {
      ASSERT_FALSE(b.empty());
      ASSERT_LE(b.size(), cfg.mini_batch);
      total += b.size();
      flat.insert(flat.end(), b.begin(), b.end());
    }
    ASSERT_EQ(total, lengths.size());
    ASSERT_EQ(flat, plan.order);
    // deterministic
    ASSERT_EQ(plan_batches(lengths, cfg).batches, plan.batches);
    // window never below a mini-batch
    ASSERT_GE(cfg.window(), cfg.mini_batch);
    // restore_order is the inverse
    std::vector<std::size_t> scored(plan.order.size());
    for (std::size_t k = 0; k < scored.size(); ++k) scored[k] = plan.order[k] * 10;
    const auto restored = restore_order<std::size_t>(scored, plan);
    for (std::size_t i = 0; i < restored.size(); ++i) ASSERT_EQ(restored[i], i * 10);
  }
}

TEST(Batcher, PaddedBatchMaskMatchesLengths) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TokenSequence> seqs(1 + rng() % 10);
    for (auto& s : seqs) {
      s.resize(1 + rng() % 15);
      for (auto& id : s) id = 5 + static_cast<TokenId>(rng() % 50);
    }
    const auto b = pad_batch(seqs);
    std::size_t longest = 0;
    for (const auto& s : seqs) longest = std::max(longest, s.size());
    ASSERT_EQ(b.max_seq, longest);
    ASSERT_EQ(b.batch, seqs.size());
    for (std::size_t r = 0; r < seqs.size(); ++r) {
      ASSERT_EQ(b.row_length(r), seqs[r].size());
      const auto mask = b.row_mask(r);
      const auto ids = b.row_ids(r);
      for (std::size_t j = 0; j < b.max_seq; ++j) {
        ASSERT_EQ(mask[j] == 1, ids[j] != Vocabulary::kPad);
        ASSERT_EQ(mask[j], j < seqs[r].size() ? 1 : 0);  // prefix-contiguous
      }
    }
  }
}

TEST(Batcher, PadRejectsOverlongSequences) {
  const std::vector<TokenSequence> seqs = {TokenSequence(9, 5)};
  EXPECT_THROW(pad_batch(seqs, 8), Error);
  EXPECT_NO_THROW(pad_batch(seqs, 9));
}

}  // namespace
