#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "metricforge/encoder.hpp"
#include "metricforge/synthetic.hpp"
#include "naive_oracle.hpp"
#include "test_support.hpp"

namespace {

using namespace metricforge;
using testing_support::TempDir;

ModelContainer build(const TempDir& dir, const ModelManifest& m, const std::vector<TensorInput>& tensors,
                     const std::string& name = "m.mfrg") {
  write_container(m, tensors, dir / name);
  return open_container(dir / name);
}

Vocabulary vocab() { return Vocabulary::from_tokens(synthetic::fixture_vocab_tokens()); }

TEST(Encoder, FixtureForwardMatchesOracle) {
  TempDir dir;
  for (auto norm : {NormStyle::kPost, NormStyle::kPre}) {
    const auto m = synthetic::tiny_manifest(MetricKind::kCometQe, norm);
    const auto c = build(dir, m, synthetic::random_model(m, 21));
    const Encoder enc(c, ComputeMode::kFp32);
    const std::vector<TokenSequence> one = {{2, 40, 17, 3}};
    const auto batch = pad_batch(one);
    const auto states = enc.forward(batch);
    const auto want = oracle::forward(c, batch);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t e = 0; e < m.d_model; ++e) ASSERT_NEAR(states.at(0, t)[e], want[0][t][e], 1e-5);
    const auto pooled = pool(states, batch);
    for (std::size_t e = 0; e < m.d_model; ++e) EXPECT_NEAR(pooled[0][e], want[0][0][e], 1e-6);
  }
}

TEST(Encoder, FixtureScoresMatchOracleForEveryKind) {
  TempDir dir;
  const auto v = vocab();
  synthetic::Rng rng(77);
  for (auto kind : {MetricKind::kCometQe, MetricKind::kComet, MetricKind::kBleurt}) {
    const auto m = synthetic::tiny_manifest(kind);
    const auto c = build(dir, m, synthetic::random_model(m, 5 + static_cast<int>(kind)));
    const Encoder enc(c, ComputeMode::kFp32);
    for (int i = 0; i < 10; ++i) {
      const auto fields = encode_fields(v, synthetic::random_record(rng, kind), kind, m.max_position);
      ASSERT_NEAR(enc.score(fields), oracle::score(c, fields), 1e-5);
    }
  }
}

TEST(Encoder, PaddedBatchWithLongerNeighboursMatchesOracle) {
  TempDir dir;
  const auto m = synthetic::tiny_manifest(MetricKind::kBleurt, NormStyle::kPre);
  const auto c = build(dir, m, synthetic::random_model(m, 8));
  const Encoder enc(c, ComputeMode::kFp32);
  const std::vector<TokenSequence> seqs = {{2, 10, 3}, {2, 11, 12, 13, 14, 15, 16, 3}, {2, 4, 3}};
  const auto batch = pad_batch(seqs);
  const auto states = enc.forward(batch);
  const auto want = oracle::forward(c, batch);
  for (std::size_t r = 0; r < seqs.size(); ++r)
    for (std::size_t t = 0; t < seqs[r].size(); ++t)
      for (std::size_t e = 0; e < m.d_model; ++e) ASSERT_NEAR(states.at(r, t)[e], want[r][t][e], 1e-5);
}

TEST(Encoder, PaddingInvariance) {
  TempDir dir;
  const auto m = synthetic::tiny_manifest(MetricKind::kCometQe);
  const auto c = build(dir, m, synthetic::random_model(m, 4));
  const Encoder enc(c, ComputeMode::kFp32);
  const TokenSequence target = {2, 30, 31, 3};
  const std::vector<TokenSequence> alone = {target};
  std::vector<TokenSequence> crowd;
  for (int i = 0; i < 7; ++i) crowd.push_back(TokenSequence(6 + i * 3, 20 + i));
  crowd.insert(crowd.begin() + 3, target);
  const auto a = pool(enc.forward(pad_batch(alone)), pad_batch(alone))[0];
  const auto crowd_batch = pad_batch(crowd);
  const auto b = pool(enc.forward(crowd_batch), crowd_batch)[3];
  for (std::size_t e = 0; e < a.size(); ++e) EXPECT_LE(std::fabs(a[e] - b[e]), 1e-6);
}

TEST(Encoder, PoolingIsPermutationEquivariant) {
  TempDir dir;
  const auto m = synthetic::tiny_manifest(MetricKind::kCometQe);
  const auto c = build(dir, m, synthetic::random_model(m, 4));
  const Encoder enc(c, ComputeMode::kFp32);
  const std::vector<TokenSequence> fwd = {{2, 9, 3}, {2, 10, 11, 3}, {2, 12, 13, 14, 3}};
  const std::vector<TokenSequence> rev(fwd.rbegin(), fwd.rend());
  const auto bf = pad_batch(fwd);
  const auto br = pad_batch(rev);
  const auto pf = pool(enc.forward(bf), bf);
  const auto pr = pool(enc.forward(br), br);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(pf[i], pr[2 - i]);
}

TEST(Encoder, PoolRejectsEmptyRow) {
  PaddedBatch b;
  b.batch = 1;
  b.max_seq = 0;
  EncoderStates s{1, 0, 4, {}};
  EXPECT_THROW(pool(s, b), Error);
}

std::vector<TensorInput> zero_model(const ModelManifest& m, float final_bias) {
  std::vector<TensorInput> out;
  for (const auto& req : required_tensors(m)) {
    std::vector<float> v(element_count(req.shape), 0.0f);
    if (req.name.ends_with(".g")) std::fill(v.begin(), v.end(), 1.0f);
    if (req.name == "head." + std::to_string(m.head_hidden.size()) + ".b") v[0] = final_bias;
    out.push_back(make_tensor(req.name, req.shape, v));
  }
  return out;
}

TEST(Encoder, ZeroWeightsGiveZeroStatesAndBiasScore) {
  TempDir dir;
  for (auto kind : {MetricKind::kCometQe, MetricKind::kComet, MetricKind::kBleurt}) {
    const auto m = synthetic::tiny_manifest(kind);
    const auto c = build(dir, m, zero_model(m, 0.375f));
    for (auto mode : {ComputeMode::kFp32, ComputeMode::kFp16}) {
      const Encoder enc(c, mode);
      const std::vector<TokenSequence> seqs = {{2, 40, 41, 3}};
      const auto batch = pad_batch(seqs);
      for (float v : enc.forward(batch).values) EXPECT_EQ(v, 0.0f);
      std::vector<TokenSequence> fields(segment_count(kind), TokenSequence{2, 33, 3});
      EXPECT_EQ(enc.score(fields), 0.375f);
    }
  }
}

TEST(Encoder, HeadBiasPassthrough) {
  TempDir dir;
  auto m = synthetic::tiny_manifest(MetricKind::kComet);
  auto tensors = synthetic::random_model(m, 3);
  for (auto& t : tensors) {
    if (t.name.starts_with("head.")) {
      std::vector<float> v(element_count(t.shape), 0.0f);
      if (t.name == "head.1.b") v[0] = -1.25f;
      t = make_tensor(t.name, t.shape, v);
    }
  }
  const auto c = build(dir, m, tensors);
  const Encoder enc(c, ComputeMode::kFp32);
  synthetic::Rng rng(1);
  const auto v = vocab();
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(enc.score(encode_fields(v, synthetic::random_record(rng, MetricKind::kComet), MetricKind::kComet, 64)),
              -1.25f);
  }
}

TEST(Encoder, SoftmaxRowsSumToOneAndMaskedKeysGetZero) {
  synthetic::Rng rng(10);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<float> logits(n);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      logits[i] = rng.uniform(-30.0f, 30.0f);
      mask[i] = rng.below(3) != 0;
    }
    mask[rng.below(n)] = 1;
    softmax_masked(logits, mask);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) EXPECT_EQ(logits[i], 0.0f);
      EXPECT_TRUE(std::isfinite(logits[i]));
      sum += logits[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Encoder, LayerNormRowsAreStandardized) {
  synthetic::Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    const float scale = std::pow(10.0f, rng.uniform(-1.0f, 2.0f));
    std::vector<float> x(n), y(n);
    for (auto& v : x) v = rng.uniform(-scale, scale) + 3.0f;
    normalize_row(x, y);
    double in_mean = 0, in_var = 0;
    for (float v : x) in_mean += v;
    in_mean /= static_cast<double>(n);
    for (float v : x) in_var += (v - in_mean) * (v - in_mean);
    in_var /= static_cast<double>(n);
    // unit variance up to the epsilon shrink var / (var + eps)
    const double want_var = in_var / (in_var + 1e-5);
    double mean = 0, var = 0;
    for (float v : y) mean += v;
    mean /= static_cast<double>(n);
    for (float v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    EXPECT_LE(std::fabs(mean), 1e-6);
    EXPECT_NEAR(var, want_var, 1e-4);
    if (in_var > 0.1) EXPECT_NEAR(var, 1.0, 1e-4);
  }
  // constant row: the epsilon guard keeps it finite and zero
  std::vector<float> x(8, 2.5f), y(8);
  normalize_row(x, y);
  for (float v : y) EXPECT_EQ(v, 0.0f);
}

TEST(Encoder, GeluTanhApproximation) {
  for (float x : {-4.0f, -1.0f, -0.1f, 0.0f, 0.5f, 2.0f, 6.0f}) {
    const double want = oracle::gelu(x);
    EXPECT_NEAR(gelu(x), want, 1e-6 * (1 + std::fabs(want)));
  }
}

TEST(Encoder, InputErrors) {
  TempDir dir;
  const auto m = synthetic::tiny_manifest(MetricKind::kCometQe);
  const auto c = build(dir, m, synthetic::random_model(m, 4));
  const Encoder enc(c, ComputeMode::kFp32);
  const std::vector<TokenSequence> bad_id = {{2, 64, 3}};
  try {
    enc.forward(pad_batch(bad_id));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIdOutOfRange);
  }
  const std::vector<TokenSequence> too_long = {TokenSequence(65, 5)};
  try {
    enc.forward(pad_batch(too_long));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSequenceTooLong);
  }
  const std::vector<SentenceEmbedding> one = {SentenceEmbedding(16, 0.0f)};
  EXPECT_THROW(enc.score_embeddings(one), Error);
}

TEST(Encoder, MissingOrMisshapedTensorRejected) {
  TempDir dir;
  const auto m = synthetic::tiny_manifest(MetricKind::kCometQe);
  auto tensors = synthetic::random_model(m, 4);
  auto missing = tensors;
  missing.erase(missing.begin() + 5);
  const auto name = tensors[5].name;
  const auto c1 = build(dir, m, missing, "missing.mfrg");
  try {
    Encoder enc(c1, ComputeMode::kFp32);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingTensor);
    EXPECT_NE(std::string(e.what()).find(name), std::string::npos);
  }
  auto wrong = tensors;
  const std::vector<float> v(16 * 8, 0.0f);
  wrong[2] = make_tensor(wrong[2].name, {16, 8}, v);
  const auto c2 = build(dir, m, wrong, "wrong.mfrg");
  EXPECT_THROW(Encoder(c2, ComputeMode::kFp32), Error);
}

TEST(Encoder, F16StoredWeightsMatchOracleOnRoundedValues) {
  TempDir dir;
  const auto m = synthetic::tiny_manifest(MetricKind::kComet, NormStyle::kPre);
  const auto c = build(dir, m, synthetic::random_model(m, 12, DType::kF16));
  const Encoder enc(c, ComputeMode::kFp32);
  synthetic::Rng rng(2);
  const auto v = vocab();
  for (int i = 0; i < 5; ++i) {
    const auto fields = encode_fields(v, synthetic::random_record(rng, MetricKind::kComet), MetricKind::kComet, 64);
    EXPECT_NEAR(enc.score(fields), oracle::score(c, fields), 1e-5);
  }
}

TEST(Encoder, Fp16ModeStaysCloseToFp32) {
  TempDir dir;
  const auto m = synthetic::tiny_manifest(MetricKind::kCometQe);
  const auto c = build(dir, m, synthetic::random_model(m, 13));
  const Encoder a(c, ComputeMode::kFp32);
  const Encoder b(c, ComputeMode::kFp16);
  synthetic::Rng rng(3);
  const auto v = vocab();
  for (int i = 0; i < 20; ++i) {
    const auto fields = encode_fields(v, synthetic::random_record(rng, MetricKind::kCometQe), MetricKind::kCometQe, 64);
    const float fb = b.score(fields);
    EXPECT_LE(std::fabs(a.score(fields) - fb), 5e-2);
    EXPECT_EQ(fb, round_to_half(fb)) << "fp16 scores are stored as binary16";
  }
}

TEST(Encoder, NoNonFiniteOutputsOnFuzzedInputs) {
  TempDir dir;
  synthetic::Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto kind = static_cast<MetricKind>(rng.below(3));
    const auto m = synthetic::random_manifest(rng, kind);
    synthetic::WeightScale scale;
    scale.weight = rng.uniform(0.1f, 3.0f);
    const auto c = build(dir, m, synthetic::random_model(m, trial, DType::kF32, scale), "f" + std::to_string(trial));
    for (auto mode : {ComputeMode::kFp32, ComputeMode::kFp16}) {
      const Encoder enc(c, mode);
      std::vector<std::vector<TokenSequence>> records;
      for (int i = 0; i < 10; ++i) {
        std::vector<TokenSequence> fields;
        for (std::size_t s = 0; s < segment_count(kind); ++s) {
          TokenSequence seq(1 + rng.below(m.max_position));
          for (auto& id : seq) id = static_cast<TokenId>(rng.below(m.vocab_size));
          fields.push_back(seq);
        }
        records.push_back(fields);
      }
      for (float s : enc.score_batch(records)) ASSERT_TRUE(std::isfinite(s));
    }
  }
}

TEST(Encoder, ScoreBatchEqualsSingleScores) {
  TempDir dir;
  const auto m = synthetic::tiny_manifest(MetricKind::kComet);
  const auto c = build(dir, m, synthetic::random_model(m, 6));
  const Encoder enc(c, ComputeMode::kFp32);
  synthetic::Rng rng(4);
  const auto v = vocab();
  std::vector<std::vector<TokenSequence>> records;
  for (int i = 0; i < 12; ++i)
    records.push_back(encode_fields(v, synthetic::random_record(rng, MetricKind::kComet), MetricKind::kComet, 64));
  const auto batch = enc.score_batch(records);
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(batch[i], enc.score(records[i]));
}

}  // namespace
