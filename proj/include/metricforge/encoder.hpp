#pragma once

// Transformer encoder, first-token pooling and regression head.
//
// Weights and activations are held in the storage type (float or Half);
// every matmul, softmax and layer-norm reduction accumulates in float.
// Each sequence is computed in isolation, so a row's result does not depend
// on what else is in the batch or how much padding it carries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "metricforge/batcher.hpp"
#include "metricforge/error.hpp"
#include "metricforge/half.hpp"
#include "metricforge/metric_kind.hpp"
#include "metricforge/model_format.hpp"
#include "metricforge/tokenizer.hpp"

namespace metricforge {

enum class ComputeMode { kFp32, kFp16 };

inline constexpr float kLayerNormEpsilon = 1e-5f;

inline std::size_t feature_dim(MetricKind kind, std::size_t d_model) {
  switch (kind) {
    case MetricKind::kCometQe: return 4 * d_model;
    case MetricKind::kComet: return 6 * d_model;
    case MetricKind::kBleurt: return d_model;
  }
  return d_model;
}

/// Number of pooled embeddings the head consumes (one per encoded segment).
inline std::size_t segment_count(MetricKind kind) {
  switch (kind) {
    case MetricKind::kCometQe: return 2;
    case MetricKind::kComet: return 3;
    case MetricKind::kBleurt: return 1;
  }
  return 1;
}

struct TensorRequirement {
  std::string name;
  Shape shape;
};

/// Tensor-naming contract: every name and shape a container must provide.
inline std::vector<TensorRequirement> required_tensors(const ModelManifest& m) {
  const std::uint64_t d = m.d_model;
  std::vector<TensorRequirement> req;
  req.push_back({"emb.tok", {m.vocab_size, d}});
  req.push_back({"emb.pos", {m.max_position, d}});
  for (std::uint32_t i = 0; i < m.n_layers; ++i) {
    const std::string p = "layer." + std::to_string(i) + ".";
    for (const char* proj : {"q", "k", "v", "o"}) {
      req.push_back({p + "att." + proj + ".w", {d, d}});
      req.push_back({p + "att." + proj + ".b", {d}});
    }
    for (const char* norm : {"norm1", "norm2"}) {
      req.push_back({p + norm + ".g", {d}});
      req.push_back({p + norm + ".b", {d}});
    }
    req.push_back({p + "ffn.w1", {d, m.d_ffn}});
    req.push_back({p + "ffn.b1", {m.d_ffn}});
    req.push_back({p + "ffn.w2", {m.d_ffn, d}});
    req.push_back({p + "ffn.b2", {d}});
  }
  std::uint64_t in = feature_dim(m.like, d);
  for (std::size_t j = 0; j <= m.head_hidden.size(); ++j) {
    const std::uint64_t out = j < m.head_hidden.size() ? m.head_hidden[j] : 1;
    req.push_back({"head." + std::to_string(j) + ".w", {in, out}});
    req.push_back({"head." + std::to_string(j) + ".b", {out}});
    in = out;
  }
  return req;
}

inline void check_architecture(const ModelContainer& c) {
  for (const auto& r : required_tensors(c.manifest())) {
    if (!c.contains(r.name)) raise(ErrorCode::kMissingTensor, "model is missing tensor '" + r.name + "'");
    const auto view = c.tensor(r.name);
    if (view.shape() != r.shape) {
      raise(ErrorCode::kLengthMismatch, "tensor '" + r.name + "' has shape " + shape_string(view.shape()) +
                                            ", architecture needs " + shape_string(r.shape));
    }
  }
}

inline float gelu(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

/// In-place softmax over the positions where mask is 1; masked positions get
/// exactly zero weight. An all-masked row becomes all zeros.
inline void softmax_masked(std::span<float> logits, std::span<const std::uint8_t> mask) {
  float max_logit = -INFINITY;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (mask[j]) max_logit = std::max(max_logit, logits[j]);
  }
  float sum = 0.0f;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (mask[j]) {
      logits[j] = std::exp(logits[j] - max_logit);
      sum += logits[j];
    } else {
      logits[j] = 0.0f;
    }
  }
  if (sum > 0.0f) {
    for (std::size_t j = 0; j < logits.size(); ++j) logits[j] /= sum;
  }
}

/// (x - mean) / sqrt(var + eps), before gain and bias. A constant row maps to zeros.
inline void normalize_row(std::span<const float> x, std::span<float> out, float eps = kLayerNormEpsilon) {
  // double accumulation keeps the row mean below 1e-6 for offset inputs
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>((x[i] - mean) * inv);
}

namespace detail {

inline float load(float v) { return v; }
inline float load(Half v) { return to_float(v); }
inline void store(float& dst, float v) { dst = v; }
inline void store(Half& dst, float v) { dst = to_half(v); }

/// Weight tensor in storage type T. F32 tensors are viewed in place when T
/// is float; anything else is converted once at load.
template <typename T>
class Param {
 public:
  Param() = default;

  Param(const ModelContainer& c, const std::string& name) {
    const TensorView view = c.tensor(name);
    const auto& shape = view.shape();
    cols_ = shape.empty() ? 1 : static_cast<std::size_t>(shape.back());
    if constexpr (std::is_same_v<T, float>) {
      if (auto direct = view.as_f32()) {
        data_ = *direct;
        return;
      }
      owned_ = view.to_floats();
    } else {
      owned_.resize(view.size());
      if (view.dtype() == DType::kF16) {
        for (std::size_t i = 0; i < owned_.size(); ++i) {
          std::uint16_t bits = static_cast<std::uint16_t>(view.bytes()[2 * i] | view.bytes()[2 * i + 1] << 8);
          owned_[i] = Half{bits};
        }
      } else {
        for (std::size_t i = 0; i < owned_.size(); ++i) owned_[i] = to_half(view.at(i));
      }
    }
    data_ = owned_;
  }

  Param(const Param& other) : owned_(other.owned_), cols_(other.cols_) {
    data_ = owned_.empty() ? other.data_ : std::span<const T>(owned_);
  }
  Param& operator=(const Param& other) {
    if (this != &other) {
      owned_ = other.owned_;
      cols_ = other.cols_;
      data_ = owned_.empty() ? other.data_ : std::span<const T>(owned_);
    }
    return *this;
  }
  // moving a vector keeps its buffer, so data_ stays valid
  Param(Param&&) noexcept = default;
  Param& operator=(Param&&) noexcept = default;

  const T* data() const { return data_.data(); }
  std::size_t cols() const { return cols_; }
  float operator[](std::size_t i) const { return load(data_[i]); }

 private:
  std::vector<T> owned_;
  std::span<const T> data_;
  std::size_t cols_ = 0;
};

/// y[rows, out] = x[rows, in] * w[in, out] + b[out], float accumulation.
template <typename T>
void affine(const T* x, std::size_t rows, std::size_t in, const Param<T>& w, const Param<T>& b, T* y,
            std::vector<float>& acc) {
  const std::size_t out = w.cols();
  acc.resize(out);
  const T* wd = w.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    const T* xr = x + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const float xi = load(xr[i]);
      const T* wr = wd + i * out;
      for (std::size_t j = 0; j < out; ++j) acc[j] += xi * load(wr[j]);
    }
    T* yr = y + r * out;
    for (std::size_t j = 0; j < out; ++j) store(yr[j], acc[j] + b[j]);
  }
}

template <typename T>
struct LayerParams {
  Param<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Param<T> g1, b1, g2, b2;
  Param<T> w_ffn1, b_ffn1, w_ffn2, b_ffn2;
};

template <typename T>
struct Workspace {
  std::vector<T> x, h, q, k, v, ctx, attn, hidden, ffn;
  std::vector<float> row, normed, logits, acc;

  void reserve(std::size_t len, std::size_t d, std::size_t d_ffn) {
    for (auto* buf : {&x, &h, &q, &k, &v, &ctx, &attn, &ffn}) buf->resize(len * d);
    hidden.resize(len * d_ffn);
    row.resize(d);
    normed.resize(d);
    logits.resize(len);
  }
};

template <typename T>
class EncoderImpl {
 public:
  using value_type_tag = T;

  explicit EncoderImpl(const ModelContainer& c) : m_(c.manifest()) {
    tok_ = Param<T>(c, "emb.tok");
    pos_ = Param<T>(c, "emb.pos");
    for (std::uint32_t i = 0; i < m_.n_layers; ++i) {
      const std::string p = "layer." + std::to_string(i) + ".";
      LayerParams<T> l;
      l.wq = Param<T>(c, p + "att.q.w");
      l.bq = Param<T>(c, p + "att.q.b");
      l.wk = Param<T>(c, p + "att.k.w");
      l.bk = Param<T>(c, p + "att.k.b");
      l.wv = Param<T>(c, p + "att.v.w");
      l.bv = Param<T>(c, p + "att.v.b");
      l.wo = Param<T>(c, p + "att.o.w");
      l.bo = Param<T>(c, p + "att.o.b");
      l.g1 = Param<T>(c, p + "norm1.g");
      l.b1 = Param<T>(c, p + "norm1.b");
      l.g2 = Param<T>(c, p + "norm2.g");
      l.b2 = Param<T>(c, p + "norm2.b");
      l.w_ffn1 = Param<T>(c, p + "ffn.w1");
      l.b_ffn1 = Param<T>(c, p + "ffn.b1");
      l.w_ffn2 = Param<T>(c, p + "ffn.w2");
      l.b_ffn2 = Param<T>(c, p + "ffn.b2");
      layers_.push_back(std::move(l));
    }
    for (std::size_t j = 0; j <= m_.head_hidden.size(); ++j) {
      head_w_.emplace_back(c, "head." + std::to_string(j) + ".w");
      head_b_.emplace_back(c, "head." + std::to_string(j) + ".b");
    }
  }

  const ModelManifest& manifest() const { return m_; }

  /// Encodes one unpadded sequence; result is ws.x[len * d_model].
  void encode_sequence(std::span<const TokenId> ids, Workspace<T>& ws) const {
    const std::size_t d = m_.d_model;
    const std::size_t len = ids.size();
    if (len > m_.max_position) {
      raise(ErrorCode::kSequenceTooLong, "sequence of length " + std::to_string(len) + " exceeds max_position " +
                                             std::to_string(m_.max_position));
    }
    ws.reserve(len, d, m_.d_ffn);
    for (std::size_t t = 0; t < len; ++t) {
      const auto id = ids[t];
      if (id < 0 || static_cast<std::uint32_t>(id) >= m_.vocab_size) {
        raise(ErrorCode::kIdOutOfRange, "token id " + std::to_string(id) + " out of range for vocab_size " +
                                            std::to_string(m_.vocab_size));
      }
      for (std::size_t c = 0; c < d; ++c) {
        store(ws.x[t * d + c], tok_[static_cast<std::size_t>(id) * d + c] + pos_[t * d + c]);
      }
    }
    const bool pre = m_.norm_style == NormStyle::kPre;
    for (const auto& l : layers_) {
      const T* att_in = ws.x.data();
      if (pre) {
        norm_rows(ws.x.data(), len, l.g1, l.b1, ws.h.data(), ws);
        att_in = ws.h.data();
      }
      attention(att_in, len, l, ws);
      residual(ws.x.data(), ws.attn.data(), len, pre ? nullptr : &l.g1, pre ? nullptr : &l.b1, ws);

      const T* ffn_in = ws.x.data();
      if (pre) {
        norm_rows(ws.x.data(), len, l.g2, l.b2, ws.h.data(), ws);
        ffn_in = ws.h.data();
      }
      affine(ffn_in, len, d, l.w_ffn1, l.b_ffn1, ws.hidden.data(), ws.acc);
      for (auto& v : std::span(ws.hidden.data(), len * m_.d_ffn)) store(v, gelu(load(v)));
      affine(ws.hidden.data(), len, m_.d_ffn, l.w_ffn2, l.b_ffn2, ws.ffn.data(), ws.acc);
      residual(ws.x.data(), ws.ffn.data(), len, pre ? nullptr : &l.g2, pre ? nullptr : &l.b2, ws);
    }
  }

  /// Head over pooled embeddings, one per segment in kind order
  /// (QE: S,T; COMET: S,T,R; BLEURT: joint).
  float head(std::span<const T* const> emb, Workspace<T>& ws) const {
    const std::size_t d = m_.d_model;
    if (emb.size() != segment_count(m_.like)) {
      raise(ErrorCode::kMissingEmbedding, "metric kind " + std::string(like_name(m_.like)) + " needs " +
                                              std::to_string(segment_count(m_.like)) + " embeddings, got " +
                                              std::to_string(emb.size()));
    }
    std::vector<T> feat(feature_dim(m_.like, d));
    auto put = [&](std::size_t block, auto&& fn) {
      for (std::size_t c = 0; c < d; ++c) store(feat[block * d + c], fn(c));
    };
    auto at = [&](std::size_t seg, std::size_t c) { return load(emb[seg][c]); };
    switch (m_.like) {
      case MetricKind::kCometQe:  // emb = S, T
        put(0, [&](std::size_t c) { return at(1, c); });
        put(1, [&](std::size_t c) { return at(0, c); });
        put(2, [&](std::size_t c) { return at(1, c) * at(0, c); });
        put(3, [&](std::size_t c) { return std::fabs(at(1, c) - at(0, c)); });
        break;
      case MetricKind::kComet:  // emb = S, T, R
        put(0, [&](std::size_t c) { return at(1, c); });
        put(1, [&](std::size_t c) { return at(2, c); });
        put(2, [&](std::size_t c) { return at(1, c) * at(0, c); });
        put(3, [&](std::size_t c) { return at(1, c) * at(2, c); });
        put(4, [&](std::size_t c) { return std::fabs(at(1, c) - at(0, c)); });
        put(5, [&](std::size_t c) { return std::fabs(at(1, c) - at(2, c)); });
        break;
      case MetricKind::kBleurt:
        put(0, [&](std::size_t c) { return at(0, c); });
        break;
    }
    std::vector<T> cur = std::move(feat);
    std::vector<T> next;
    for (std::size_t j = 0; j < head_w_.size(); ++j) {
      const std::size_t in = cur.size();
      next.resize(head_w_[j].cols());
      affine(cur.data(), 1, in, head_w_[j], head_b_[j], next.data(), ws.acc);
      if (j + 1 < head_w_.size()) {
        for (auto& v : next) store(v, std::tanh(load(v)));
      }
      std::swap(cur, next);
    }
    return load(cur[0]);
  }

 private:
  void norm_rows(const T* x, std::size_t len, const Param<T>& g, const Param<T>& b, T* out, Workspace<T>& ws) const {
    const std::size_t d = m_.d_model;
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < d; ++c) ws.row[c] = load(x[t * d + c]);
      normalize_row(ws.row, ws.normed);
      for (std::size_t c = 0; c < d; ++c) store(out[t * d + c], ws.normed[c] * g[c] + b[c]);
    }
  }

  /// x += delta, followed by layer norm when gain/bias are given (post-norm).
  void residual(T* x, const T* delta, std::size_t len, const Param<T>* g, const Param<T>* b, Workspace<T>& ws) const {
    const std::size_t d = m_.d_model;
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < d; ++c) ws.row[c] = load(x[t * d + c]) + load(delta[t * d + c]);
      if (g) {
        normalize_row(ws.row, ws.normed);
        for (std::size_t c = 0; c < d; ++c) store(x[t * d + c], ws.normed[c] * (*g)[c] + (*b)[c]);
      } else {
        for (std::size_t c = 0; c < d; ++c) store(x[t * d + c], ws.row[c]);
      }
    }
  }

  void attention(const T* in, std::size_t len, const LayerParams<T>& l, Workspace<T>& ws) const {
    const std::size_t d = m_.d_model;
    const std::size_t heads = m_.n_heads;
    const std::size_t dh = d / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    affine(in, len, d, l.wq, l.bq, ws.q.data(), ws.acc);
    affine(in, len, d, l.wk, l.bk, ws.k.data(), ws.acc);
    affine(in, len, d, l.wv, l.bv, ws.v.data(), ws.acc);
    std::vector<std::uint8_t> all_valid(len, 1);
    std::vector<float> ctx(dh);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < len; ++i) {
        const T* qi = ws.q.data() + i * d + h * dh;
        for (std::size_t j = 0; j < len; ++j) {
          const T* kj = ws.k.data() + j * d + h * dh;
          float dot = 0.0f;
          for (std::size_t c = 0; c < dh; ++c) dot += load(qi[c]) * load(kj[c]);
          ws.logits[j] = dot * scale;
        }
        softmax_masked(std::span(ws.logits.data(), len), all_valid);
        std::fill(ctx.begin(), ctx.end(), 0.0f);
        for (std::size_t j = 0; j < len; ++j) {
          const T* vj = ws.v.data() + j * d + h * dh;
          const float p = ws.logits[j];
          for (std::size_t c = 0; c < dh; ++c) ctx[c] += p * load(vj[c]);
        }
        for (std::size_t c = 0; c < dh; ++c) store(ws.ctx[i * d + h * dh + c], ctx[c]);
      }
    }
    affine(ws.ctx.data(), len, d, l.wo, l.bo, ws.attn.data(), ws.acc);
  }

  ModelManifest m_;
  Param<T> tok_, pos_;
  std::vector<LayerParams<T>> layers_;
  std::vector<Param<T>> head_w_, head_b_;
};

}  // namespace detail

/// Encoder states for a padded batch: [batch * max_seq * d_model], row-major.
struct EncoderStates {
  std::size_t batch = 0;
  std::size_t max_seq = 0;
  std::size_t d_model = 0;
  std::vector<float> values;

  std::span<const float> at(std::size_t row, std::size_t pos) const {
    return {values.data() + (row * max_seq + pos) * d_model, d_model};
  }
};

using SentenceEmbedding = std::vector<float>;

/// First-token (BOS) pooling.
inline std::vector<SentenceEmbedding> pool(const EncoderStates& states, const PaddedBatch& batch) {
  std::vector<SentenceEmbedding> out;
  out.reserve(states.batch);
  for (std::size_t r = 0; r < states.batch; ++r) {
    if (batch.max_seq == 0 || batch.row_mask(r)[0] == 0) {
      raise(ErrorCode::kEmptyRow, "cannot pool row " + std::to_string(r) + ": it has no tokens");
    }
    const auto v = states.at(r, 0);
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

/// A loaded scoring model. Immutable and safe to share across threads; each
/// call allocates its own scratch.
class Encoder {
 public:
  Encoder(ModelContainer container, ComputeMode mode)
      : container_(std::move(container)), mode_(mode), impl_(make_impl(container_, mode)) {}

  const ModelManifest& manifest() const { return container_.manifest(); }
  MetricKind kind() const { return manifest().like; }
  ComputeMode mode() const { return mode_; }
  const ModelContainer& container() const { return container_; }

  EncoderStates forward(const PaddedBatch& batch) const {
    const std::size_t d = manifest().d_model;
    if (batch.max_seq > manifest().max_position) {
      raise(ErrorCode::kSequenceTooLong, "batch width " + std::to_string(batch.max_seq) + " exceeds max_position " +
                                             std::to_string(manifest().max_position));
    }
    EncoderStates out{batch.batch, batch.max_seq, d, std::vector<float>(batch.batch * batch.max_seq * d, 0.0f)};
    std::visit(
        [&](const auto& impl) {
          using T = typename std::remove_cvref_t<decltype(impl)>::value_type_tag;
          detail::Workspace<T> ws;
          for (std::size_t r = 0; r < batch.batch; ++r) {
            const std::size_t len = batch.row_length(r);
            if (len == 0) continue;
            impl.encode_sequence(batch.row_ids(r).first(len), ws);
            for (std::size_t i = 0; i < len * d; ++i) out.values[r * batch.max_seq * d + i] = detail::load(ws.x[i]);
          }
        },
        impl_);
    return out;
  }

  /// Regression head over pooled embeddings given in kind order.
  float score_embeddings(std::span<const SentenceEmbedding> embeddings) const {
    return std::visit(
        [&](const auto& impl) {
          using T = typename std::remove_cvref_t<decltype(impl)>::value_type_tag;
          std::vector<std::vector<T>> stored;
          std::vector<const T*> ptrs;
          for (const auto& e : embeddings) {
            if (e.size() != manifest().d_model) {
              raise(ErrorCode::kMissingEmbedding, "embedding has " + std::to_string(e.size()) + " values, expected " +
                                                      std::to_string(manifest().d_model));
            }
            std::vector<T> s(e.size());
            for (std::size_t i = 0; i < e.size(); ++i) detail::store(s[i], e[i]);
            stored.push_back(std::move(s));
          }
          for (const auto& s : stored) ptrs.push_back(s.data());
          detail::Workspace<T> ws;
          return impl.head(ptrs, ws);
        },
        impl_);
  }

  /// Scores one record given the sequences produced by encode_fields.
  float score(const std::vector<TokenSequence>& fields) const {
    const std::vector<TokenSequence> one[1] = {fields};
    return score_batch(one).front();
  }

  /// Scores a batch of records; the output is in input order. Each segment
  /// position is padded into its own PaddedBatch.
  std::vector<float> score_batch(std::span<const std::vector<TokenSequence>> records) const {
    const std::size_t segments = segment_count(kind());
    for (const auto& r : records) {
      if (r.size() != segments) {
        raise(ErrorCode::kMissingEmbedding, "metric kind " + std::string(like_name(kind())) + " needs " +
                                                std::to_string(segments) + " encoded segments, got " +
                                                std::to_string(r.size()));
      }
    }
    std::vector<PaddedBatch> batches;
    for (std::size_t s = 0; s < segments; ++s) {
      std::vector<const TokenSequence*> rows;
      rows.reserve(records.size());
      for (const auto& r : records) rows.push_back(&r[s]);
      batches.push_back(pad_batch(std::span<const TokenSequence* const>(rows), manifest().max_position,
                                  segment_role(s)));
    }
    return std::visit([&](const auto& impl) { return score_padded(impl, batches); }, impl_);
  }

 private:
  Segment segment_role(std::size_t s) const {
    switch (kind()) {
      case MetricKind::kBleurt: return Segment::kJoint;
      case MetricKind::kCometQe: return s == 0 ? Segment::kSource : Segment::kTranslation;
      case MetricKind::kComet:
        return s == 0 ? Segment::kSource : (s == 1 ? Segment::kTranslation : Segment::kReference);
    }
    return Segment::kTranslation;
  }

  template <typename Impl>
  std::vector<float> score_padded(const Impl& impl, const std::vector<PaddedBatch>& batches) const {
    using T = typename Impl::value_type_tag;
    const std::size_t d = manifest().d_model;
    const std::size_t rows = batches.empty() ? 0 : batches.front().batch;
    detail::Workspace<T> ws;
    // pooled[s][r * d ...]
    std::vector<std::vector<T>> pooled(batches.size(), std::vector<T>(rows * d));
    for (std::size_t s = 0; s < batches.size(); ++s) {
      const PaddedBatch& b = batches[s];
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t len = b.row_length(r);
        if (len == 0) raise(ErrorCode::kEmptyRow, "cannot pool row " + std::to_string(r) + ": it has no tokens");
        impl.encode_sequence(b.row_ids(r).first(len), ws);
        std::copy_n(ws.x.begin(), d, pooled[s].begin() + static_cast<std::ptrdiff_t>(r * d));
      }
    }
    std::vector<float> scores(rows);
    std::vector<const T*> emb(batches.size());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t s = 0; s < batches.size(); ++s) emb[s] = pooled[s].data() + r * d;
      scores[r] = impl.head(emb, ws);
    }
    return scores;
  }

  using Impl = std::variant<detail::EncoderImpl<float>, detail::EncoderImpl<Half>>;

  static Impl make_impl(const ModelContainer& c, ComputeMode mode) {
    check_manifest(c.manifest());
    check_architecture(c);
    if (mode == ComputeMode::kFp16) return Impl(std::in_place_type<detail::EncoderImpl<Half>>, c);
    return Impl(std::in_place_type<detail::EncoderImpl<float>>, c);
  }

  ModelContainer container_;
  ComputeMode mode_;
  Impl impl_;
};

}  // namespace metricforge
