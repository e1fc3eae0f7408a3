#pragma once

// Plain-text subword vocabulary and greedy longest-match segmentation.
//
// Vocabulary file: UTF-8, one token per LF-terminated line, id = zero-based
// line number. The first five lines must be <pad> <unk> <s> </s> <sep>.
// Word-initial pieces carry the U+2581 marker, as in SentencePiece.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "metricforge/error.hpp"
#include "metricforge/metric_kind.hpp"

namespace metricforge {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";  // U+2581

/// One scoring unit. Which fields must be present depends on the metric kind.
struct EvalRecord {
  std::optional<std::string> source;
  std::optional<std::string> translation;
  std::optional<std::string> reference;
  std::size_t index = 0;

  const std::optional<std::string>& field(Field f) const {
    switch (f) {
      case Field::kSource: return source;
      case Field::kTranslation: return translation;
      case Field::kReference: return reference;
    }
    return source;
  }
};

/// Throws kMissingField naming the first absent field required by `kind`.
inline void check_record(const EvalRecord& record, MetricKind kind) {
  for (Field f : required_fields(kind)) {
    if (!record.field(f)) {
      raise(ErrorCode::kMissingField, "record " + std::to_string(record.index) + ": missing " +
                                          std::string(field_name(f)) + " field required by metric kind " +
                                          std::string(like_name(kind)));
    }
  }
}

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kSep = 4;
  static constexpr TokenId kNumSpecial = 5;

  static constexpr std::string_view kSpecials[kNumSpecial] = {"<pad>", "<unk>", "<s>", "</s>", "<sep>"};

  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    if (tokens.empty()) raise(ErrorCode::kEmptyVocab, "vocabulary is empty");
    for (TokenId i = 0; i < kNumSpecial; ++i) {
      if (static_cast<std::size_t>(i) >= tokens.size() || tokens[i] != kSpecials[i]) {
        raise(ErrorCode::kBadSpecials, "vocabulary line " + std::to_string(i + 1) + " must be '" +
                                           std::string(kSpecials[i]) + "'");
      }
    }
    Vocabulary v;
    v.by_text_.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i].empty()) raise(ErrorCode::kEmptyVocab, "vocabulary line " + std::to_string(i + 1) + " is empty");
      if (!v.by_text_.emplace(tokens[i], static_cast<TokenId>(i)).second) {
        raise(ErrorCode::kDuplicateToken, "duplicate vocabulary token '" + tokens[i] + "' at line " +
                                              std::to_string(i + 1));
      }
      if (i >= kNumSpecial) v.max_token_bytes_ = std::max(v.max_token_bytes_, tokens[i].size());
    }
    v.tokens_ = std::move(tokens);
    return v;
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::kNotFound, "cannot open vocabulary '" + path.string() + "'");
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    if (tokens.empty()) raise(ErrorCode::kEmptyVocab, "vocabulary '" + path.string() + "' is empty");
    try {
      return from_tokens(std::move(tokens));
    } catch (const Error& e) {
      raise(e.code(), path.string() + ": " + e.what());
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  /// Non-special tokens only; special ids never match text.
  std::optional<TokenId> find(std::string_view piece) const {
    auto it = by_text_.find(piece);
    if (it == by_text_.end() || it->second < kNumSpecial) return std::nullopt;
    return it->second;
  }

  std::size_t max_token_bytes() const { return max_token_bytes_; }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> by_text_;
  std::size_t max_token_bytes_ = 0;
};

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

/// Trims, collapses whitespace runs, and prefixes every word with U+2581.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 8);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
    if (i == text.size()) break;
    out += kWordMarker;
    while (i < text.size() && !is_ascii_space(text[i])) out.push_back(text[i++]);
  }
  return out;
}

inline std::size_t utf8_char_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  return 1;
}

/// Greedy longest-match segmentation, left to right. Characters that start
/// no vocabulary piece become a single UNK each.
inline TokenSequence encode(const Vocabulary& vocab, std::string_view text) {
  const std::string norm = normalize_text(text);
  const std::string_view s(norm);
  TokenSequence ids;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t longest = std::min(vocab.max_token_bytes(), s.size() - pos);
    bool matched = false;
    for (std::size_t len = longest; len > 0; --len) {
      if (auto id = vocab.find(s.substr(pos, len))) {
        ids.push_back(*id);
        pos += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      ids.push_back(Vocabulary::kUnk);
      pos += std::min(utf8_char_length(static_cast<unsigned char>(s[pos])), s.size() - pos);
    }
  }
  return ids;
}

/// Lengths of the (T, R) content kept in a joint sequence with `budget`
/// content slots: the longer side loses a token first, ties cut R.
inline std::pair<std::size_t, std::size_t> joint_truncation(std::size_t t_len, std::size_t r_len, std::size_t budget) {
  while (t_len + r_len > budget) {
    if (t_len > r_len) {
      --t_len;
    } else {
      --r_len;
    }
  }
  return {t_len, r_len};
}

inline TokenSequence wrap_single(const TokenSequence& content, std::size_t max_len) {
  const std::size_t keep = std::min(content.size(), max_len - 2);
  TokenSequence seq;
  seq.reserve(keep + 2);
  seq.push_back(Vocabulary::kBos);
  seq.insert(seq.end(), content.begin(), content.begin() + static_cast<std::ptrdiff_t>(keep));
  seq.push_back(Vocabulary::kEos);
  return seq;
}

inline std::size_t min_sequence_length(MetricKind kind) { return kind == MetricKind::kBleurt ? 3 : 2; }

/// Builds the token sequences a metric kind consumes:
///   COMET_QE -> [BOS S EOS], [BOS T EOS]
///   COMET    -> [BOS S EOS], [BOS T EOS], [BOS R EOS]
///   BLEURT   -> [BOS T SEP R EOS]
inline std::vector<TokenSequence> encode_fields(const Vocabulary& vocab, const EvalRecord& record, MetricKind kind,
                                                std::size_t max_len) {
  check_record(record, kind);
  if (max_len < min_sequence_length(kind)) {
    raise(ErrorCode::kInvalidConfig, "max_len " + std::to_string(max_len) + " too small for metric kind " +
                                         std::string(like_name(kind)));
  }
  std::vector<TokenSequence> out;
  if (kind == MetricKind::kBleurt) {
    const auto t = encode(vocab, *record.translation);
    const auto r = encode(vocab, *record.reference);
    const auto [t_keep, r_keep] = joint_truncation(t.size(), r.size(), max_len - 3);
    TokenSequence seq;
    seq.reserve(t_keep + r_keep + 3);
    seq.push_back(Vocabulary::kBos);
    seq.insert(seq.end(), t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t_keep));
    seq.push_back(Vocabulary::kSep);
    seq.insert(seq.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(r_keep));
    seq.push_back(Vocabulary::kEos);
    out.push_back(std::move(seq));
    return out;
  }
  for (Field f : required_fields(kind)) out.push_back(wrap_single(encode(vocab, *record.field(f)), max_len));
  return out;
}

}  // namespace metricforge
