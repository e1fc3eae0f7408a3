#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metricforge/error.hpp"

namespace metricforge {

/// Scoring topology of a model: reference-free QE over (S,T),
/// reference-based over (S,T,R), or a joint (T,R) pair.
enum class MetricKind { kCometQe, kComet, kBleurt };

enum class Field { kSource, kTranslation, kReference };

inline std::vector<Field> required_fields(MetricKind kind) {
  switch (kind) {
    case MetricKind::kCometQe: return {Field::kSource, Field::kTranslation};
    case MetricKind::kComet: return {Field::kSource, Field::kTranslation, Field::kReference};
    case MetricKind::kBleurt: return {Field::kTranslation, Field::kReference};
  }
  return {};
}

inline char field_letter(Field f) {
  switch (f) {
    case Field::kSource: return 'S';
    case Field::kTranslation: return 'T';
    case Field::kReference: return 'R';
  }
  return '?';
}

inline std::string_view field_name(Field f) {
  switch (f) {
    case Field::kSource: return "source";
    case Field::kTranslation: return "translation";
    case Field::kReference: return "reference";
  }
  return "?";
}

/// Manifest spelling (COMET_QE, COMET, BLEURT).
inline std::string_view manifest_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kCometQe: return "COMET_QE";
    case MetricKind::kComet: return "COMET";
    case MetricKind::kBleurt: return "BLEURT";
  }
  return "?";
}

/// User-facing spelling (comet-qe, comet, bleurt).
inline std::string_view like_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kCometQe: return "comet-qe";
    case MetricKind::kComet: return "comet";
    case MetricKind::kBleurt: return "bleurt";
  }
  return "?";
}

/// Accepts either spelling, case-insensitively, with '-' and '_' equivalent.
inline std::optional<MetricKind> parse_metric_kind(std::string_view text) {
  std::string norm;
  norm.reserve(text.size());
  for (char c : text) {
    norm.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (norm == "comet-qe") return MetricKind::kCometQe;
  if (norm == "comet") return MetricKind::kComet;
  if (norm == "bleurt") return MetricKind::kBleurt;
  return std::nullopt;
}

inline MetricKind metric_kind_or_throw(std::string_view text) {
  auto kind = parse_metric_kind(text);
  if (!kind) {
    raise(ErrorCode::kInvalidConfig,
          "unknown metric kind '" + std::string(text) + "' (expected comet-qe, comet or bleurt)");
  }
  return *kind;
}

}  // namespace metricforge
