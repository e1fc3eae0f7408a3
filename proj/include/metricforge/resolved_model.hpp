#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "metricforge/metric_kind.hpp"

namespace metricforge {

/// Local artifacts for one model, as produced by a resolver.
struct ResolvedModel {
  std::filesystem::path model;
  std::optional<std::filesystem::path> vocab;
  MetricKind kind = MetricKind::kCometQe;
};

/// Maps a model name or path to local files.
using ModelResolver = std::function<ResolvedModel(const std::string&)>;

}  // namespace metricforge
