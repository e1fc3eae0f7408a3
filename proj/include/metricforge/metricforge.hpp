#pragma once

#include "metricforge/batcher.hpp"
#include "metricforge/encoder.hpp"
#include "metricforge/error.hpp"
#include "metricforge/evaluator.hpp"
#include "metricforge/half.hpp"
#include "metricforge/metric_kind.hpp"
#include "metricforge/model_format.hpp"
#include "metricforge/registry.hpp"
#include "metricforge/tokenizer.hpp"
