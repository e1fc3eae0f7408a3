#include "metricforge/c_api.h"

#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "metricforge/evaluator.hpp"
#include "metricforge/registry.hpp"

struct mf_evaluator {
  std::unique_ptr<metricforge::Evaluator> impl;
};

namespace {

thread_local int g_last_code = MF_OK;
thread_local std::string g_last_message;

int fail(int code, std::string message) {
  g_last_code = code;
  g_last_message = std::move(message);
  return code;
}

int succeed() {
  g_last_code = MF_OK;
  g_last_message.clear();
  return MF_OK;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const metricforge::Error& e) {
    return fail(static_cast<int>(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(static_cast<int>(metricforge::ErrorCode::kInvalidConfig), std::string("invalid config: ") + e.what());
  } catch (const std::exception& e) {
    return fail(MF_ERR_INTERNAL, e.what());
  }
}

metricforge::EvaluatorConfig parse_config(const char* text) {
  using metricforge::ErrorCode;
  const auto j = nlohmann::json::parse(text);
  if (!j.is_object()) metricforge::raise(ErrorCode::kInvalidConfig, "config must be a JSON object");
  static const std::set<std::string> kKeys = {"model_file", "vocab_file", "like",       "quiet",
                                              "fp16",       "cpu_threads", "mini_batch", "maxi_batch",
                                              "max_length", "average",    "eager"};
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) metricforge::raise(ErrorCode::kInvalidConfig, "unknown keyword argument '" + key + "'");
  }
  metricforge::EvaluatorConfig c;
  c.model = j.at("model_file").get<std::string>();
  if (j.contains("vocab_file") && !j["vocab_file"].is_null()) c.vocab = j["vocab_file"].get<std::string>();
  if (j.contains("like") && !j["like"].is_null()) c.like = metricforge::metric_kind_or_throw(j["like"].get<std::string>());
  c.quiet = j.value("quiet", false);
  c.compute_mode = j.value("fp16", false) ? metricforge::ComputeMode::kFp16 : metricforge::ComputeMode::kFp32;
  c.batch.workers = j.value("cpu_threads", std::size_t{1});
  c.batch.mini_batch = j.value("mini_batch", c.batch.mini_batch);
  c.batch.maxi_batch_factor = j.value("maxi_batch", c.batch.maxi_batch_factor);
  c.max_len = j.value("max_length", c.max_len);
  c.backing = j.value("eager", false) ? metricforge::Backing::kEager : metricforge::Backing::kMmap;
  const auto avg = j.value("average", std::string("skip"));
  auto mode = metricforge::parse_average_mode(avg);
  if (!mode) metricforge::raise(ErrorCode::kInvalidConfig, "average must be skip, append or only; got '" + avg + "'");
  c.average = *mode;
  return c;
}

}  // namespace

extern "C" {

int mf_evaluator_create(const char* config_json, mf_evaluator** out) {
  if (!config_json || !out) return fail(MF_ERR_INVALID_ARGUMENT, "null argument to mf_evaluator_create");
  *out = nullptr;
  return guarded([&] {
    const auto config = parse_config(config_json);
    metricforge::Registry registry;
    auto impl = metricforge::Evaluator::create(
        config, [&registry](const std::string& name) { return registry.resolve(name); });
    *out = new mf_evaluator{std::move(impl)};
    return succeed();
  });
}

int mf_evaluator_evaluate(mf_evaluator* ev, const char* const* lines, size_t n_lines, double* scores,
                          size_t capacity, size_t* n_written) {
  if (!ev || !ev->impl || (n_lines && (!lines || !scores)) || !n_written) {
    return fail(MF_ERR_INVALID_ARGUMENT, "null argument to mf_evaluator_evaluate");
  }
  *n_written = 0;
  if (capacity < n_lines) return fail(MF_ERR_BUFFER_TOO_SMALL, "score buffer smaller than the number of lines");
  return guarded([&] {
    std::vector<std::string> text(lines, lines + n_lines);
    const auto report = ev->impl->evaluate_lines(text);
    std::copy(report.segment_scores.begin(), report.segment_scores.end(), scores);
    *n_written = report.segment_scores.size();
    return succeed();
  });
}

int mf_evaluator_apply_average(const mf_evaluator* ev, const double* scores, size_t n_scores, double* out,
                               size_t capacity, size_t* n_written) {
  if (!ev || !ev->impl || (n_scores && !scores) || !n_written) {
    return fail(MF_ERR_INVALID_ARGUMENT, "null argument to mf_evaluator_apply_average");
  }
  *n_written = 0;
  return guarded([&] {
    const auto report = metricforge::make_report(std::vector<double>(scores, scores + n_scores));
    const auto values = metricforge::apply_average_mode(report, ev->impl->config().average);
    if (values.size() > capacity || (!values.empty() && !out)) {
      return fail(MF_ERR_BUFFER_TOO_SMALL, "output buffer needs " + std::to_string(values.size()) + " slots");
    }
    std::copy(values.begin(), values.end(), out);
    *n_written = values.size();
    return succeed();
  });
}

int mf_evaluator_kind(const mf_evaluator* ev, const char** like) {
  if (!ev || !ev->impl || !like) return fail(MF_ERR_INVALID_ARGUMENT, "null argument to mf_evaluator_kind");
  *like = metricforge::like_name(ev->impl->kind()).data();
  return succeed();
}

void mf_evaluator_destroy(mf_evaluator* ev) { delete ev; }

int mf_last_error_code(void) { return g_last_code; }

const char* mf_last_error_message(void) { return g_last_message.c_str(); }

}  // extern "C"
