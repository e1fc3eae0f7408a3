#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metricforge/evaluator.hpp"
#include "metricforge/model_format.hpp"
#include "metricforge/registry.hpp"
#include "metricforge/synthetic.hpp"

namespace metricforge::cli {
namespace {

namespace fs = std::filesystem;

struct EvalArgs {
  std::string model;
  std::string vocab;
  std::string src, mt, ref;
  bool use_stdin = false;
  std::string average = "skip";
  std::string like;
  bool fp16 = false;
  std::size_t mini_batch = 128;
  std::size_t maxi_batch = 8;
  bool no_sort = false;
  std::size_t workers = 1;
  std::string out_path;
  bool eager = false;
  bool quiet = false;
  int precision = 4;
  std::size_t max_length = 512;
  std::string registry_file;
};

struct BenchArgs {
  std::string model;
  std::string vocab;
  std::string input;
  std::size_t synthetic = 1000;
  std::size_t repeats = 3;
  bool fp16 = false;
  bool validate = false;
  std::size_t mini_batch = 128;
  std::size_t workers = 1;
  std::uint64_t seed = 1;
  std::string registry_file;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_usage_code(ErrorCode code) {
  return code == ErrorCode::kUnknownName || code == ErrorCode::kKindMismatch || code == ErrorCode::kInvalidConfig;
}

std::string format_score(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

Registry make_registry(const std::string& registry_file, bool quiet, std::ostream& err) {
  auto settings = RegistrySettings::from_env();
  if (!quiet) settings.log = [&err](const std::string& msg) { err << "metricforge: " << msg << '\n'; };
  Registry registry(std::move(settings));
  if (!registry_file.empty()) registry.load_entries(registry_file);
  return registry;
}

std::size_t count_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open input file '" + path.string() + "'");
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

const char* flag_for(Field f) {
  switch (f) {
    case Field::kSource: return "--src";
    case Field::kTranslation: return "--mt";
    case Field::kReference: return "--ref";
  }
  return "?";
}

int run_eval(const EvalArgs& a, std::istream& in, std::ostream& out, std::ostream& err) {
  auto average = parse_average_mode(a.average);
  if (!average) throw UsageError("--average must be skip, append or only");
  std::optional<MetricKind> like;
  if (!a.like.empty()) {
    like = parse_metric_kind(a.like);
    if (!like) throw UsageError("--like must be comet-qe, comet or bleurt");
  }

  Registry registry = make_registry(a.registry_file, a.quiet, err);
  ResolvedModel resolved;
  try {
    resolved = registry.resolve(a.model);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnknownName) throw UsageError(e.what());
    throw;
  }
  const MetricKind kind = resolved.kind;

  const std::vector<Field> fields = required_fields(kind);
  const std::string* paths[3] = {&a.src, &a.mt, &a.ref};
  auto path_of = [&](Field f) -> const std::string& { return *paths[static_cast<int>(f)]; };
  const bool any_file = !a.src.empty() || !a.mt.empty() || !a.ref.empty();
  if (a.use_stdin && any_file) throw UsageError("--stdin cannot be combined with --src/--mt/--ref");
  if (!a.use_stdin) {
    if (!any_file) throw UsageError("give the input as field files (--src/--mt/--ref) or use --stdin");
    for (Field f : fields) {
      if (path_of(f).empty()) {
        throw UsageError(std::string("metric kind ") + std::string(like_name(kind)) + " needs " +
                         std::string(field_name(f)) + " input: missing " + flag_for(f));
      }
    }
    for (Field f : {Field::kSource, Field::kTranslation, Field::kReference}) {
      if (!path_of(f).empty() && std::find(fields.begin(), fields.end(), f) == fields.end() && !a.quiet) {
        err << "metricforge: ignoring " << flag_for(f) << ": metric kind " << like_name(kind) << " does not use it\n";
      }
    }
    std::optional<std::size_t> expected;
    Field first = fields.front();
    for (Field f : fields) {
      const std::size_t n = count_lines(path_of(f));
      if (!expected) {
        expected = n;
        first = f;
      } else if (n != *expected) {
        throw UsageError(std::string("line-count mismatch: ") + flag_for(first) + " has " + std::to_string(*expected) +
                         " lines but " + flag_for(f) + " has " + std::to_string(n) + " (first offending line " +
                         std::to_string(std::min(n, *expected) + 1) + ")");
      }
    }
  }

  EvaluatorConfig config;
  config.model = resolved.model.string();
  if (!a.vocab.empty()) {
    config.vocab = a.vocab;
  } else {
    config.vocab = resolved.vocab;
  }
  if (!config.vocab) throw UsageError("no vocabulary for model '" + a.model + "': pass --vocab");
  config.like = like;
  config.compute_mode = a.fp16 ? ComputeMode::kFp16 : ComputeMode::kFp32;
  config.max_len = a.max_length;
  config.batch.mini_batch = a.mini_batch;
  config.batch.maxi_batch_factor = a.maxi_batch;
  config.batch.sort_by_length = !a.no_sort;
  config.batch.workers = a.workers;
  config.average = *average;
  config.quiet = a.quiet;
  config.backing = a.eager ? Backing::kEager : Backing::kMmap;
  const auto evaluator = Evaluator::create(config);

  std::ofstream file_out;
  std::ostream* sink_stream = &out;
  if (!a.out_path.empty()) {
    file_out.open(a.out_path, std::ios::binary | std::ios::trunc);
    if (!file_out) throw Error(ErrorCode::kIo, "cannot open output '" + a.out_path + "'");
    sink_stream = &file_out;
  }
  std::ostream& dst = *sink_stream;

  RecordSource source;
  std::vector<std::ifstream> files;
  std::size_t line_no = 0;
  if (a.use_stdin) {
    source = [&]() -> std::optional<EvalRecord> {
      std::string line;
      if (!std::getline(in, line)) return std::nullopt;
      return parse_tsv_record(line, kind, line_no++);
    };
  } else {
    for (Field f : fields) {
      files.emplace_back(path_of(f), std::ios::binary);
      if (!files.back()) throw Error(ErrorCode::kIo, "cannot open '" + path_of(f) + "'");
    }
    source = [&]() -> std::optional<EvalRecord> {
      EvalRecord r;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        std::string line;
        if (!std::getline(files[i], line)) return std::nullopt;
        switch (fields[i]) {
          case Field::kSource: r.source = std::move(line); break;
          case Field::kTranslation: r.translation = std::move(line); break;
          case Field::kReference: r.reference = std::move(line); break;
        }
      }
      r.index = line_no++;
      return r;
    };
  }

  const bool stream_segments = *average != AverageMode::kOnly;
  const auto report = evaluator->evaluate_stream(source, [&](std::span<const double> scores) {
    if (!stream_segments) return;
    for (double s : scores) dst << format_score(s, a.precision) << '\n';
    dst.flush();
  });
  if (*average != AverageMode::kSkip) {
    const auto values = apply_average_mode(report, *average);
    dst << format_score(values.back(), a.precision) << '\n';
  }
  dst.flush();
  if (!dst) throw Error(ErrorCode::kIo, "write to output failed");
  return kExitOk;
}

int run_convert(const std::string& dir, const std::string& out_path, std::ostream& out) {
  const auto manifest = convert_interchange(dir, out_path);
  open_container(out_path, Backing::kMmap, true);
  out << to_hex(manifest.checksum) << '\n';
  return kExitOk;
}

int run_inspect(const std::string& path, std::ostream& out) {
  const auto c = open_container(path, Backing::kMmap, false);
  const auto& m = c.manifest();
  std::string fields;
  for (Field f : m.fields_required()) fields += (fields.empty() ? "" : ",") + std::string(1, field_letter(f));
  std::string hidden;
  for (auto w : m.head_hidden) hidden += (hidden.empty() ? "" : ",") + std::to_string(w);
  out << "format_version\t" << m.format_version << '\n'
      << "like\t" << manifest_name(m.like) << '\n'
      << "fields_required\t" << fields << '\n'
      << "vocab_size\t" << m.vocab_size << '\n'
      << "d_model\t" << m.d_model << '\n'
      << "n_heads\t" << m.n_heads << '\n'
      << "n_layers\t" << m.n_layers << '\n'
      << "d_ffn\t" << m.d_ffn << '\n'
      << "max_position\t" << m.max_position << '\n'
      << "norm_style\t" << (m.norm_style == NormStyle::kPre ? "PRE" : "POST") << '\n'
      << "head_hidden\t[" << hidden << "]\n"
      << "checksum\t" << to_hex(m.checksum) << '\n'
      << "payload_bytes\t" << c.payload().size() << '\n'
      << "tensors\t" << c.tensors().size() << '\n'
      << '\n'
      << "name\tdtype\tshape\toffset\tbytes\n";
  for (const auto& t : c.tensors()) {
    out << t.name << '\t' << dtype_name(t.dtype) << '\t' << shape_string(t.shape) << '\t' << t.offset << '\t'
        << t.nbytes << '\n';
  }
  return kExitOk;
}

double resident_mb() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      std::istringstream fields(line.substr(6));
      double kb = 0;
      fields >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int run_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  using Clock = std::chrono::steady_clock;
  if (a.repeats == 0) throw UsageError("--repeats must be positive");
  Registry registry = make_registry(a.registry_file, true, err);
  ResolvedModel resolved;
  try {
    resolved = registry.resolve(a.model);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnknownName) throw UsageError(e.what());
    throw;
  }
  EvaluatorConfig config;
  config.model = resolved.model.string();
  config.vocab = a.vocab.empty() ? resolved.vocab : std::optional<fs::path>(a.vocab);
  if (!config.vocab) throw UsageError("no vocabulary for model '" + a.model + "': pass --vocab");
  config.validate = a.validate;
  config.batch.mini_batch = a.mini_batch;
  config.batch.workers = a.workers;

  std::vector<EvalRecord> records;
  if (!a.input.empty()) {
    std::ifstream in(a.input, std::ios::binary);
    if (!in) throw UsageError("cannot open --input '" + a.input + "'");
    std::string line;
    while (std::getline(in, line)) records.push_back(parse_tsv_record(line, resolved.kind, records.size()));
  } else {
    synthetic::Rng rng(a.seed);
    for (std::size_t i = 0; i < a.synthetic; ++i) records.push_back(synthetic::random_record(rng, resolved.kind));
  }

  auto warmup = [&](Backing backing, double& rss_delta) {
    EvaluatorConfig c = config;
    c.backing = backing;
    const double before = resident_mb();
    const auto t0 = Clock::now();
    const auto ev = Evaluator::create(c);
    const std::chrono::duration<double> dt = Clock::now() - t0;
    rss_delta = resident_mb() - before;
    return dt.count();
  };

  struct Row {
    std::string metric, mode;
    double value;
    std::string unit;
  };
  std::vector<Row> rows;
  double discard_rss = 0;
  warmup(Backing::kMmap, discard_rss);
  for (Backing backing : {Backing::kMmap, Backing::kEager}) {
    std::vector<double> times, rss;
    for (std::size_t r = 0; r < a.repeats; ++r) {
      double delta = 0;
      times.push_back(warmup(backing, delta));
      rss.push_back(delta);
    }
    const std::string mode = backing == Backing::kMmap ? "MMAP" : "EAGER";
    rows.push_back({"warmup", mode, median(times), "s"});
    rows.push_back({"rss_delta", mode, median(rss), "MB"});
  }

  std::vector<ComputeMode> modes = {ComputeMode::kFp32};
  if (a.fp16) modes.push_back(ComputeMode::kFp16);
  for (ComputeMode mode : modes) {
    EvaluatorConfig c = config;
    c.compute_mode = mode;
    const auto ev = Evaluator::create(c);
    ev->evaluate(records);  // discard run
    double total = 0;
    for (std::size_t r = 0; r < a.repeats; ++r) {
      const auto t0 = Clock::now();
      ev->evaluate(records);
      const std::chrono::duration<double> dt = Clock::now() - t0;
      total += dt.count();
    }
    const double mean = total / static_cast<double>(a.repeats);
    rows.push_back({"throughput", mode == ComputeMode::kFp32 ? "FP32" : "FP16",
                    mean > 0 ? static_cast<double>(records.size()) / mean : 0.0, "records/s"});
  }

  out << "metric\tmode\tvalue\tunit\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", r.value);
    out << r.metric << '\t' << r.mode << '\t' << buf << '\t' << r.unit << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Score machine-translation output with encoder-based metrics", "metricforge-eval"};
  app.require_subcommand(0, 1);

  EvalArgs ea;
  app.add_option("-m,--model", ea.model, "Model container path or registered metric name");
  app.add_option("-v,--vocab", ea.vocab, "Vocabulary file (defaults to the registry entry's)");
  app.add_option("-s,--src", ea.src, "Source sentences, one per line");
  app.add_option("-t,--mt", ea.mt, "Translations (hypotheses), one per line");
  app.add_option("-r,--ref", ea.ref, "References, one per line");
  app.add_flag("--stdin", ea.use_stdin, "Read TAB-separated records from STDIN in (S,T,R) order");
  app.add_option("-a,--average", ea.average, "skip | append | only")->check(CLI::IsMember({"skip", "append", "only"}));
  app.add_option("--like", ea.like, "Expected metric kind: comet-qe | comet | bleurt");
  app.add_flag("--fp16", ea.fp16, "Half-precision storage, fp32 accumulation");
  app.add_option("--mini-batch", ea.mini_batch, "Records per mini-batch")->check(CLI::PositiveNumber);
  app.add_option("--maxi-batch", ea.maxi_batch, "Mini-batches per length-sorting window")->check(CLI::PositiveNumber);
  app.add_flag("--no-sort", ea.no_sort, "Do not sort by length inside a window");
  auto* workers = app.add_option("--workers", ea.workers, "Concurrent scoring workers")->check(CLI::PositiveNumber);
  app.add_option("--cpu-threads", ea.workers, "Alias of --workers")->check(CLI::PositiveNumber)->excludes(workers);
  app.add_option("-o,--out", ea.out_path, "Write scores here instead of STDOUT");
  app.add_flag("--eager", ea.eager, "Read the whole model into memory instead of mapping it");
  app.add_flag("-q,--quiet", ea.quiet, "Only errors on STDERR");
  app.add_option("--precision", ea.precision, "Digits after the decimal point")->check(CLI::Range(0, 17));
  app.add_option("--max-length", ea.max_length, "Token limit per sequence")->check(CLI::PositiveNumber);
  app.add_option("--registry", ea.registry_file, "Extra registry entries (JSON)");

  std::string convert_dir, convert_out;
  auto* convert = app.add_subcommand("convert", "Build a container from an interchange directory");
  convert->add_option("interchange-dir", convert_dir)->required();
  convert->add_option("out-path", convert_out)->required();

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Print a container's manifest and tensor table");
  inspect->add_option("model-path", inspect_path)->required();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Measure warmup, memory and throughput");
  bench->add_option("-m,--model", ba.model, "Model container path or registered name")->required();
  bench->add_option("-v,--vocab", ba.vocab, "Vocabulary file");
  bench->add_option("-i,--input", ba.input, "TSV input (default: synthetic records)");
  bench->add_option("--synthetic", ba.synthetic, "Number of synthetic records when no input is given");
  bench->add_option("--repeats", ba.repeats, "Timed runs after one discard run");
  bench->add_flag("--fp16", ba.fp16, "Also measure half-precision throughput");
  bench->add_flag("--validate", ba.validate, "Verify the payload checksum on every open");
  bench->add_option("--mini-batch", ba.mini_batch)->check(CLI::PositiveNumber);
  bench->add_option("--workers", ba.workers)->check(CLI::PositiveNumber);
  bench->add_option("--seed", ba.seed, "Seed for synthetic records");
  bench->add_option("--registry", ba.registry_file, "Extra registry entries (JSON)");

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("metricforge-eval");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*convert) return run_convert(convert_dir, convert_out, out);
    if (*inspect) return run_inspect(inspect_path, out);
    if (*bench) return run_bench(ba, out, err);
    if (ea.model.empty()) throw UsageError("--model is required");
    return run_eval(ea, in, out, err);
  } catch (const UsageError& e) {
    err << "metricforge-eval: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "metricforge-eval: " << e.what() << '\n';
    return is_usage_code(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "metricforge-eval: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace metricforge::cli
