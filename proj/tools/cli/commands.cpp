#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <new>
#include <sstream>

#include "suites.hpp"
#include "usema/attention.hpp"
#include "usema/checkpoint.hpp"
#include "usema/config.hpp"
#include "usema/dataset.hpp"
#include "usema/dispersion.hpp"
#include "usema/errors.hpp"
#include "usema/ops.hpp"
#include "usema/tensor_io.hpp"
#include "usema/train.hpp"

namespace usema::cli {
namespace fs = std::filesystem;
namespace {

constexpr const char* kVersion = "0.1.0";
// Shortest wall time of one timed repeat; fast kernels are looped to reach it.
constexpr double kMinRepeatSeconds = 0.05;

using Lines = std::vector<std::pair<std::string, std::string>>;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Plain-text run manifest, one "key = value" per line. Written before any
// result; finish_manifest appends the completion time.
void write_manifest(const fs::path& dir, const std::string& command, const Lines& lines) {
  std::ostringstream s;
  s << "tool = usema " << kVersion << "\ncommand = " << command << "\nout = " << dir.string()
    << "\n";
  for (const auto& [k, v] : lines) s << k << " = " << v << "\n";
  s << "started = " << utc_now() << "\n";
  write_text(dir / "manifest.txt", s.str());
}

void finish_manifest(const fs::path& dir) {
  std::ofstream out(dir / "manifest.txt", std::ios::binary | std::ios::app);
  out << "finished = " << utc_now() << "\n";
  if (!out) throw DataError("cannot update " + (dir / "manifest.txt").string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

fs::path index_of(const std::string& data) {
  const fs::path p(data);
  return fs::is_directory(p) ? p / "index.txt" : p;
}

template <typename V>
std::string join(const std::vector<V>& values) {
  std::ostringstream s;
  for (std::size_t i = 0; i < values.size(); ++i) s << (i ? "," : "") << values[i];
  return s.str();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

int run_synth(const SynthArgs& args) {
  SynthOptions opts{parse_synth_kind(args.kind), args.seed, args.count, args.size};
  const Dataset data = synth_dataset(opts);
  make_dir(args.out);
  write_manifest(args.out, "synth",
                 {{"kind", args.kind}, {"seed", std::to_string(args.seed)},
                  {"count", std::to_string(args.count)}, {"size", std::to_string(args.size)},
                  {"index", "index.txt"}});
  save_dataset(args.out, data);
  finish_manifest(args.out);
  return kOk;
}

int run_train(const TrainArgs& args) {
  TrainConfig cfg = load_config(args.config);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (args.epochs >= 0) cfg.epochs = args.epochs;
  cfg.validate();
  const Dataset train_set = load_dataset(fs::path(args.data) / "train" / "index.txt");
  const Dataset val_set = load_dataset(fs::path(args.data) / "val" / "index.txt");

  const fs::path out(args.out);
  make_dir(out);
  write_manifest(out, "train",
                 {{"config", args.config}, {"data", args.data},
                  {"seed", std::to_string(cfg.seed)}, {"epochs", std::to_string(cfg.epochs)},
                  {"train_samples", std::to_string(train_set.size())},
                  {"val_samples", std::to_string(val_set.size())},
                  {"metrics", "metrics.csv"}, {"checkpoint", "checkpoint"}});
  write_text(out / "config.txt", config_text(cfg));

  std::vector<EpochRecord> history;
  const auto start = std::chrono::steady_clock::now();
  auto on_epoch = [&](const EpochRecord& r) {
    history.push_back(r);
    write_text(out / "metrics.csv", history_csv(history));
    if (!args.quiet) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::fprintf(stderr, "epoch %lld lr %.3e loss %.4f val_dsc %.4f val_nsd %.4f (%.0fs)\n",
                   static_cast<long long>(r.epoch), r.lr, r.train_loss, r.val_dsc, r.val_nsd,
                   secs);
    }
  };
  write_text(out / "metrics.csv", history_csv(history));
  TrainResult result = train(cfg, train_set, val_set, on_epoch);
  save_checkpoint(out / "checkpoint", *result.net, cfg);
  finish_manifest(out);
  if (!args.quiet && !result.history.empty()) {
    std::fprintf(stderr, "final val_dsc %.4f after %zu epochs%s\n", result.history.back().val_dsc,
                 result.history.size(), result.reached_target ? " (target reached)" : "");
  }
  return kOk;
}

int run_eval(const EvalArgs& args) {
  for (const auto& m : args.metrics) {
    if (m != "dsc" && m != "nsd" && m != "f1") {
      throw ConfigError("unknown metric '" + m + "' (expected dsc, nsd or f1)");
    }
  }
  const LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
  const Dataset data = load_dataset(index_of(args.data));
  data.validate();
  const auto& model = ck.net->config();
  const Shape& s = data.samples.front().image.shape();
  if (s[0] != model.in_channels) {
    throw ManifestError("checkpoint expects " + std::to_string(model.in_channels) +
                        " input channels, data has " + std::to_string(s[0]));
  }
  if (data.label_count() > model.classes) {
    throw ManifestError("data labels exceed the checkpoint's " + std::to_string(model.classes) +
                        " classes");
  }
  try {
    model.validate_input(s[1], s[2]);
  } catch (const ConfigError& e) {
    throw ManifestError(std::string("data does not fit the checkpoint: ") + e.what());
  }

  const auto reports = evaluate(*ck.net, data, ck.config.nsd_tau);
  auto field = [](const MetricReport& r, const std::string& m) {
    return m == "dsc" ? r.dsc : m == "nsd" ? r.nsd : r.f1;
  };
  std::ostringstream csv;
  csv << "sample," << join(args.metrics) << "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    csv << i;
    for (const auto& m : args.metrics) csv << "," << fmt("%.6f", field(reports[i], m));
    csv << "\n";
  }
  const MetricReport agg = mean_report(reports);
  csv << "mean";
  for (const auto& m : args.metrics) csv << "," << fmt("%.6f", field(agg, m));
  csv << "\n";
  if (args.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(args.out, csv.str());
  }
  return kOk;
}

int run_verify(const VerifyArgs& args) {
  std::vector<std::string> suites;
  if (args.suite == "all") {
    suites = verify::suite_names();
  } else {
    suites.push_back(args.suite);
  }
  for (const auto& name : suites) {
    const auto result = verify::run_suite(name, args.seed);
    result.print(std::cout);
    if (const auto* bad = result.first_failure()) {
      std::cerr << "verify: " << name << " check '" << bad->name << "' failed: max error "
                << bad->error << " > " << bad->tolerance << "\n";
      return kVerifyFailed;
    }
  }
  return kOk;
}

int run_bench(const BenchArgs& args) {
  if (args.repeats < 3) throw ConfigError("bench: --repeats must be at least 3");
  if (args.dim < 1 || args.window < 1) throw ConfigError("bench: --d and --w must be positive");
  for (const auto& k : args.kinds) {
    if (k != "full" && k != "window" && k != "sema") {
      throw ConfigError("bench: unknown kind '" + k + "' (expected full, window or sema)");
    }
  }
  NoGradGuard no_grad;
  Rng rng(args.seed);
  std::ostringstream csv;
  csv << "kind,n,median_seconds\n";
  const float scale = 1.0f / std::sqrt(static_cast<float>(args.dim));
  for (const auto& kind : args.kinds) {
    for (const auto n : args.lengths) {
      if (n < 1) throw ConfigError("bench: lengths must be positive");
      try {
        auto draw = [&] {
          Tensor<float> t({1, n, args.dim});
          for (auto& v : t.data()) v = static_cast<float>(rng.normal());
          return constant(std::move(t));
        };
        const auto q = draw(), k = draw(), v = draw();
        auto call = [&] {
          if (kind == "full") return attention::full_attention(q, k, v, 1, scale);
          if (kind == "window") return attention::window_attention(q, k, v, 1, args.window, scale);
          return attention::sema_attention(q, k, v, 1, args.window, scale);
        };
        using clock = std::chrono::steady_clock;
        auto seconds_since = [](clock::time_point t0) {
          return std::chrono::duration<double>(clock::now() - t0).count();
        };
        // Warm-up call, then enough calls per repeat to fill kMinRepeatSeconds.
        auto t0 = clock::now();
        call();
        const double once = seconds_since(t0);
        const auto iters = static_cast<std::int64_t>(
            std::max(1.0, std::ceil(kMinRepeatSeconds / std::max(once, 1e-9))));
        std::vector<double> times;
        for (std::int64_t r = 0; r < args.repeats; ++r) {
          t0 = clock::now();
          for (std::int64_t i = 0; i < iters; ++i) call();
          times.push_back(seconds_since(t0) / static_cast<double>(iters));
        }
        std::sort(times.begin(), times.end());
        const std::size_t mid = times.size() / 2;
        const double median =
            times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
        csv << kind << "," << n << "," << fmt("%.9g", median) << "\n";
      } catch (const std::bad_alloc&) {
        csv << kind << "," << n << ",oom\n";
      }
    }
  }
  if (args.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(args.out, csv.str());
  }
  return kOk;
}

namespace {

// Per-head attention matrices of recorded [2, n, d] activations (Q then K).
std::vector<dispersion::Report> activation_reports(const Tensor<double>& qk, std::int64_t heads,
                                                   const dispersion::StatsOptions& opts) {
  if (qk.rank() != 3 || qk.dim(0) != 2) {
    throw DataError("activations must have shape [2, n, d], got " + shape_str(qk.shape()));
  }
  const std::int64_t n = qk.dim(1), d = qk.dim(2);
  if (heads < 1 || d % heads != 0) {
    throw DataError("activation width " + std::to_string(d) + " not divisible into " +
                    std::to_string(heads) + " heads");
  }
  const std::int64_t hd = d / heads;
  std::vector<dispersion::Report> reports;
  for (std::int64_t h = 0; h < heads; ++h) {
    Tensor<double> q({n, hd}), k({n, hd});
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t c = 0; c < hd; ++c) {
        q[r * hd + c] = qk[r * d + h * hd + c];
        k[r * hd + c] = qk[(n + r) * d + h * hd + c];
      }
    reports.push_back(dispersion::attention_stats(dispersion::attention_matrix(q, k), opts));
  }
  return reports;
}

}  // namespace

int run_dispersion(const DispersionArgs& args) {
  dispersion::StatsOptions opts;
  opts.band = args.band;
  const fs::path out(args.out);
  make_dir(out);
  std::vector<dispersion::Report> reports;
  if (args.mode == "random") {
    if (!std::is_sorted(args.lengths.begin(), args.lengths.end())) {
      throw ConfigError("dispersion: --n must be ascending");
    }
    write_manifest(out, "dispersion",
                   {{"mode", "random"}, {"n", join(args.lengths)}, {"d", std::to_string(args.dim)},
                    {"seeds", std::to_string(args.seeds)}, {"seed", std::to_string(args.seed)},
                    {"band", fmt("%g", args.band)}, {"reports", "dispersion.csv"}});
    reports = dispersion::random_scan(args.lengths, args.dim, args.seeds, args.seed, opts);
  } else if (args.mode == "activations") {
    std::int64_t heads = 1;
    Tensor<double> qk;
    if (!args.activations.empty()) {
      write_manifest(out, "dispersion",
                     {{"mode", "activations"}, {"activations", args.activations},
                      {"band", fmt("%g", args.band)}, {"reports", "dispersion.csv"}});
      qk = load_tensor<double>(args.activations);
    } else {
      if (args.checkpoint.empty() || args.data.empty()) {
        throw ConfigError("dispersion: activations mode needs --activations or --checkpoint with --data");
      }
      write_manifest(out, "dispersion",
                     {{"mode", "activations"}, {"checkpoint", args.checkpoint},
                      {"data", args.data}, {"band", fmt("%g", args.band)},
                      {"activations", "activations.usem"}, {"reports", "dispersion.csv"}});
      LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
      Dataset data = load_dataset(index_of(args.data));
      data.samples.resize(1);
      ck.net->capture_bottleneck(true);
      predict(*ck.net, data, 1);
      const auto& captured = ck.net->bottleneck_qk();
      if (!captured) throw DataError("dispersion: no bottleneck activations recorded");
      const auto& [q, k] = *captured;
      const std::int64_t n = q.dim(1), d = q.dim(2);
      qk = Tensor<double>({2, n, d});
      for (std::int64_t i = 0; i < n * d; ++i) {
        qk[i] = q[i];
        qk[n * d + i] = k[i];
      }
      save_tensor((out / "activations.usem").string(), qk);
      const auto& cfg = ck.net->config();
      heads = cfg.heads_at(cfg.stages);
    }
    reports = activation_reports(qk, heads, opts);
  } else {
    throw ConfigError("dispersion: unknown mode '" + args.mode + "' (expected random or activations)");
  }
  write_text(out / "dispersion.csv", dispersion::reports_csv(reports));
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string name = args.mode == "random"
                                 ? "histogram_n" + std::to_string(reports[i].n) + ".csv"
                                 : "histogram_head" + std::to_string(i) + ".csv";
    write_text(out / name, dispersion::histogram_csv(reports[i].histogram));
  }
  finish_manifest(out);
  std::cout << dispersion::reports_csv(reports);
  return kOk;
}

}  // namespace usema::cli
