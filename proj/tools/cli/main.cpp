#include <CLI11.hpp>

#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "commands.hpp"
#include "usema/errors.hpp"
#include "usema/train.hpp"

namespace {

using namespace usema::cli;

// Tensor buffers are large and short-lived. glibc would otherwise map and unmap
// them per allocation, paying page faults on every forward pass.
void keep_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const usema::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const usema::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const usema::DivergenceError& e) {
    std::cerr << "divergence at epoch " << e.epoch() << ": " << e.what() << "\n";
    return kDivergence;
  } catch (const usema::ManifestError& e) {
    std::cerr << "manifest error: " << e.what() << "\n";
    return kManifest;
  } catch (const usema::DimensionError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  keep_freed_memory();
  CLI::App app{"U-shaped SEMA segmentation toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0 = library default)")
      ->check(CLI::NonNegativeNumber);

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Write a synthetic dataset");
  cmd_synth->add_option("--kind", synth.kind, "shapes or global-context");
  cmd_synth->add_option("--seed", synth.seed);
  cmd_synth->add_option("--count", synth.count);
  cmd_synth->add_option("--size", synth.size);
  cmd_synth->add_option("--out", synth.out)->required();

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "Train a network");
  cmd_train->add_option("--config", train.config)->required();
  cmd_train->add_option("--data", train.data, "Directory with train/ and val/ index files")
      ->required();
  cmd_train->add_option("--out", train.out)->required();
  cmd_train->add_option("--seed", train.seed, "Overrides the config seed");
  cmd_train->add_option("--epochs", train.epochs, "Overrides the config epochs");
  cmd_train->add_flag("--quiet", train.quiet);

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  cmd_eval->add_option("--checkpoint", eval.checkpoint)->required();
  cmd_eval->add_option("--data", eval.data, "Index file or dataset directory")->required();
  cmd_eval->add_option("--metrics", eval.metrics)->delimiter(',');
  cmd_eval->add_option("--out", eval.out);

  VerifyArgs verify;
  auto* cmd_verify = app.add_subcommand("verify", "Run oracle and gradient suites");
  cmd_verify->add_option("--suite", verify.suite, "attention, mamba, grads, metrics or all");
  cmd_verify->add_option("--seed", verify.seed);

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench", "Time attention kernels across lengths");
  cmd_bench->add_option("--attn", bench.kinds, "full, window, sema")->delimiter(',');
  cmd_bench->add_option("--n", bench.lengths)->delimiter(',');
  cmd_bench->add_option("--d", bench.dim);
  cmd_bench->add_option("--w", bench.window);
  cmd_bench->add_option("--repeats", bench.repeats);
  cmd_bench->add_option("--seed", bench.seed);
  cmd_bench->add_option("--out", bench.out);

  DispersionArgs disp;
  auto* cmd_disp = app.add_subcommand("dispersion", "Attention-matrix dispersion statistics");
  cmd_disp->add_option("--mode", disp.mode, "random or activations");
  cmd_disp->add_option("--n", disp.lengths)->delimiter(',');
  cmd_disp->add_option("--d", disp.dim);
  cmd_disp->add_option("--seeds", disp.seeds);
  cmd_disp->add_option("--seed", disp.seed);
  cmd_disp->add_option("--band", disp.band);
  cmd_disp->add_option("--activations", disp.activations);
  cmd_disp->add_option("--checkpoint", disp.checkpoint);
  cmd_disp->add_option("--data", disp.data);
  cmd_disp->add_option("--out", disp.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }
  if (threads > 0) usema::set_worker_threads(threads);

  if (*cmd_synth) return guarded([&] { return run_synth(synth); });
  if (*cmd_train) return guarded([&] { return run_train(train); });
  if (*cmd_eval) return guarded([&] { return run_eval(eval); });
  if (*cmd_verify) return guarded([&] { return run_verify(verify); });
  if (*cmd_bench) return guarded([&] { return run_bench(bench); });
  return guarded([&] { return run_dispersion(disp); });
}
