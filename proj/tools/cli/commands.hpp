#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace usema::cli {

// Process exit codes.
enum Exit : int {
  kOk = 0,
  kVerifyFailed = 1,
  kConfig = 2,
  kData = 3,
  kDivergence = 4,
  kManifest = 5,
};

struct SynthArgs {
  std::string kind = "shapes";
  std::uint64_t seed = 0;
  std::int64_t count = 16;
  std::int64_t size = 64;
  std::string out;
};

struct TrainArgs {
  std::string config;
  std::string data;  // directory holding train/index.txt and val/index.txt
  std::string out;
  std::int64_t seed = -1;    // -1 keeps the config value
  std::int64_t epochs = -1;
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;  // index file or a directory containing index.txt
  std::vector<std::string> metrics{"dsc", "nsd", "f1"};
  std::string out;   // CSV path; stdout when empty
};

struct VerifyArgs {
  std::string suite = "all";
  std::uint64_t seed = 0;
};

struct BenchArgs {
  std::vector<std::string> kinds{"full", "window", "sema"};
  std::vector<std::int64_t> lengths{1024, 2048, 4096, 8192};
  std::int64_t dim = 64;
  std::int64_t window = 16;
  std::int64_t repeats = 5;
  std::uint64_t seed = 0;
  std::string out;   // CSV path; stdout when empty
};

struct DispersionArgs {
  std::string mode = "random";
  std::vector<std::int64_t> lengths{256, 1024, 4096};
  std::int64_t dim = 64;
  std::int64_t seeds = 10;
  std::uint64_t seed = 0;
  double band = 1e-4;
  std::string activations;  // tensor file [2, n, d]: Q then K
  std::string checkpoint;   // with `data`, records the bottleneck's Q and K
  std::string data;
  std::string out;
};

int run_synth(const SynthArgs& args);
int run_train(const TrainArgs& args);
int run_eval(const EvalArgs& args);
int run_verify(const VerifyArgs& args);
int run_bench(const BenchArgs& args);
int run_dispersion(const DispersionArgs& args);

}  // namespace usema::cli
