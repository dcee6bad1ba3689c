#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

// Oracle suites shared by `usema verify` and the acceptance tests.
namespace usema::verify {

struct Check {
  std::string name;
  double error = 0.0;      // max abs (oracles) or max relative (gradients) error
  double tolerance = 0.0;
  std::string detail;      // e.g. the leaf holding the worst coordinate
  bool passed() const { return error <= tolerance; }
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const;
  // Null when every check passed.
  const Check* first_failure() const;
  void print(std::ostream& out) const;
};

// Window attention vs masked full attention over `instances` random cases,
// plus the SEMA composition identities and the batched multi-head kernels.
SuiteResult attention_suite(std::uint64_t seed, int instances = 100);
// Scan vs unrolled vs a loop oracle, and the exponential-forgetting bound.
SuiteResult mamba_suite(std::uint64_t seed, int instances = 100);
// Finite-difference checks of every differentiable op and of a 2-stage network.
SuiteResult grads_suite(std::uint64_t seed);
// The DSC/NSD/instance-F1 and cosine schedule examples.
SuiteResult metrics_suite();

const std::vector<std::string>& suite_names();
// ConfigError for an unknown name.
SuiteResult run_suite(const std::string& name, std::uint64_t seed);

}  // namespace usema::verify
