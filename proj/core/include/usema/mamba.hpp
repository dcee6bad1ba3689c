#pragma once

#include <cstdint>
#include <vector>

#include "usema/rng.hpp"
#include "usema/tensor.hpp"

// Reference selective-scan recurrence and its unrolled attention form, in real64.
//
//   h_t = A_t (.) h_{t-1} + B_t (Delta_t (.) x_t),   y_t = C_t h_t + D (.) x_t
//
// with x_t, Delta_t, C_t, D, y_t in R^{1 x d}, B_t in R^{d x 1} and the state
// h_t, A_t in R^{d x d}. B_t (Delta_t (.) x_t) is an outer product, so A_t acts
// entrywise on a d x d state: the per-channel diagonal transition of a
// selective SSM with state size d.
namespace usema::mamba {

struct StepParams {
  Tensor<double> a;      // [d x d], entrywise transition
  Tensor<double> b;      // [d x 1]
  Tensor<double> c;      // [1 x d]
  Tensor<double> delta;  // [1 x d]
};

struct Params {
  std::vector<StepParams> steps;  // one per position
  Tensor<double> d_skip;          // [1 x d]

  std::int64_t dim() const { return d_skip.dim(1); }
  // Throws DimensionError naming the first offending step.
  void validate(std::int64_t length, std::int64_t dim) const;
};

// Random parameters with A entries uniform in [a_lo, a_hi] and the other
// quantities standard normal (Delta uniform in [0.1, 1]).
Params random_params(Rng& rng, std::int64_t length, std::int64_t dim, double a_lo = 0.0,
                     double a_hi = 1.0);

// Sequential recurrence from h_0 = 0. x: [n x d] -> y: [n x d].
Tensor<double> scan(const Tensor<double>& x, const Params& params);

// y_m = sum_{i<=m} C_m (P_{m,i} (.) B_i (Delta_i (.) x_i)) + D (.) x_m with
// P_{m,i} = A_m (.) A_{m-1} (.) ... (.) A_{i+1}; O(n^2) by construction.
Tensor<double> unrolled(const Tensor<double>& x, const Params& params);

// The factors of the unrolled form: the masked key-value products
// kv[m][i] = P_{m,i} (.) B_i (Delta_i (.) x_i) (zero for i > m), queries q_m = C_m
// and values v_m = x_m.
struct UnrolledTerms {
  Tensor<double> kv;       // [n, n, d, d]
  Tensor<double> queries;  // [n x d]
  Tensor<double> values;   // [n x d]
  Tensor<double> d_skip;   // [1 x d]
};

UnrolledTerms unrolled_terms(const Tensor<double>& x, const Params& params);
// y from the terms: sum_i q_m kv[m][i] + D (.) v_m.
Tensor<double> reconstruct(const UnrolledTerms& terms);

struct ForgettingProfile {
  // weights[i-1] = prod_{j=1}^{m-i} A_{m-(j-1)} for i = 1..m, shape [m, d, d].
  Tensor<double> weights;
  // False when some A entry among steps 1..m lies outside [0, 1]; the profile
  // is still computed.
  bool in_unit_interval = true;
};

// m is 1-based and must not exceed the number of steps.
ForgettingProfile forgetting_profile(const Params& params, std::int64_t m);

}  // namespace usema::mamba
