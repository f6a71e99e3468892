#pragma once

// Finite-difference verification of analytic gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "a2j/nn.hpp"

namespace a2j {

struct GradCheckOptions {
  double epsilon = 1e-6;
  // 0 checks every element; otherwise a seeded random subset per parameter.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1.0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

// Compares the gradients produced by backward() on `objective` against
// central differences. `objective` must be deterministic and scalar.
// Throws NumericError("non-finite objective") if any evaluation is not finite.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& objective, ParamList<T>& params,
                           const GradCheckOptions& options = {});

// Single-precision analytic gradients against central differences of a
// double-precision evaluation of the same function. `reference_params` must
// mirror `params` by name and shape and hold the same values. Float finite
// differences need steps large enough to cross ReLU and bilinear kinks, which
// makes them too noisy for a 1e-3 comparison on real networks.
GradCheckReport grad_check_against_double(const std::function<Tensor<float>()>& objective,
                                          ParamList<float>& params,
                                          const std::function<Tensor<double>()>& reference,
                                          ParamList<double>& reference_params,
                                          const GradCheckOptions& options = {});

}  // namespace a2j
