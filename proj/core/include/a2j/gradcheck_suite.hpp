#pragma once

// Finite-difference checks of every learnable stage of the model on
// desk-scale shapes: backbone, encoder, decoder, both head branches, the
// deformable sampling kernel and the full training loss.

#include <string>
#include <vector>

#include "a2j/grad_check.hpp"
#include "a2j/model.hpp"

namespace a2j {

struct GradCheckSuiteOptions {
  ModelConfig model;
  // 0 picks 1e-5 for double and 1e-3 for float.
  double tolerance = 0;
  // Finite-difference step, always taken in double precision. Float runs
  // compare float analytic gradients against double central differences.
  double epsilon = 0;  // 0 picks 1e-6
  std::size_t max_elements_per_param = 4;
  // Uniform noise added to every parameter before checking. Freshly
  // initialised deformable attention samples exactly on grid points, where
  // bilinear interpolation has a kink; a jitter moves the check to a generic
  // point of parameter space.
  double jitter = 0.05;
  std::uint64_t seed = 11;
};

struct ModuleCheck {
  std::string module;
  std::size_t tensors = 0;
  std::size_t elements = 0;
  double max_rel_error = 0;
  std::string worst;  // parameter holding the worst element
  double tolerance = 0;
  bool passed = false;
  double seconds = 0;
};

template <typename T>
std::vector<ModuleCheck> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});
template <>
std::vector<ModuleCheck> run_gradcheck_suite<float>(const GradCheckSuiteOptions& options);
template <>
std::vector<ModuleCheck> run_gradcheck_suite<double>(const GradCheckSuiteOptions& options);

// Fixed-width table with one PASS/FAIL row per module.
std::string gradcheck_table(const std::vector<ModuleCheck>& checks);

}  // namespace a2j
