#include "a2j/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace a2j {

double GradCheckReport::max_rel_error() const {
  double worst = 0;
  for (const auto& e : entries) worst = std::max(worst, e.rel_error);
  return worst;
}

namespace {

template <typename T>
T evaluate(const std::function<Tensor<T>()>& objective) {
  NoGradGuard guard;
  const T v = objective().item();
  if (!std::isfinite(v)) throw NumericError("non-finite objective");
  return v;
}

std::vector<std::size_t> pick_indices(std::size_t n, const GradCheckOptions& options, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (options.max_elements_per_param && n > options.max_elements_per_param) {
    // Partial Fisher-Yates keeps the subset deterministic under the seed.
    for (std::size_t i = 0; i < options.max_elements_per_param; ++i)
      std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(options.max_elements_per_param);
  }
  return idx;
}

template <typename T>
std::vector<std::vector<T>> analytic_grads(const std::function<Tensor<T>()>& objective,
                                           ParamList<T>& params) {
  zero_grads(params);
  {
    Tensor<T> root = objective();
    if (!std::isfinite(double(root.item()))) throw NumericError("non-finite objective");
    root.backward();
  }
  std::vector<std::vector<T>> out;
  for (const auto& p : params) out.emplace_back(p.grad().begin(), p.grad().end());
  return out;
}

template <typename T>
double central_difference(const std::function<Tensor<T>()>& objective, Param<T>& p,
                          std::size_t i, double epsilon) {
  auto values = p.tensor.mutable_values();
  const T saved = values[i];
  const T eps = T(epsilon);
  values[i] = saved + eps;
  const T up = evaluate(objective);
  values[i] = saved - eps;
  const T down = evaluate(objective);
  values[i] = saved;
  // Difference taken over the actually representable step.
  const double step = double(saved + eps) - double(saved - eps);
  return (double(up) - double(down)) / step;
}

template <typename A, typename R>
GradCheckReport compare(const std::function<Tensor<A>()>& objective, ParamList<A>& params,
                        const std::function<Tensor<R>()>& reference, ParamList<R>& ref_params,
                        const GradCheckOptions& options) {
  if (!(options.epsilon > 0)) throw ConfigError("grad_check: epsilon must be positive");
  const auto analytic = analytic_grads(objective, params);
  Rng rng(options.seed);
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto idx = pick_indices(params[k].tensor.size(), options, rng);
    GradCheckEntry entry{params[k].name, idx.size(), 0, 0, 0, 0};
    for (std::size_t i : idx) {
      const double numeric = central_difference(reference, ref_params[k], i, options.epsilon);
      const double a = analytic[k].empty() ? 0.0 : double(analytic[k][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel >= entry.rel_error) {
        entry.rel_error = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace

template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& objective, ParamList<T>& params,
                           const GradCheckOptions& options) {
  return compare(objective, params, objective, params, options);
}

GradCheckReport grad_check_against_double(const std::function<Tensor<float>()>& objective,
                                          ParamList<float>& params,
                                          const std::function<Tensor<double>()>& reference,
                                          ParamList<double>& reference_params,
                                          const GradCheckOptions& options) {
  if (params.size() != reference_params.size())
    throw ConfigError("grad_check: parameter lists differ in length");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].name != reference_params[k].name ||
        params[k].tensor.shape() != reference_params[k].tensor.shape())
      throw ConfigError("grad_check: parameter '" + params[k].name + "' has no matching reference");
  }
  return compare(objective, params, reference, reference_params, options);
}

template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&,
                                           ParamList<float>&, const GradCheckOptions&);
template GradCheckReport grad_check<double>(const std::function<Tensor<double>()>&,
                                            ParamList<double>&, const GradCheckOptions&);

}  // namespace a2j
