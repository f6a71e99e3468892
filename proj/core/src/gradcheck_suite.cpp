#include "a2j/gradcheck_suite.hpp"

#include <chrono>
#include <cstdio>

#include "a2j/losses.hpp"

namespace a2j {

namespace {

// Scalar random projection sum(x * r) with r fixed per call site.
template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& r) {
  return sum(mul(x, r));
}

template <typename T>
ParamList<T> with_prefix(const ParamList<T>& all, std::initializer_list<const char*> prefixes) {
  ParamList<T> out;
  for (const auto& p : all)
    for (const char* pre : prefixes)
      if (p.name.rfind(pre, 0) == 0) {
        out.push_back(p);
        break;
      }
  return out;
}

template <typename T>
struct Check {
  std::string name;
  ParamList<T> params;
  std::function<Tensor<T>()> objective;
};

// Model, inputs and objectives for one precision. Random draws are rounded to
// float so a float and a double harness built from the same options see the
// same numbers. Objectives capture members by reference; the harness is
// neither copied nor moved.
template <typename T>
class Harness {
 public:
  explicit Harness(const GradCheckSuiteOptions& options)
      : options_(options), rng_(options.seed), model_(options.model, options.seed) {
    for (auto p : model_.parameters())
      for (T& v : p.tensor.mutable_values())
        v += T(float(rng_.uniform(-options.jitter, options.jitter)));
    SyntheticHandConfig synth;
    synth.image_size = options.model.image_size;
    sample_ = generate_sample(synth, options.seed);

    const auto sizes = pyramid_sizes(options.model.image_size);
    std::size_t tokens = 0;
    for (std::size_t s : sizes) {
      levels_.push_back({s, s, tokens});
      tokens += s * s;
    }
    const std::size_t d = options.model.d_model;
    const std::size_t per_q = options.model.heads * levels_.size() * options.model.points;
    kernel_inputs_ = {
        {"value", random_like({tokens, d}, -1, 1, true)},
        {"reference", random_like({kKernelQueries, 2}, 0.1, 0.9, true)},
        {"offsets", random_like({kKernelQueries, per_q * 2}, -1.5, 1.5, true)},
        {"weights", random_like({kKernelQueries, per_q}, 0, 1, true)},
    };
  }
  Harness(const Harness&) = delete;
  Harness& operator=(const Harness&) = delete;

  // Model parameters followed by the deformable kernel inputs.
  ParamList<T> values() const {
    ParamList<T> all = model_.parameters();
    all.insert(all.end(), kernel_inputs_.begin(), kernel_inputs_.end());
    return all;
  }

  std::vector<Check<T>> build() {
    const ModelConfig& mc = options_.model;
    const ParamList<T> all = model_.parameters();
    image_ = sample_.image_tensor<T>();
    anchor_ref_ = anchor_reference<T>(model_.anchors());
    {
      NoGradGuard no_grad;
      pyramid_ = model_.pyramid(image_);
      if (mc.transformer) memory_ = model_.encoder().forward(pyramid_);
      embeddings_ = model_.anchor_embeddings(pyramid_);
      if (mc.a2j_fusion) offsets_ = model_.head().offsets().forward(embeddings_);
    }

    std::vector<Check<T>> checks;
    for (const auto& l : pyramid_.levels) r_levels_.push_back(random_like(l.shape(), -1, 1, false));
    checks.push_back({"backbone", with_prefix(all, {"backbone."}), [this] {
                        const auto p = model_.pyramid(image_);
                        Tensor<T> total = project(p.levels[0], r_levels_[0]);
                        for (std::size_t l = 1; l < p.levels.size(); ++l)
                          total = add(total, project(p.levels[l], r_levels_[l]));
                        return total;
                      }});

    if (mc.transformer) {
      r_enc_ = random_like(memory_.tokens.shape(), -1, 1, false);
      checks.push_back({"encoder", with_prefix(all, {"encoder."}), [this] {
                          return project(model_.encoder().forward(pyramid_).tokens, r_enc_);
                        }});
      r_dec_ = random_like(embeddings_.shape(), -1, 1, false);
      checks.push_back({"decoder", with_prefix(all, {"decoder.", "query."}), [this] {
                          return project(
                              model_.decoder().forward(model_.query_pos(), anchor_ref_, memory_),
                              r_dec_);
                        }});
    }

    if (mc.a2j_fusion) {
      r_off_ = random_like(offsets_.shape(), -1, 1, false);
      checks.push_back({"offset_branch", with_prefix(all, {"head.offset."}), [this] {
                          return project(model_.head().offsets().forward(embeddings_), r_off_);
                        }});
      if (mc.learned_weights) {
        r_joints_ = random_like({mc.joint_count(), 3}, -1, 1, false);
        checks.push_back({"weight_branch", with_prefix(all, {"head.weight."}), [this] {
                            const auto b = fuse(model_.anchors(), offsets_,
                                                model_.head().weights().forward(embeddings_));
                            return project(b.joints, r_joints_);
                          }});
      }
    }

    r_kernel_ = random_like({kKernelQueries, mc.d_model}, -1, 1, false);
    checks.push_back({"msdam_kernel", kernel_inputs_, [this] {
                        const auto& in = kernel_inputs_;
                        return project(ms_deform_attn_core(in[0].tensor, levels_, in[1].tensor,
                                                           in[2].tensor, in[3].tensor,
                                                           options_.model.heads,
                                                           options_.model.points),
                                       r_kernel_);
                      }});

    checks.push_back({"full_loss", all, [this] {
                        const auto out = model_.forward(image_);
                        return compute_losses(out.prediction, model_.anchors(), sample_.targets,
                                              LossConfig{})
                            .total;
                      }});
    return checks;
  }

 private:
  static constexpr std::size_t kKernelQueries = 12;

  Tensor<T> random_like(const Shape& shape, double lo, double hi, bool requires_grad) {
    Buffer<T> v(numel(shape));
    for (auto& x : v) x = T(float(rng_.uniform(lo, hi)));
    return Tensor<T>(shape, std::move(v), requires_grad);
  }

  GradCheckSuiteOptions options_;
  Rng rng_;
  Model<T> model_;
  SampleRecord sample_;
  std::vector<LevelShape> levels_;
  ParamList<T> kernel_inputs_;
  Tensor<T> image_, anchor_ref_, embeddings_, offsets_;
  PyramidFeatures<T> pyramid_;
  EncoderState<T> memory_;
  std::vector<Tensor<T>> r_levels_;
  Tensor<T> r_enc_, r_dec_, r_off_, r_joints_, r_kernel_;
};

ModuleCheck summarize(const std::string& name, const GradCheckReport& report, double tol,
                      std::chrono::steady_clock::time_point start) {
  ModuleCheck c;
  c.module = name;
  c.tensors = report.entries.size();
  for (const auto& e : report.entries) {
    c.elements += e.checked;
    if (e.rel_error >= c.max_rel_error) {
      c.max_rel_error = e.rel_error;
      c.worst = e.name;
    }
  }
  c.tolerance = tol;
  c.passed = report.passed(tol);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

GradCheckOptions check_options(const GradCheckSuiteOptions& options, double default_eps) {
  GradCheckOptions gc;
  gc.epsilon = options.epsilon > 0 ? options.epsilon : default_eps;
  gc.max_elements_per_param = options.max_elements_per_param;
  gc.seed = options.seed;
  return gc;
}

}  // namespace

template <>
std::vector<ModuleCheck> run_gradcheck_suite<double>(const GradCheckSuiteOptions& options) {
  const double tol = options.tolerance > 0 ? options.tolerance : 1e-5;
  const GradCheckOptions gc = check_options(options, 1e-6);
  Harness<double> h(options);
  std::vector<ModuleCheck> out;
  for (auto& c : h.build()) {
    const auto start = std::chrono::steady_clock::now();
    out.push_back(summarize(c.name, grad_check<double>(c.objective, c.params, gc), tol, start));
  }
  return out;
}

template <>
std::vector<ModuleCheck> run_gradcheck_suite<float>(const GradCheckSuiteOptions& options) {
  const double tol = options.tolerance > 0 ? options.tolerance : 1e-3;
  const GradCheckOptions gc = check_options(options, 1e-6);
  Harness<float> hf(options);
  Harness<double> hd(options);
  {
    const ParamList<float> src = hf.values();
    ParamList<double> dst = hd.values();
    for (std::size_t k = 0; k < src.size(); ++k) {
      const auto from = src[k].tensor.values();
      auto to = dst[k].tensor.mutable_values();
      for (std::size_t i = 0; i < from.size(); ++i) to[i] = double(from[i]);
    }
  }
  auto fchecks = hf.build();
  auto dchecks = hd.build();
  std::vector<ModuleCheck> out;
  for (std::size_t i = 0; i < fchecks.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    const auto report = grad_check_against_double(fchecks[i].objective, fchecks[i].params,
                                                  dchecks[i].objective, dchecks[i].params, gc);
    out.push_back(summarize(fchecks[i].name, report, tol, start));
  }
  return out;
}

std::string gradcheck_table(const std::vector<ModuleCheck>& checks) {
  std::string out = "module          tensors  elements  max_rel_err  tolerance  result  worst\n";
  char line[256];
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%-15s %7zu  %8zu  %11.3e  %9.1e  %-6s  %s\n",
                  c.module.c_str(), c.tensors, c.elements, c.max_rel_error, c.tolerance,
                  c.passed ? "PASS" : "FAIL", c.worst.c_str());
    out += line;
  }
  return out;
}


}  // namespace a2j
