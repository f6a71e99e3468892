#include "a2j/losses.hpp"

#include <cmath>

namespace a2j {

using detail::make_result;
using detail::set_backward;
using detail::wants_grad;

void LossConfig::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"alpha", alpha}, {"tau1", tau1}, {"tau2", tau2}, {"lambda1", lambda1}, {"lambda2", lambda2}};
  for (const auto& [name, v] : fields) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  }
}

double smooth_l1_tau(double x, double tau) {
  const double ax = std::abs(x);
  return ax < tau ? x * x / (2.0 * tau) : ax - tau / 2.0;
}

namespace {

template <typename T>
T kernel(T x, T tau) {
  const T ax = std::abs(x);
  return ax < tau ? x * x / (T(2) * tau) : ax - tau / T(2);
}

template <typename T>
T kernel_grad(T x, T tau) {
  if (std::abs(x) < tau) return x / tau;
  return x > 0 ? T(1) : T(-1);
}

}  // namespace

template <typename T>
Tensor<T> target_tensor(const JointTarget& gt) {
  Buffer<T> v;
  v.reserve(gt.size() * 3);
  for (const auto& j : gt.joints) {
    v.push_back(T(j.x));
    v.push_back(T(j.y));
    v.push_back(T(j.depth));
  }
  return Tensor<T>({gt.size(), 3}, std::move(v));
}

template <typename T>
Tensor<T> masked_residual_loss(const Tensor<T>& pred, const JointTarget& gt, double inplane_weight,
                               double tau_inplane, double tau_depth) {
  const std::size_t nj = gt.size();
  require_same_shape(pred.shape(), Shape{nj, 3}, "residual loss prediction");
  Buffer<T> resid(nj * 3, T(0));
  std::vector<bool> valid(nj);
  std::size_t n_valid = 0;
  for (std::size_t j = 0; j < nj; ++j) {
    valid[j] = gt.joints[j].valid;
    if (!valid[j]) continue;
    ++n_valid;
    resid[j * 3] = pred[j * 3] - T(gt.joints[j].x);
    resid[j * 3 + 1] = pred[j * 3 + 1] - T(gt.joints[j].y);
    resid[j * 3 + 2] = pred[j * 3 + 2] - T(gt.joints[j].depth);
  }
  const T wi = T(inplane_weight), ti = T(tau_inplane), td = T(tau_depth);
  const T norm = n_valid ? T(1) / T(n_valid) : T(0);
  T total = 0;
  for (std::size_t j = 0; j < nj; ++j) {
    if (!valid[j]) continue;
    total += wi * (kernel(resid[j * 3], ti) + kernel(resid[j * 3 + 1], ti)) +
             kernel(resid[j * 3 + 2], td);
  }
  auto result = make_result<T>(Shape{1}, {total * norm}, {&pred});
  set_backward(result, [o = result.node().get(), pn = pred.node().get(), resid = std::move(resid),
                        valid = std::move(valid), wi, ti, td, norm, nj] {
    if (!wants_grad(pn)) return;
    const T g = o->grad[0] * norm;
    for (std::size_t j = 0; j < nj; ++j) {
      if (!valid[j]) continue;
      pn->grad[j * 3] += g * wi * kernel_grad(resid[j * 3], ti);
      pn->grad[j * 3 + 1] += g * wi * kernel_grad(resid[j * 3 + 1], ti);
      pn->grad[j * 3 + 2] += g * kernel_grad(resid[j * 3 + 2], td);
    }
  });
  return result;
}

template <typename T>
Tensor<T> joint_estimation_loss(const Tensor<T>& joints, const JointTarget& gt,
                                const LossConfig& cfg) {
  return masked_residual_loss(joints, gt, cfg.alpha, cfg.tau1, cfg.tau2);
}

template <typename T>
Tensor<T> anchor_surrounding_loss(const Tensor<T>& norm_weights, const AnchorSet& anchors,
                                  const JointTarget& gt, const LossConfig& cfg) {
  const Tensor<T> centroid = a2j_fuse(anchor_coords<T>(anchors), Tensor<T>(), norm_weights);
  return masked_residual_loss(centroid, gt, 1.0, cfg.tau1, cfg.tau2);
}

LossReport total_loss(double loss1, double loss2, const LossConfig& cfg) {
  LossReport r;
  r.loss1 = loss1;
  r.loss2 = loss2;
  r.total = cfg.lambda1 * loss1 + cfg.lambda2 * loss2;
  return r;
}

template <typename T>
LossTerms<T> compute_losses(const PredictionBundle<T>& pred, const AnchorSet& anchors,
                            const JointTarget& gt, const LossConfig& cfg) {
  LossTerms<T> t;
  t.loss1 = joint_estimation_loss(pred.joints, gt, cfg);
  Tensor<T> weighted1 = scale(t.loss1, T(cfg.lambda1));
  if (pred.norm_weights.defined()) {
    t.loss2 = anchor_surrounding_loss(pred.norm_weights, anchors, gt, cfg);
    t.total = add(weighted1, scale(t.loss2, T(cfg.lambda2)));
  } else {
    t.total = weighted1;
  }
  t.report = total_loss(double(t.loss1.item()), t.loss2.defined() ? double(t.loss2.item()) : 0.0,
                        cfg);
  t.report.per_joint.assign(gt.size(), 0.0);
  for (std::size_t j = 0; j < gt.size(); ++j) {
    const auto& g = gt.joints[j];
    if (!g.valid) continue;
    t.report.per_joint[j] =
        cfg.alpha * (smooth_l1_tau(double(pred.joints[j * 3]) - g.x, cfg.tau1) +
                     smooth_l1_tau(double(pred.joints[j * 3 + 1]) - g.y, cfg.tau1)) +
        smooth_l1_tau(double(pred.joints[j * 3 + 2]) - g.depth, cfg.tau2);
  }
  return t;
}

#define A2J_INSTANTIATE_LOSSES(T)                                                              \
  template Tensor<T> target_tensor<T>(const JointTarget&);                                     \
  template Tensor<T> masked_residual_loss(const Tensor<T>&, const JointTarget&, double, double, \
                                          double);                                             \
  template Tensor<T> joint_estimation_loss(const Tensor<T>&, const JointTarget&,               \
                                           const LossConfig&);                                 \
  template Tensor<T> anchor_surrounding_loss(const Tensor<T>&, const AnchorSet&,               \
                                             const JointTarget&, const LossConfig&);           \
  template LossTerms<T> compute_losses(const PredictionBundle<T>&, const AnchorSet&,           \
                                       const JointTarget&, const LossConfig&);

A2J_INSTANTIATE_LOSSES(float)
A2J_INSTANTIATE_LOSSES(double)

}  // namespace a2j
