#pragma once

// Joint estimation loss, anchor surrounding loss and their weighted total.
// Each per-joint sum is divided by the number of valid joints.

#include <vector>

#include "a2j/a2j_head.hpp"
#include "a2j/anchors.hpp"

namespace a2j {

struct LossConfig {
  double alpha = 0.5;  // in-plane vs depth balance inside loss1
  double tau1 = 1.0;   // in-plane kernel width (pixels)
  double tau2 = 3.0;   // depth kernel width (mm)
  double lambda1 = 3.0;
  double lambda2 = 1.0;

  // Throws ConfigError naming the first non-positive field.
  void validate() const;
};

// x^2 / (2 tau) for |x| < tau, |x| - tau / 2 otherwise.
double smooth_l1_tau(double x, double tau);

// [J, 3] constant tensor of target coordinates and the matching valid mask.
template <typename T>
Tensor<T> target_tensor(const JointTarget& gt);

// Scalar
//   (inplane_weight * sum_valid (L_tau_inplane(dx) + L_tau_inplane(dy))
//      + sum_valid L_tau_depth(dz)) / n_valid
// for residuals pred - target over [J, 3]. Zero when no joint is valid.
template <typename T>
Tensor<T> masked_residual_loss(const Tensor<T>& pred, const JointTarget& gt, double inplane_weight,
                               double tau_inplane, double tau_depth);

// loss1 on fused joints [J, 3].
template <typename T>
Tensor<T> joint_estimation_loss(const Tensor<T>& joints, const JointTarget& gt,
                                const LossConfig& cfg);

// loss2: the weight-averaged anchor positions (no offsets) against GT.
template <typename T>
Tensor<T> anchor_surrounding_loss(const Tensor<T>& norm_weights, const AnchorSet& anchors,
                                  const JointTarget& gt, const LossConfig& cfg);

struct LossReport {
  double loss1 = 0;
  double loss2 = 0;
  double total = 0;
  // Unnormalized loss1 contribution per joint (0 for invalid joints).
  std::vector<double> per_joint;
};

LossReport total_loss(double loss1, double loss2, const LossConfig& cfg);

template <typename T>
struct LossTerms {
  Tensor<T> loss1;
  Tensor<T> loss2;  // undefined when there are no anchor weights
  Tensor<T> total;
  LossReport report;
};

// Both terms for a fused prediction. Without norm_weights only loss1 enters.
template <typename T>
LossTerms<T> compute_losses(const PredictionBundle<T>& pred, const AnchorSet& anchors,
                            const JointTarget& gt, const LossConfig& cfg);

}  // namespace a2j
