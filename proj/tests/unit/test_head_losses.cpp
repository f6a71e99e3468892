#include <gtest/gtest.h>

#include <cmath>

#include "a2j/a2j_head.hpp"
#include "a2j/grad_check.hpp"
#include "a2j/losses.hpp"
#include "oracles.hpp"
#include "property.hpp"

using namespace a2j;
using a2j::testing::for_all;
using a2j::testing::Gen;

namespace {

std::vector<double> to_vec(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

std::vector<double> coords_of(const AnchorSet& s) {
  std::vector<double> out;
  for (const auto& a : s.anchors) out.insert(out.end(), {a.x, a.y, a.depth});
  return out;
}

JointTarget random_target(Gen& g, std::size_t joints, double invalid_rate = 0.0) {
  JointTarget t;
  t.joints_per_hand = joints;
  t.hand_roots = {0};
  for (std::size_t j = 0; j < joints; ++j)
    t.joints.push_back({g.real(0, 64), g.real(0, 64), g.real(-150, 150), g.real(0, 1) >= invalid_rate});
  return t;
}

HeadConfig small_head(std::size_t joints) {
  HeadConfig c;
  c.d_model = 8;
  c.joints = joints;
  return c;
}

}  // namespace

TEST(Fuse, MatchesOracle) {
  for_all(30, 1, [](Gen& g) {
    const std::size_t side = std::size_t(1) << g.size(0, 2), depths = g.size(1, 3), J = g.size(1, 5);
    const auto set = anchor_grid_for_counts(64, side, depths);
    const std::size_t A = set.size();
    const auto off = g.values<double>(A * J * 3, -20, 20);
    const auto w = oracle::softmax_columns(g.values<double>(A * J, -3, 3), A, J);
    const auto out = a2j_fuse(anchor_coords<double>(set), Tensor<double>({A, J, 3}, off),
                              Tensor<double>({A, J}, w));
    const auto ref = oracle::fuse(coords_of(set), off, w, A, J);
    ASSERT_EQ(out.shape(), (Shape{J, 3}));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-9);
  });
}

TEST(Fuse, UniformWeightsAreExactAndGiveTheMeanAnchor) {
  const auto w = uniform_weights<double>(48, 5);
  for (double v : w.values()) EXPECT_EQ(v, 1.0 / 48.0);
  const auto set = generate_anchor_grid(64, 16, {-100, 0, 100});
  const auto joints = a2j_fuse(anchor_coords<double>(set), Tensor<double>(), w);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(joints[j * 3], 32.0, 1e-12);
    EXPECT_NEAR(joints[j * 3 + 1], 32.0, 1e-12);
    EXPECT_NEAR(joints[j * 3 + 2], 0.0, 1e-12);
  }
}

TEST(Fuse, ZeroOffsetsGiveTheWeightedAnchorCentroid) {
  const auto set = generate_anchor_grid(64, 32, {0});
  // One-hot weight on anchor 3 for joint 0, uniform for joint 1.
  const Tensor<double> w({4, 2}, std::vector<double>{0, 0.25, 0, 0.25, 0, 0.25, 1, 0.25});
  const auto j = a2j_fuse(anchor_coords<double>(set), Tensor<double>::zeros({4, 2, 3}), w);
  EXPECT_EQ(j[0], 48.0);
  EXPECT_EQ(j[1], 48.0);
  EXPECT_EQ(j[3], 32.0);
}

TEST(Fuse, AnchorOrderingMismatchIsAShapeError) {
  const auto set = generate_anchor_grid(64, 32, {0});
  EXPECT_THROW(a2j_fuse(anchor_coords<double>(set), Tensor<double>(), uniform_weights<double>(5, 2)),
               ShapeError);
  EXPECT_THROW(a2j_fuse(anchor_coords<double>(set), Tensor<double>::zeros({3, 2, 3}),
                        uniform_weights<double>(4, 2)),
               ShapeError);
  EXPECT_THROW(fuse(set, Tensor<double>::zeros({5, 2, 3}), Tensor<double>()), ShapeError);
}

TEST(Head, BundleShapesAndNormalizedColumns) {
  Rng rng(1);
  const A2JHead<double> head(rng, small_head(6));
  const auto set = generate_anchor_grid(64, 16, {-100, 0, 100});
  Gen g(1);
  const Tensor<double> emb({48, 8}, g.values<double>(48 * 8, -1, 1));
  const auto b = head.forward(emb, set);
  EXPECT_EQ(b.offsets.shape(), (Shape{48, 6, 3}));
  EXPECT_EQ(b.raw_weights.shape(), (Shape{48, 6}));
  EXPECT_EQ(b.norm_weights.shape(), (Shape{48, 6}));
  EXPECT_EQ(b.joints.shape(), (Shape{6, 3}));
  for (std::size_t j = 0; j < 6; ++j) {
    double s = 0;
    for (std::size_t a = 0; a < 48; ++a) s += b.norm_weights[a * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto ref = oracle::fuse(coords_of(set), to_vec(b.offsets), to_vec(b.norm_weights), 48, 6);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(b.joints[i], ref[i], 1e-9);
}

TEST(Head, UnlearnedWeightsAreUniform) {
  Rng rng(2);
  auto cfg = small_head(3);
  cfg.learned_weights = false;
  const A2JHead<double> head(rng, cfg);
  const auto set = generate_anchor_grid(64, 32, {0});
  Gen g(2);
  const auto b = head.forward(Tensor<double>({4, 8}, g.values<double>(32, -1, 1)), set);
  for (double v : b.norm_weights.values()) EXPECT_EQ(v, 0.25);
}

TEST(Head, OffsetScalesApplyPerAxis) {
  Rng rng(3);
  auto cfg = small_head(1);
  cfg.layers = 1;
  cfg.offset_scale_inplane = 16;
  cfg.offset_scale_depth = 100;
  OffsetBranch<double> branch(rng, cfg);
  auto& layer = branch.mlp().layers().back();
  for (auto& w : layer.weight().mutable_values()) w = 0;
  auto bias = layer.bias().mutable_values();
  bias[0] = 1;
  bias[1] = -0.5;
  bias[2] = 0.25;
  const auto o = branch.forward(Tensor<double>::zeros({2, 8}));
  EXPECT_EQ(o.shape(), (Shape{2, 1, 3}));
  EXPECT_EQ(o[0], 16.0);
  EXPECT_EQ(o[1], -8.0);
  EXPECT_EQ(o[2], 25.0);
}

TEST(Head, GradCheckBothBranches) {
  Rng rng(4);
  const A2JHead<double> head(rng, small_head(3));
  ParamList<double> params;
  head.collect(params, "head");
  const auto set = generate_anchor_grid(64, 32, {-100, 100});
  Gen g(4);
  const Tensor<double> emb({8, 8}, g.values<double>(64, -1, 1), true);
  params.push_back({"embeddings", emb});
  const Tensor<double> r({3, 3}, g.values<double>(9, -1, 1));
  auto objective = [&] { return sum(mul(head.forward(emb, set).joints, r)); };
  EXPECT_LT(grad_check<double>(objective, params).max_rel_error(), 1e-6);
}

TEST(SmoothL1, MatchesKernelAndIsContinuousAtTau) {
  for_all(50, 5, [](Gen& g) {
    const double tau = g.real(0.1, 5), x = g.real(-10, 10);
    EXPECT_NEAR(smooth_l1_tau(x, tau), oracle::smooth_l1(x, tau), 1e-12);
    EXPECT_EQ(smooth_l1_tau(x, tau), smooth_l1_tau(-x, tau));
  });
  for (double tau : {1.0, 3.0, 0.37}) {
    const double below = std::nextafter(tau, 0.0), above = std::nextafter(tau, 10.0);
    EXPECT_NEAR(smooth_l1_tau(below, tau), tau / 2, 1e-9);
    EXPECT_NEAR(smooth_l1_tau(above, tau), tau / 2, 1e-9);
    EXPECT_NEAR(smooth_l1_tau(tau, tau), tau / 2, 1e-12);
  }
}

TEST(Losses, ZeroWhenPredictionEqualsTarget) {
  Gen g(6);
  const auto gt = random_target(g, 7);
  const auto pred = target_tensor<double>(gt);
  EXPECT_EQ(joint_estimation_loss(pred, gt, LossConfig{}).item(), 0.0);
}

TEST(Losses, JointLossMatchesOracleAndSkipsInvalidJoints) {
  for_all(30, 7, [](Gen& g) {
    const std::size_t J = g.size(1, 10);
    auto gt = random_target(g, J, 0.3);
    LossConfig cfg;
    cfg.alpha = g.real(0.1, 2);
    const auto pv = g.values<double>(J * 3, -50, 200);
    const auto loss = joint_estimation_loss(Tensor<double>({J, 3}, pv), gt, cfg).item();
    double acc = 0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < J; ++j) {
      const auto& t = gt.joints[j];
      if (!t.valid) continue;
      ++n;
      acc += cfg.alpha * (oracle::smooth_l1(pv[j * 3] - t.x, cfg.tau1) +
                          oracle::smooth_l1(pv[j * 3 + 1] - t.y, cfg.tau1)) +
             oracle::smooth_l1(pv[j * 3 + 2] - t.depth, cfg.tau2);
    }
    EXPECT_NEAR(loss, n ? acc / double(n) : 0.0, 1e-9);
    // Moving an invalid joint's prediction changes nothing.
    for (std::size_t j = 0; j < J; ++j)
      if (!gt.joints[j].valid) {
        auto moved = pv;
        moved[j * 3] += 1000;
        EXPECT_EQ(joint_estimation_loss(Tensor<double>({J, 3}, moved), gt, cfg).item(), loss);
      }
  });
}

TEST(Losses, NoValidJointsGivesZero) {
  Gen g(8);
  auto gt = random_target(g, 4);
  for (auto& j : gt.joints) j.valid = false;
  EXPECT_EQ(joint_estimation_loss(Tensor<double>::full({4, 3}, 7.0), gt, LossConfig{}).item(), 0.0);
}

TEST(Losses, AnchorSurroundingLossUsesTheWeightedAnchorCentroid) {
  const auto set = generate_anchor_grid(64, 32, {0});
  JointTarget gt;
  gt.joints_per_hand = 1;
  gt.hand_roots = {0};
  gt.joints = {{16, 48, 0, true}};
  LossConfig cfg;
  // One-hot on the anchor at (16, 48): zero loss.
  EXPECT_EQ(anchor_surrounding_loss(Tensor<double>({4, 1}, std::vector<double>{0, 0, 1, 0}), set, gt, cfg)
                .item(),
            0.0);
  // Uniform weights: centroid (32, 32, 0), residuals 16 and -16 px.
  const double expect = 2 * oracle::smooth_l1(16, cfg.tau1);
  EXPECT_NEAR(anchor_surrounding_loss(uniform_weights<double>(4, 1), set, gt, cfg).item(), expect, 1e-12);
}

TEST(Losses, TotalIsWeightedSum) {
  for_all(20, 9, [](Gen& g) {
    const double l1 = g.real(0, 100), l2 = g.real(0, 100);
    const auto r = total_loss(l1, l2, LossConfig{});
    EXPECT_NEAR(r.total, 3 * l1 + l2, 1e-12);
  });
  Rng rng(9);
  const A2JHead<double> head(rng, small_head(4));
  const auto set = generate_anchor_grid(64, 32, {-100, 100});
  Gen g(9);
  const auto bundle = head.forward(Tensor<double>({8, 8}, g.values<double>(64, -1, 1)), set);
  const auto gt = random_target(g, 4, 0.25);
  const LossConfig cfg;
  const auto terms = compute_losses(bundle, set, gt, cfg);
  EXPECT_NEAR(terms.total.item(), 3 * terms.loss1.item() + terms.loss2.item(), 1e-9);
  EXPECT_NEAR(terms.report.total, terms.total.item(), 1e-9);
  double per_joint = 0;
  for (double v : terms.report.per_joint) per_joint += v;
  EXPECT_NEAR(per_joint / double(gt.valid_count()), terms.loss1.item(), 1e-9);
}

TEST(Losses, InvalidConfigNamesTheField) {
  LossConfig cfg;
  cfg.tau2 = 0;
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("tau2"), std::string::npos);
  }
}

TEST(Losses, GradCheckThroughFusion) {
  Gen g(10);
  const auto set = generate_anchor_grid(64, 32, {-100, 100});
  const auto gt = random_target(g, 3, 0.2);
  const Tensor<double> off({8, 3, 3}, g.values<double>(72, -30, 30), true);
  const Tensor<double> raw({8, 3}, g.values<double>(24, -2, 2), true);
  ParamList<double> params{{"offsets", off}, {"raw", raw}};
  auto objective = [&] { return compute_losses(fuse(set, off, raw), set, gt, LossConfig{}).total; };
  EXPECT_LT(grad_check<double>(objective, params).max_rel_error(), 1e-5);
}

TEST(Losses, WorkedExamples) {
  EXPECT_EQ(smooth_l1_tau(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1_tau(0.5, 1), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1_tau(2, 1), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1_tau(3, 3), 1.5);

  JointTarget gt;
  gt.joints_per_hand = 1;
  gt.hand_roots = {0};
  gt.joints = {{16, 10, 0, true}};
  LossConfig cfg;
  const Tensor<double> pred({1, 3}, std::vector<double>{16.5, 10, 0});
  EXPECT_DOUBLE_EQ(joint_estimation_loss(pred, gt, cfg).item(), 0.0625);

  // Three anchors on a line; the weighted centroid sits at x = 16.
  AnchorSet line;
  line.anchors = {{0, 10, 0}, {16, 10, 0}, {32, 10, 0}};
  line.image_size = 48;
  const Tensor<double> w({3, 1}, std::vector<double>{0.25, 0.5, 0.25});
  EXPECT_DOUBLE_EQ(anchor_surrounding_loss(w, line, gt, cfg).item(), 0.0);
  gt.joints[0].x = 18;
  EXPECT_DOUBLE_EQ(anchor_surrounding_loss(w, line, gt, cfg).item(), 1.5);

  EXPECT_EQ(total_loss(0, 0, cfg).total, 0.0);
  EXPECT_EQ(total_loss(1, 2, cfg).total, 5.0);
  LossConfig doubled = cfg;
  doubled.lambda1 *= 2;
  doubled.lambda2 *= 2;
  EXPECT_EQ(total_loss(1, 2, doubled).total, 10.0);
}
