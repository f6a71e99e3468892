#include "a2j/metrics.hpp"

#include <cmath>

#include "a2j/tensor.hpp"

namespace a2j {

std::vector<std::optional<double>> aligned_joint_errors(const std::vector<JointCoord>& pred,
                                                        const JointTarget& gt,
                                                        double mm_per_pixel) {
  if (pred.size() != gt.size()) {
    throw ShapeError("metrics: " + std::to_string(pred.size()) + " predicted joints vs " +
                     std::to_string(gt.size()) + " targets");
  }
  std::vector<std::optional<double>> err(gt.size());
  for (std::size_t h = 0; h < gt.hand_roots.size(); ++h) {
    const std::size_t root = gt.hand_roots[h];
    if (root >= gt.size() || !gt.joints[root].valid) continue;
    const double sx = gt.joints[root].x - pred[root].x;
    const double sy = gt.joints[root].y - pred[root].y;
    const double sd = gt.joints[root].depth - pred[root].depth;
    const std::size_t begin = h * gt.joints_per_hand;
    const std::size_t end = std::min(gt.size(), begin + gt.joints_per_hand);
    for (std::size_t j = begin; j < end; ++j) {
      if (j == root || !gt.joints[j].valid) continue;
      const double dx = (pred[j].x + sx - gt.joints[j].x) * mm_per_pixel;
      const double dy = (pred[j].y + sy - gt.joints[j].y) * mm_per_pixel;
      const double dd = pred[j].depth + sd - gt.joints[j].depth;
      err[j] = std::sqrt(dx * dx + dy * dy + dd * dd);
    }
  }
  return err;
}

std::optional<double> epe(const std::vector<JointCoord>& pred, const JointTarget& gt,
                          double mm_per_pixel) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& e : aligned_joint_errors(pred, gt, mm_per_pixel)) {
    if (!e) continue;
    total += *e;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return total / double(count);
}

MetricAccumulator::MetricAccumulator(std::size_t joint_count, double mm_per_pixel)
    : mm_per_pixel_(mm_per_pixel), per_joint_(joint_count) {}

void MetricAccumulator::add(const std::vector<JointCoord>& pred, const JointTarget& gt,
                            std::size_t hand_count) {
  const auto err = aligned_joint_errors(pred, gt, mm_per_pixel_);
  if (err.size() != per_joint_.size()) throw ShapeError("metrics: joint count changed");
  Sum& part = hand_count >= 2 ? two_ : single_;
  Sum sample;
  for (std::size_t j = 0; j < err.size(); ++j) {
    if (!err[j]) continue;
    all_.total += *err[j];
    ++all_.count;
    part.total += *err[j];
    ++part.count;
    per_joint_[j].total += *err[j];
    ++per_joint_[j].count;
    sample.total += *err[j];
    ++sample.count;
  }
  if (auto m = sample.mean()) {
    epe_.total += *m;
    ++epe_.count;
  }
  ++samples_;
}

MetricReport MetricAccumulator::report() const {
  MetricReport r;
  r.mpjpe_all = all_.mean();
  r.mpjpe_single = single_.mean();
  r.mpjpe_two = two_.mean();
  r.epe = epe_.mean();
  for (const auto& s : per_joint_) r.per_joint.push_back(s.mean());
  r.samples = samples_;
  return r;
}

}  // namespace a2j
