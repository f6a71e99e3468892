#include "a2j/anchors.hpp"

#include <cmath>
#include <sstream>

#include "a2j/tensor.hpp"

namespace a2j {

AnchorSet generate_anchor_grid(std::size_t image_size, std::size_t stride,
                               const std::vector<double>& depth_values) {
  if (stride == 0 || image_size == 0 || image_size % stride != 0) {
    throw ConfigError("anchors: stride " + std::to_string(stride) +
                      " must divide image size " + std::to_string(image_size));
  }
  if (depth_values.empty()) throw ConfigError("anchors: depth_values must be non-empty");

  AnchorSet set;
  set.stride = stride;
  set.depth_values = depth_values;
  set.image_size = image_size;
  const std::size_t side = image_size / stride;
  set.anchors.reserve(side * side * depth_values.size());
  const double half = double(stride) / 2.0;
  for (std::size_t row = 0; row < side; ++row)
    for (std::size_t col = 0; col < side; ++col)
      for (double d : depth_values)
        set.anchors.push_back({double(col * stride) + half, double(row * stride) + half, d});
  return set;
}

std::vector<double> uniform_depth_values(std::size_t count, double half_range) {
  if (count == 0) throw ConfigError("anchors: depth count must be positive");
  if (count == 1) return {0.0};
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = -half_range + 2.0 * half_range * double(i) / double(count - 1);
  return v;
}

AnchorSet anchor_grid_for_counts(std::size_t image_size, std::size_t per_side,
                                 std::size_t depth_count) {
  if (per_side == 0 || image_size % per_side != 0) {
    throw ConfigError("anchors: " + std::to_string(per_side) +
                      " anchors per side do not tile image size " + std::to_string(image_size));
  }
  return generate_anchor_grid(image_size, image_size / per_side,
                              uniform_depth_values(depth_count));
}

std::string anchors_csv(const AnchorSet& anchors) {
  std::ostringstream os;
  os << "x,y,depth\n";
  for (const auto& a : anchors.anchors) os << a.x << ',' << a.y << ',' << a.depth << '\n';
  return os.str();
}

std::size_t JointTarget::valid_count() const {
  std::size_t n = 0;
  for (const auto& j : joints) n += j.valid ? 1 : 0;
  return n;
}

JointTarget mark_valid_joints(JointTarget targets, double radius_mm) {
  if (!(radius_mm > 0)) throw ConfigError("mark_valid_joints: radius must be positive");
  for (std::size_t j = 0; j < targets.joints.size(); ++j) {
    const std::size_t hand = targets.hand_of(j);
    if (hand >= targets.hand_roots.size()) continue;
    const double root_depth = targets.joints[targets.hand_roots[hand]].depth;
    if (std::abs(targets.joints[j].depth - root_depth) > radius_mm) targets.joints[j].valid = false;
  }
  return targets;
}

}  // namespace a2j
