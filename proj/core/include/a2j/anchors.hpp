#pragma once

// Dense 3D anchor grid and the joint-target container it is matched against.
//
// In-plane coordinates are pixels in the input image (continuous, pixel k
// spans [k, k+1)); depth is millimetres relative to the hand root.

#include <cstddef>
#include <string>
#include <vector>

namespace a2j {

struct AnchorPoint {
  double x = 0;
  double y = 0;
  double depth = 0;

  bool operator==(const AnchorPoint&) const = default;
};

struct AnchorSet {
  std::vector<AnchorPoint> anchors;
  std::size_t stride = 0;
  std::vector<double> depth_values;
  std::size_t image_size = 0;

  std::size_t size() const { return anchors.size(); }
  std::size_t grid_side() const { return stride ? image_size / stride : 0; }
};

// Anchors at the centres of a (image_size/stride)^2 lattice, each replicated
// for every depth value. Order: row-major over the lattice, depth fastest.
// Throws ConfigError if stride does not divide image_size or depths is empty.
AnchorSet generate_anchor_grid(std::size_t image_size, std::size_t stride,
                               const std::vector<double>& depth_values);

// `count` depth values spread uniformly over [-half_range, +half_range]
// ({0} for a single value).
std::vector<double> uniform_depth_values(std::size_t count, double half_range = 100.0);

// Grid with `per_side` anchors along each image axis and `depth_count` depth
// layers; the stride is image_size / per_side.
AnchorSet anchor_grid_for_counts(std::size_t image_size, std::size_t per_side,
                                 std::size_t depth_count);

// "x,y,depth" header plus one row per anchor.
std::string anchors_csv(const AnchorSet& anchors);

struct JointCoord {
  double x = 0;      // pixels
  double y = 0;      // pixels
  double depth = 0;  // mm, root-relative
  bool valid = true;

  bool operator==(const JointCoord&) const = default;
};

struct JointTarget {
  std::vector<JointCoord> joints;
  std::vector<std::size_t> hand_roots;  // joint index of each hand's root
  std::size_t joints_per_hand = 21;

  std::size_t size() const { return joints.size(); }
  std::size_t hand_of(std::size_t joint) const { return joint / joints_per_hand; }
  std::size_t valid_count() const;

  bool operator==(const JointTarget&) const = default;
};

inline constexpr double kDefaultValidRadiusMm = 200.0;

// Flags joints whose depth differs from their hand root's depth by more than
// `radius_mm` as invalid. The boundary itself is valid.
JointTarget mark_valid_joints(JointTarget targets, double radius_mm = kDefaultValidRadiusMm);

}  // namespace a2j
