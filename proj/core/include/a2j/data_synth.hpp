#pragma once

// Synthetic two-hand samples: forward kinematics over a 21-joint skeleton per
// hand, orthographic projection, and a blob renderer. Plus the binary
// dataset container.
//
// Joint order per hand: 0 wrist, then thumb, index, middle, ring and pinky,
// four joints each from the knuckle to the tip. Hand 0 is the right hand,
// hand 1 the left. Depth is in mm relative to each hand's own wrist.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "a2j/anchors.hpp"
#include "a2j/tensor.hpp"

namespace a2j {

inline constexpr std::size_t kJointsPerHand = 21;
inline constexpr std::size_t kHands = 2;

struct SyntheticHandConfig {
  std::size_t image_size = 64;
  // In-plane scale of the orthographic camera; 0 picks 512 / image_size so
  // a hand spans roughly a third of the image.
  double mm_per_pixel = 0.0;
  double overlap_probability = 0.5;
  double single_hand_probability = 0.2;
  double hand_scale_min = 0.85;
  double hand_scale_max = 1.1;
  double max_curl = 1.4;      // radians per finger joint
  double max_spread = 0.25;   // radians of sideways finger deviation
  double max_tilt = 0.9;      // radians of out-of-plane hand rotation
  double blob_radius = 1.0;   // pixels, scaled per joint type
  double bone_intensity = 0.25;
  double noise = 0.02;        // background noise amplitude

  double resolved_mm_per_pixel() const {
    return mm_per_pixel > 0 ? mm_per_pixel : 512.0 / double(image_size);
  }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct SampleRecord {
  std::size_t image_size = 0;
  std::vector<float> image;  // [3, H, W], values k/255
  JointTarget targets;
  std::uint64_t seed = 0;
  bool overlap = false;        // in-plane bounding boxes of the hands intersect
  std::uint8_t hand_count = 2;  // hands present; absent hands are all-invalid

  template <typename T>
  Tensor<T> image_tensor() const {
    return Tensor<T>({3, image_size, image_size}, Buffer<T>(image.begin(), image.end()));
  }

  bool operator==(const SampleRecord&) const = default;
};

SampleRecord generate_sample(const SyntheticHandConfig& cfg, std::uint64_t seed);

// `count` samples with seeds derived from `seed`.
std::vector<SampleRecord> generate_samples(const SyntheticHandConfig& cfg, std::size_t count,
                                           std::uint64_t seed);

// Adds a Gaussian blob of the given peak colour at (x, y) pixels using max
// compositing. image is [3, size, size].
void render_blob(std::vector<float>& image, std::size_t size, double x, double y, double radius,
                 const float color[3]);

struct Dataset {
  std::size_t image_size = 64;
  std::size_t joint_count = kHands * kJointsPerHand;
  std::size_t joints_per_hand = kJointsPerHand;
  double mm_per_pixel = 8.0;
  std::vector<SampleRecord> records;

  bool operator==(const Dataset&) const = default;
};

Dataset make_dataset(const SyntheticHandConfig& cfg, std::size_t count, std::uint64_t seed);

// Header ("A2JD", version, counts, image size, joint count, mm per pixel)
// followed by length-prefixed little-endian records. Throws IoError.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

inline constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace a2j
