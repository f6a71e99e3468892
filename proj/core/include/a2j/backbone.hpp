#pragma once

// Small plain convnet producing a four-level feature pyramid at strides
// 8, 16, 32 and 64.

#include <array>
#include <vector>

#include "a2j/nn.hpp"

namespace a2j {

inline constexpr std::size_t kPyramidLevels = 4;
inline constexpr std::array<std::size_t, kPyramidLevels> kPyramidStrides = {8, 16, 32, 64};

struct BackboneConfig {
  std::size_t image_size = 64;
  std::size_t d_model = 64;
  // Channels of the three stride-2 stem convs reaching stride 8, then of the
  // stride-16 and stride-32 stages.
  std::vector<std::size_t> stem_channels = {16, 32, 64};
  std::size_t stage_channels = 64;
  // Conv layers per level projection (first is 1x1, later ones 3x3).
  std::size_t projection_depth = 1;
  std::size_t norm_groups = 8;
};

template <typename T>
struct PyramidFeatures {
  std::vector<Tensor<T>> levels;  // each [d_model, H_l, W_l]
  std::size_t d_model = 0;
};

// ceil(input / stride) for each pyramid level.
std::array<std::size_t, kPyramidLevels> pyramid_sizes(std::size_t input);

template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(Rng& rng, const BackboneConfig& config);

  // image: [3, H, W] with H = W = config.image_size.
  PyramidFeatures<T> forward(const Tensor<T>& image) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;
  const BackboneConfig& config() const { return config_; }

 private:
  struct Projection {
    std::vector<Conv2d<T>> convs;
    GroupNorm<T> norm;
  };

  Tensor<T> project(const Projection& p, const Tensor<T>& x) const;

  BackboneConfig config_;
  std::vector<Conv2d<T>> stem_;
  Conv2d<T> stage16_;
  Conv2d<T> stage32_;
  std::array<Projection, 3> projections_;
  Conv2d<T> extra_;
  GroupNorm<T> extra_norm_;
};

template <typename T>
PyramidFeatures<T> extract_pyramid(const Tensor<T>& image, const Backbone<T>& backbone) {
  return backbone.forward(image);
}

}  // namespace a2j
