#include "a2j/backbone.hpp"

namespace a2j {

std::array<std::size_t, kPyramidLevels> pyramid_sizes(std::size_t input) {
  std::array<std::size_t, kPyramidLevels> s{};
  for (std::size_t l = 0; l < kPyramidLevels; ++l)
    s[l] = (input + kPyramidStrides[l] - 1) / kPyramidStrides[l];
  return s;
}

template <typename T>
Backbone<T>::Backbone(Rng& rng, const BackboneConfig& config) : config_(config) {
  if (config.stem_channels.size() != 3) {
    throw ConfigError("backbone: stem_channels must list 3 widths (strides 2, 4, 8)");
  }
  if (config.projection_depth == 0) throw ConfigError("backbone: projection_depth must be >= 1");
  if (config.d_model % group_count(config.d_model, config.norm_groups) != 0) {
    throw ConfigError("backbone: d_model not divisible by norm group count");
  }
  std::size_t in = 3;
  for (std::size_t c : config.stem_channels) {
    stem_.emplace_back(rng, in, c, 3, 2, 1);
    in = c;
  }
  const std::size_t c8 = in;
  stage16_ = Conv2d<T>(rng, c8, config.stage_channels, 3, 2, 1);
  stage32_ = Conv2d<T>(rng, config.stage_channels, config.stage_channels, 3, 2, 1);

  const std::size_t groups = group_count(config.d_model, config.norm_groups);
  const std::array<std::size_t, 3> level_in = {c8, config.stage_channels, config.stage_channels};
  for (std::size_t l = 0; l < 3; ++l) {
    auto& p = projections_[l];
    p.convs.emplace_back(rng, level_in[l], config.d_model, 1, 1, 0);
    for (std::size_t k = 1; k < config.projection_depth; ++k)
      p.convs.emplace_back(rng, config.d_model, config.d_model, 3, 1, 1);
    p.norm = GroupNorm<T>(config.d_model, groups);
  }
  extra_ = Conv2d<T>(rng, config.stage_channels, config.d_model, 3, 2, 1);
  extra_norm_ = GroupNorm<T>(config.d_model, groups);
}

template <typename T>
Tensor<T> Backbone<T>::project(const Projection& p, const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (std::size_t k = 0; k < p.convs.size(); ++k) {
    if (k > 0) h = relu(h);
    h = p.convs[k].forward(h);
  }
  return p.norm.forward(h);
}

template <typename T>
PyramidFeatures<T> Backbone<T>::forward(const Tensor<T>& image) const {
  const std::size_t s = config_.image_size;
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != s || image.dim(2) != s) {
    throw ShapeError("backbone: expected image shape " + shape_str({3, s, s}) + ", got " +
                     shape_str(image.shape()));
  }
  Tensor<T> h = image;
  for (const auto& conv : stem_) h = relu(conv.forward(h));
  const Tensor<T> f8 = h;
  const Tensor<T> f16 = relu(stage16_.forward(f8));
  const Tensor<T> f32 = relu(stage32_.forward(f16));

  PyramidFeatures<T> out;
  out.d_model = config_.d_model;
  out.levels.push_back(project(projections_[0], f8));
  out.levels.push_back(project(projections_[1], f16));
  out.levels.push_back(project(projections_[2], f32));
  out.levels.push_back(extra_norm_.forward(extra_.forward(f32)));
  return out;
}

template <typename T>
void Backbone<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < stem_.size(); ++i)
    stem_[i].collect(out, prefix + ".stem" + std::to_string(i));
  stage16_.collect(out, prefix + ".stage16");
  stage32_.collect(out, prefix + ".stage32");
  for (std::size_t l = 0; l < projections_.size(); ++l) {
    const std::string base = prefix + ".proj" + std::to_string(l);
    for (std::size_t k = 0; k < projections_[l].convs.size(); ++k)
      projections_[l].convs[k].collect(out, base + ".conv" + std::to_string(k));
    projections_[l].norm.collect(out, base + ".gn");
  }
  extra_.collect(out, prefix + ".extra");
  extra_norm_.collect(out, prefix + ".extra_gn");
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace a2j
