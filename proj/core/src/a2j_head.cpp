#include "a2j/a2j_head.hpp"

namespace a2j {

using detail::make_result;
using detail::set_backward;
using detail::wants_grad;

template <typename T>
Tensor<T> anchor_coords(const AnchorSet& anchors) {
  Buffer<T> v;
  v.reserve(anchors.size() * 3);
  for (const auto& a : anchors.anchors) {
    v.push_back(T(a.x));
    v.push_back(T(a.y));
    v.push_back(T(a.depth));
  }
  return Tensor<T>({anchors.size(), 3}, std::move(v));
}

template <typename T>
Tensor<T> anchor_reference(const AnchorSet& anchors) {
  if (anchors.image_size == 0) throw ConfigError("anchor set has no image size");
  const double s = double(anchors.image_size);
  Buffer<T> v;
  v.reserve(anchors.size() * 2);
  for (const auto& a : anchors.anchors) {
    v.push_back(T(a.x / s));
    v.push_back(T(a.y / s));
  }
  return Tensor<T>({anchors.size(), 2}, std::move(v));
}

template <typename T>
Tensor<T> a2j_fuse(const Tensor<T>& coords, const Tensor<T>& offsets,
                   const Tensor<T>& norm_weights) {
  if (coords.rank() != 2 || coords.dim(1) != 3) {
    throw ShapeError("a2j_fuse: anchor coords must be [A,3], got " + shape_str(coords.shape()));
  }
  if (norm_weights.rank() != 2) {
    throw ShapeError("a2j_fuse: weights must be [A,J], got " + shape_str(norm_weights.shape()));
  }
  const std::size_t na = coords.dim(0), nj = norm_weights.dim(1);
  if (norm_weights.dim(0) != na) {
    throw ShapeError("a2j_fuse: anchor ordering mismatch, " + std::to_string(na) +
                     " anchors vs weights " + shape_str(norm_weights.shape()));
  }
  const bool has_offsets = offsets.defined();
  if (has_offsets && offsets.shape() != Shape{na, nj, 3}) {
    throw ShapeError("a2j_fuse: anchor ordering mismatch, offsets " + shape_str(offsets.shape()) +
                     " vs weights " + shape_str(norm_weights.shape()));
  }

  Buffer<T> out(nj * 3, T(0));
  for (std::size_t a = 0; a < na; ++a) {
    const T* c = coords.data() + a * 3;
    for (std::size_t j = 0; j < nj; ++j) {
      const T w = norm_weights[a * nj + j];
      for (std::size_t k = 0; k < 3; ++k) {
        const T o = has_offsets ? offsets[(a * nj + j) * 3 + k] : T(0);
        out[j * 3 + k] += w * (c[k] + o);
      }
    }
  }

  auto result = make_result<T>(Shape{nj, 3}, std::move(out), {&coords, &offsets, &norm_weights});
  set_backward(result, [o = result.node().get(), cn = coords.node().get(),
                        on = has_offsets ? offsets.node().get() : nullptr,
                        wn = norm_weights.node().get(), na, nj] {
    const bool dc = wants_grad(cn);
    const bool doff = on && wants_grad(on);
    const bool dw = wants_grad(wn);
    const T* g = o->grad.data();
    for (std::size_t a = 0; a < na; ++a) {
      const T* c = cn->value.data() + a * 3;
      for (std::size_t j = 0; j < nj; ++j) {
        const T w = wn->value[a * nj + j];
        T acc = 0;
        for (std::size_t k = 0; k < 3; ++k) {
          const std::size_t oi = (a * nj + j) * 3 + k;
          const T off = on ? on->value[oi] : T(0);
          acc += g[j * 3 + k] * (c[k] + off);
          if (doff) on->grad[oi] += w * g[j * 3 + k];
          if (dc) cn->grad[a * 3 + k] += w * g[j * 3 + k];
        }
        if (dw) wn->grad[a * nj + j] += acc;
      }
    }
  });
  return result;
}

template <typename T>
OffsetBranch<T>::OffsetBranch(Rng& rng, const HeadConfig& config)
    : joints_(config.joints),
      scale_inplane_(T(config.offset_scale_inplane)),
      scale_depth_(T(config.offset_scale_depth)) {
  if (config.layers == 0) throw ConfigError("offset branch needs at least one layer");
  std::vector<std::size_t> widths(config.layers, config.d_model);
  widths.push_back(config.joints * 3);
  mlp_ = Mlp<T>(rng, widths);
}

template <typename T>
Tensor<T> OffsetBranch<T>::forward(const Tensor<T>& embeddings) const {
  const std::size_t na = embeddings.dim(0);
  Tensor<T> raw = mlp_.forward(embeddings);
  Buffer<T> s(na * joints_ * 3);
  for (std::size_t i = 0; i < s.size(); i += 3) {
    s[i] = scale_inplane_;
    s[i + 1] = scale_inplane_;
    s[i + 2] = scale_depth_;
  }
  return reshape(mul(raw, Tensor<T>({na, joints_ * 3}, std::move(s))), {na, joints_, 3});
}

template <typename T>
void OffsetBranch<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  mlp_.collect(out, prefix);
}

template <typename T>
WeightBranch<T>::WeightBranch(Rng& rng, const HeadConfig& config) {
  if (config.layers == 0) throw ConfigError("weight branch needs at least one layer");
  std::vector<std::size_t> widths(config.layers, config.d_model);
  widths.push_back(config.joints);
  mlp_ = Mlp<T>(rng, widths);
}

template <typename T>
PredictionBundle<T> fuse(const AnchorSet& anchors, const Tensor<T>& offsets,
                         const Tensor<T>& raw_weights) {
  PredictionBundle<T> b;
  b.offsets = offsets;
  b.raw_weights = raw_weights;
  const std::size_t nj = offsets.rank() == 3 ? offsets.dim(1) : 0;
  if (offsets.rank() != 3 || offsets.dim(0) != anchors.size()) {
    throw ShapeError("fuse: anchor ordering mismatch, " + std::to_string(anchors.size()) +
                     " anchors vs offsets " + shape_str(offsets.shape()));
  }
  if (raw_weights.defined()) {
    if (raw_weights.shape() != Shape{anchors.size(), nj}) {
      throw ShapeError("fuse: anchor ordering mismatch, weights " +
                       shape_str(raw_weights.shape()) + " vs offsets " +
                       shape_str(offsets.shape()));
    }
    b.norm_weights = normalize_weights(raw_weights);
  } else {
    b.norm_weights = uniform_weights<T>(anchors.size(), nj);
  }
  b.joints = a2j_fuse(anchor_coords<T>(anchors), offsets, b.norm_weights);
  return b;
}

template <typename T>
A2JHead<T>::A2JHead(Rng& rng, const HeadConfig& config)
    : config_(config), offsets_(rng, config) {
  if (config.learned_weights) weights_ = WeightBranch<T>(rng, config);
}

template <typename T>
PredictionBundle<T> A2JHead<T>::forward(const Tensor<T>& embeddings,
                                        const AnchorSet& anchors) const {
  const Tensor<T> offsets = offsets_.forward(embeddings);
  const Tensor<T> raw = config_.learned_weights ? weights_.forward(embeddings) : Tensor<T>();
  return fuse(anchors, offsets, raw);
}

template <typename T>
void A2JHead<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  offsets_.collect(out, prefix + ".offset");
  if (config_.learned_weights) weights_.collect(out, prefix + ".weight");
}

#define A2J_INSTANTIATE_HEAD(T)                                                     \
  template Tensor<T> anchor_coords<T>(const AnchorSet&);                            \
  template Tensor<T> anchor_reference<T>(const AnchorSet&);                         \
  template Tensor<T> a2j_fuse(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template PredictionBundle<T> fuse(const AnchorSet&, const Tensor<T>&, const Tensor<T>&); \
  template class OffsetBranch<T>;                                                   \
  template class WeightBranch<T>;                                                   \
  template class A2JHead<T>;

A2J_INSTANTIATE_HEAD(float)
A2J_INSTANTIATE_HEAD(double)

}  // namespace a2j
