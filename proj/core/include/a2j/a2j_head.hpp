#pragma once

// Anchor offset/weight estimation: each anchor regresses a 3D offset and a
// weight towards every joint, and joints are recovered as the weighted sum
// of (anchor + offset) with weights soft-maxed over anchors.

#include "a2j/anchors.hpp"
#include "a2j/nn.hpp"

namespace a2j {

template <typename T>
struct PredictionBundle {
  Tensor<T> offsets;       // [A, J, 3]: in-plane x, y (pixels), depth (mm)
  Tensor<T> raw_weights;   // [A, J]; undefined when weights are not learned
  Tensor<T> norm_weights;  // [A, J], columns sum to 1
  Tensor<T> joints;        // [J, 3]
};

// Constant [A, 3] tensor of (x, y, depth) per anchor.
template <typename T>
Tensor<T> anchor_coords(const AnchorSet& anchors);

// Constant [A, 2] tensor of anchor (x, y) divided by the image size.
template <typename T>
Tensor<T> anchor_reference(const AnchorSet& anchors);

// joints[j, c] = sum_a w[a, j] * (coords[a, c] + offsets[a, j, c]).
// `offsets` may be undefined, meaning zero. Throws ShapeError when anchor
// counts disagree.
template <typename T>
Tensor<T> a2j_fuse(const Tensor<T>& coords, const Tensor<T>& offsets, const Tensor<T>& norm_weights);

// Softmax over anchors (axis 0) of raw [A, J] weights.
template <typename T>
Tensor<T> normalize_weights(const Tensor<T>& raw) {
  return softmax(raw, 0);
}

// Exactly 1/A everywhere.
template <typename T>
Tensor<T> uniform_weights(std::size_t anchors, std::size_t joints) {
  return Tensor<T>::full({anchors, joints}, T(1) / T(anchors));
}

struct HeadConfig {
  std::size_t d_model = 64;
  std::size_t joints = 42;
  std::size_t layers = 2;  // linear layers per branch, hidden width d_model
  // Raw branch outputs are multiplied by these before use.
  double offset_scale_inplane = 16.0;
  double offset_scale_depth = 100.0;
  bool learned_weights = true;
};

template <typename T>
class OffsetBranch {
 public:
  OffsetBranch() = default;
  OffsetBranch(Rng& rng, const HeadConfig& config);

  // [A, d] -> [A, J, 3]
  Tensor<T> forward(const Tensor<T>& embeddings) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;
  Mlp<T>& mlp() { return mlp_; }

 private:
  Mlp<T> mlp_;
  std::size_t joints_ = 0;
  T scale_inplane_ = T(1);
  T scale_depth_ = T(1);
};

template <typename T>
class WeightBranch {
 public:
  WeightBranch() = default;
  WeightBranch(Rng& rng, const HeadConfig& config);

  // [A, d] -> raw [A, J]
  Tensor<T> forward(const Tensor<T>& embeddings) const { return mlp_.forward(embeddings); }
  void collect(ParamList<T>& out, const std::string& prefix) const { mlp_.collect(out, prefix); }
  Mlp<T>& mlp() { return mlp_; }

 private:
  Mlp<T> mlp_;
};

// Builds the bundle from branch outputs. raw_weights may be undefined, in
// which case the weights are uniform.
template <typename T>
PredictionBundle<T> fuse(const AnchorSet& anchors, const Tensor<T>& offsets,
                         const Tensor<T>& raw_weights);

template <typename T>
class A2JHead {
 public:
  A2JHead() = default;
  A2JHead(Rng& rng, const HeadConfig& config);

  PredictionBundle<T> forward(const Tensor<T>& embeddings, const AnchorSet& anchors) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

  const HeadConfig& config() const { return config_; }
  OffsetBranch<T>& offsets() { return offsets_; }
  WeightBranch<T>& weights() { return weights_; }

 private:
  HeadConfig config_;
  OffsetBranch<T> offsets_;
  WeightBranch<T> weights_;
};

}  // namespace a2j
