#pragma once

// Parameters, deterministic initialization and the small reusable layers
// (linear, MLP, layer norm) the model is assembled from.

#include <cstdint>
#include <string>
#include <vector>

#include "a2j/ops.hpp"
#include "a2j/tensor.hpp"

namespace a2j {

// A named learnable array. The gradient lives on the tensor node and has the
// value's shape once any backward pass has touched it.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> tensor;

  std::span<const T> grad() const { return tensor.grad(); }
  void zero_grad() { tensor.mutable_grad(); tensor.zero_grad(); }
};

template <typename T>
using ParamList = std::vector<Param<T>>;

template <typename T>
void zero_grads(ParamList<T>& params) {
  for (auto& p : params) p.zero_grad();
}

inline std::size_t count_values(const auto& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

// xoshiro256** seeded through SplitMix64. Uniform and normal draws are
// hand-rolled so sequences do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next_u64();
  double uniform();                      // [0,1)
  double uniform(double lo, double hi);  // [lo,hi)
  double normal();                       // Box-Muller
  std::size_t below(std::size_t n);      // [0,n)

 private:
  std::uint64_t state_[4];
};

template <typename T>
Tensor<T> uniform_tensor(Rng& rng, Shape shape, double bound, bool requires_grad = true);

// Xavier/Glorot uniform for a weight with the given fan-in and fan-out.
template <typename T>
Tensor<T> xavier_tensor(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(Rng& rng, std::size_t in, std::size_t out);

  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight_, bias_); }
  void collect(ParamList<T>& out, const std::string& prefix) const;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  std::size_t in_features() const { return weight_.dim(1); }
  std::size_t out_features() const { return weight_.dim(0); }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

// Fully connected stack with ReLU between layers (none after the last).
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  // widths = {in, hidden..., out}
  Mlp(Rng& rng, const std::vector<std::size_t>& widths);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(ParamList<T>& out, const std::string& prefix) const;

  std::vector<Linear<T>>& layers() { return layers_; }

 private:
  std::vector<Linear<T>> layers_;
};

template <typename T>
Tensor<T> mlp_forward(const Mlp<T>& mlp, const Tensor<T>& x) {
  return mlp.forward(x);
}

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma_, beta_); }
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  Tensor<T> gamma_;
  Tensor<T> beta_;
};

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(std::size_t channels, std::size_t groups);

  Tensor<T> forward(const Tensor<T>& x) const { return group_norm(x, gamma_, beta_, groups_); }
  void collect(ParamList<T>& out, const std::string& prefix) const;

 private:
  Tensor<T> gamma_;
  Tensor<T> beta_;
  std::size_t groups_ = 1;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Rng& rng, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
         std::size_t padding);

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight_, bias_, stride_, padding_);
  }
  void collect(ParamList<T>& out, const std::string& prefix) const;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  std::size_t stride() const { return stride_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  std::size_t stride_ = 1;
  std::size_t padding_ = 0;
};

// Largest divisor of `channels` not exceeding `preferred`, used to pick a
// valid group count for narrow layers.
std::size_t group_count(std::size_t channels, std::size_t preferred);

}  // namespace a2j
