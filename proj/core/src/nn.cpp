#include "a2j/nn.hpp"

#include <cmath>
#include <numbers>

namespace a2j {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  for (auto& s : state_) s = splitmix64(seed);
}

// xoshiro256**
std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) { return n == 0 ? 0 : std::size_t(next_u64() % n); }

template <typename T>
Tensor<T> uniform_tensor(Rng& rng, Shape shape, double bound, bool requires_grad) {
  Buffer<T> v(numel(shape));
  for (auto& x : v) x = T(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
Tensor<T> xavier_tensor(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  return uniform_tensor<T>(rng, std::move(shape), bound, true);
}

template <typename T>
Linear<T>::Linear(Rng& rng, std::size_t in, std::size_t out)
    : weight_(xavier_tensor<T>(rng, {out, in}, in, out)),
      bias_(Tensor<T>::zeros({out}, true)) {}

template <typename T>
void Linear<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

template <typename T>
Mlp<T>::Mlp(Rng& rng, const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ConfigError("mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers_.emplace_back(rng, widths[i], widths[i + 1]);
}

template <typename T>
Tensor<T> Mlp<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

template <typename T>
void Mlp<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(out, prefix + "." + std::to_string(i));
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim)
    : gamma_(Tensor<T>::full({dim}, T(1), true)), beta_(Tensor<T>::zeros({dim}, true)) {}

template <typename T>
void LayerNorm<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".gamma", gamma_});
  out.push_back({prefix + ".beta", beta_});
}

template <typename T>
GroupNorm<T>::GroupNorm(std::size_t channels, std::size_t groups)
    : gamma_(Tensor<T>::full({channels}, T(1), true)),
      beta_(Tensor<T>::zeros({channels}, true)),
      groups_(groups) {
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError("group_norm: " + std::to_string(channels) +
                      " channels not divisible into " + std::to_string(groups) + " groups");
  }
}

template <typename T>
void GroupNorm<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".gamma", gamma_});
  out.push_back({prefix + ".beta", beta_});
}

template <typename T>
Conv2d<T>::Conv2d(Rng& rng, std::size_t in, std::size_t out, std::size_t kernel,
                  std::size_t stride, std::size_t padding)
    : weight_(xavier_tensor<T>(rng, {out, in, kernel, kernel}, in * kernel * kernel,
                               out * kernel * kernel)),
      bias_(Tensor<T>::zeros({out}, true)),
      stride_(stride),
      padding_(padding) {}

template <typename T>
void Conv2d<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

std::size_t group_count(std::size_t channels, std::size_t preferred) {
  for (std::size_t g = std::min(channels, preferred); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

#define A2J_INSTANTIATE_NN(T)                                                           \
  template Tensor<T> uniform_tensor<T>(Rng&, Shape, double, bool);                      \
  template Tensor<T> xavier_tensor<T>(Rng&, Shape, std::size_t, std::size_t);           \
  template class Linear<T>;                                                             \
  template class Mlp<T>;                                                                \
  template class LayerNorm<T>;                                                          \
  template class GroupNorm<T>;                                                          \
  template class Conv2d<T>;

A2J_INSTANTIATE_NN(float)
A2J_INSTANTIATE_NN(double)

}  // namespace a2j
