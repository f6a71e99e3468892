#include "a2j/encoding.hpp"

#include <cmath>
#include <numbers>

namespace a2j {

std::vector<AnchorQuery> anchor_queries(const AnchorSet& anchors) {
  std::vector<AnchorQuery> q;
  q.reserve(anchors.size());
  const double s = double(anchors.image_size);
  for (const auto& a : anchors.anchors) q.push_back({a.x / s, a.y / s, (a.depth + 100.0) / 200.0});
  return q;
}

std::vector<double> pe_sinusoidal(std::span<const double> coords, std::size_t width) {
  if (coords.empty() || width == 0 || width % (2 * coords.size()) != 0) {
    throw ConfigError("pe_sinusoidal: width " + std::to_string(width) +
                      " must be divisible by 2 x " + std::to_string(coords.size()) + " coords");
  }
  const std::size_t block = width / coords.size();
  std::vector<double> out(width);
  for (std::size_t c = 0; c < coords.size(); ++c) {
    for (std::size_t i = 0; i < block / 2; ++i) {
      const double freq =
          2.0 * std::numbers::pi / std::pow(kPeTemperature, double(2 * i) / double(block));
      const double arg = coords[c] * freq;
      out[c * block + 2 * i] = std::sin(arg);
      out[c * block + 2 * i + 1] = std::cos(arg);
    }
  }
  return out;
}

template <typename T>
Tensor<T> pe_table(std::span<const double> coords, std::size_t coords_per_row, std::size_t width) {
  if (coords_per_row == 0 || coords.size() % coords_per_row != 0) {
    throw ShapeError("pe_table: coordinate count not a multiple of the row width");
  }
  const std::size_t n = coords.size() / coords_per_row;
  Buffer<T> v;
  v.reserve(n * width);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = pe_sinusoidal(coords.subspan(r * coords_per_row, coords_per_row), width);
    for (double x : row) v.push_back(T(x));
  }
  return Tensor<T>({n, width}, std::move(v));
}

template <typename T>
AnchorQueryEncoder<T>::AnchorQueryEncoder(Rng& rng, std::size_t d_model)
    : mlp_(rng, {query_pe_width(d_model), d_model, d_model}), d_model_(d_model) {
  if (d_model % 2 != 0) throw ConfigError("d_model must be even");
}

template <typename T>
Tensor<T> query_pe_rows(std::span<const AnchorQuery> queries, std::size_t d_model) {
  std::vector<double> coords;
  coords.reserve(queries.size() * 3);
  for (const auto& q : queries) {
    coords.push_back(q.x);
    coords.push_back(q.y);
    coords.push_back(q.d);
  }
  return pe_table<T>(coords, 3, query_pe_width(d_model));
}

template <typename T>
Tensor<T> AnchorQueryEncoder<T>::forward(std::span<const AnchorQuery> queries) const {
  return mlp_.forward(query_pe_rows<T>(queries, d_model_));
}

template <typename T>
void AnchorQueryEncoder<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  mlp_.collect(out, prefix + ".mlp");
}

template Tensor<float> pe_table<float>(std::span<const double>, std::size_t, std::size_t);
template Tensor<double> pe_table<double>(std::span<const double>, std::size_t, std::size_t);
template Tensor<float> query_pe_rows<float>(std::span<const AnchorQuery>, std::size_t);
template Tensor<double> query_pe_rows<double>(std::span<const AnchorQuery>, std::size_t);
template class AnchorQueryEncoder<float>;
template class AnchorQueryEncoder<double>;

}  // namespace a2j
