#pragma once

// Sinusoidal positional encodings and the shared MLP that turns anchor
// coordinates into query position embeddings.

#include <span>
#include <vector>

#include "a2j/anchors.hpp"
#include "a2j/nn.hpp"

namespace a2j {

inline constexpr double kPeTemperature = 10000.0;

// Normalized anchor coordinates: in-plane divided by the image size, depth
// mapped from [-100, +100] mm onto [0, 1].
struct AnchorQuery {
  double x = 0;
  double y = 0;
  double d = 0;
};

std::vector<AnchorQuery> anchor_queries(const AnchorSet& anchors);

// Concatenation of one width/|coords| block per coordinate. Inside a block,
// entry 2i is sin(2*pi*c / T^(2i/block)) and entry 2i+1 the matching cosine.
// Throws ConfigError unless width is divisible by 2*|coords|.
std::vector<double> pe_sinusoidal(std::span<const double> coords, std::size_t width);

// Row-stacked encodings for many positions (each row has `coords_per_row`
// coordinates). Returns a constant [N, width] tensor.
template <typename T>
Tensor<T> pe_table(std::span<const double> coords, std::size_t coords_per_row, std::size_t width);

// Width of the query encoding fed to the shared MLP: one d_model/2 block per
// coordinate (x, y, depth).
inline std::size_t query_pe_width(std::size_t d_model) { return 3 * (d_model / 2); }

// P_q = MLP(PE(a_q)); one instance is shared by every decoder layer.
template <typename T>
class AnchorQueryEncoder {
 public:
  AnchorQueryEncoder() = default;
  AnchorQueryEncoder(Rng& rng, std::size_t d_model);

  // [N, d_model] for the given queries.
  Tensor<T> forward(std::span<const AnchorQuery> queries) const;
  // Same, starting from a precomputed query_pe_rows() table.
  Tensor<T> forward_rows(const Tensor<T>& pe_rows) const { return mlp_.forward(pe_rows); }
  void collect(ParamList<T>& out, const std::string& prefix) const;
  Mlp<T>& mlp() { return mlp_; }

 private:
  Mlp<T> mlp_;
  std::size_t d_model_ = 0;
};

// Constant [N, query_pe_width(d_model)] sinusoidal table for the queries.
template <typename T>
Tensor<T> query_pe_rows(std::span<const AnchorQuery> queries, std::size_t d_model);

template <typename T>
Tensor<T> anchor_query_encoding(std::span<const AnchorQuery> queries,
                                const AnchorQueryEncoder<T>& encoder) {
  return encoder.forward(queries);
}

}  // namespace a2j
