#pragma once

#include <Eigen/Core>

namespace a2j::detail {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using StridedMapR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedMapR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

template <typename T>
inline CMapR<T> cmat(const T* p, std::size_t rows, std::size_t cols) {
  return CMapR<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
inline MapR<T> mat(T* p, std::size_t rows, std::size_t cols) {
  return MapR<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace a2j::detail
