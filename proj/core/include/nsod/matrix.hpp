#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace nsod {

/// Dense row-major matrix. Small by design: the library's linear algebra
/// is dot products and row/column reductions, nothing that warrants a
/// full LA dependency.
template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c, T fill = T{})
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }

  std::span<T> row(int r) {
    return {data.data() + static_cast<std::size_t>(r) * cols,
            static_cast<std::size_t>(cols)};
  }
  std::span<const T> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols,
            static_cast<std::size_t>(cols)};
  }

  bool empty() const { return data.empty(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

using MatF = Matrix<float>;
using MatD = Matrix<double>;

/// R x C matrix of region-vs-class scores. Depending on the stage it holds
/// cosine similarities S, teacher probabilities A, or MIL head scores.
using ScoreMatrix = MatD;

}  // namespace nsod
