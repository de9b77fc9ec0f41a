#include "bake/linalg.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "bake/error.hpp"

namespace bake {

Tensor linear_solve(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("linear_solve: matrix is not square, " + a.shape_string());
  if (b.rows() != n) {
    throw ShapeError("linear_solve: right-hand side " + b.shape_string() + " does not match " +
                     a.shape_string());
  }
  const std::size_t k = b.cols();
  Tensor m = a;
  Tensor x = b;

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::abs(m(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(m(r, col)) > best) {
        best = std::abs(m(r, col));
        pivot = r;
      }
    }
    if (best < kSingularPivot) {
      throw NumericError("linear_solve: singular matrix (pivot " + std::to_string(best) +
                         " at column " + std::to_string(col) + ")");
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(col, c), m(pivot, c));
      for (std::size_t c = 0; c < k; ++c) std::swap(x(col, c), x(pivot, c));
    }
    const double diag = m(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = m(r, col) / diag;
      if (factor == 0.0) continue;
      m(r, col) = 0.0;
      for (std::size_t c = col + 1; c < n; ++c) m(r, c) -= factor * m(col, c);
      for (std::size_t c = 0; c < k; ++c) x(r, c) -= factor * x(col, c);
    }
  }

  // back substitution
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t c = 0; c < k; ++c) {
      double s = x(i, c);
      for (std::size_t j = i + 1; j < n; ++j) s -= m(i, j) * x(j, c);
      x(i, c) = s / m(i, i);
    }
  }
  return x;
}

}  // namespace bake
