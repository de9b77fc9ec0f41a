#pragma once

// Value-level numerics: the detached counterparts of the differentiable ops
// in autodiff.hpp. Target construction runs entirely on these.

#include <cstdint>
#include <utility>
#include <vector>

#include "bake/kernels.hpp"
#include "bake/linalg.hpp"
#include "bake/tensor.hpp"

namespace bake {

/// Set of (row, col) positions excluded from a row softmax.
class SoftmaxMask {
 public:
  SoftmaxMask(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

  /// Excludes the diagonal of an n x n matrix.
  static SoftmaxMask diagonal(std::size_t n) {
    SoftmaxMask m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.exclude(i, i);
    return m;
  }

  void exclude(std::size_t row, std::size_t col) { bits_.at(row * cols_ + col) = 1; }
  bool excluded(std::size_t row, std::size_t col) const { return bits_.at(row * cols_ + col) != 0; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  kernels::MaskView view() const noexcept { return bits_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> bits_;
};

inline Tensor matmul(const Tensor& a, const Tensor& b) { return kernels::matmul(a, b); }

inline Tensor row_l2_normalize(const Tensor& f) { return kernels::row_l2_normalize(f); }

Tensor softmax_rows(const Tensor& x, const SoftmaxMask* mask = nullptr);

inline Tensor log_softmax_rows(const Tensor& x) { return kernels::log_softmax_rows(x); }

/// Sum of each row, as an N x 1 tensor.
Tensor row_sums(const Tensor& x);

}  // namespace bake
