#pragma once

// Dense row-parallel kernels.
//
// Each kernel exists twice: `serial::` is the plain reference loop nest and
// `parallel::` distributes whole output rows across OpenMP threads. Every
// output element is accumulated in the same order in both, so the two are
// bit-identical for any thread count. The unqualified entry points pick the
// parallel variant when OpenMP is compiled in and the work is large enough.

#include <cstddef>
#include <cstdint>
#include <span>

#include "bake/tensor.hpp"

namespace bake::kernels {

/// Row-major N x K byte mask; nonzero marks a position excluded from a softmax.
using MaskView = std::span<const std::uint8_t>;

/// Geometry of a channel-major image batch stored as rows of C*H*W values.
struct ImageShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// 3x3-style square convolution with zero padding `pad` and stride 1.
struct ConvShape {
  ImageShape in;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t pad = 1;
  ImageShape out() const noexcept {
    return {out_channels, in.height + 2 * pad - kernel + 1, in.width + 2 * pad - kernel + 1};
  }
};

namespace serial {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_a_bt(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x, MaskView mask);
Tensor log_softmax_rows(const Tensor& x);
Tensor row_l2_normalize(const Tensor& x, std::span<double> norms_out);
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvShape& shape);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                     const ConvShape& shape, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);
Tensor maxpool2(const Tensor& x, const ImageShape& shape, std::span<std::uint32_t> argmax_out);
}  // namespace serial

namespace parallel {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_a_bt(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x, MaskView mask);
Tensor log_softmax_rows(const Tensor& x);
Tensor row_l2_normalize(const Tensor& x, std::span<double> norms_out);
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvShape& shape);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                     const ConvShape& shape, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);
Tensor maxpool2(const Tensor& x, const ImageShape& shape, std::span<std::uint32_t> argmax_out);
}  // namespace parallel

/// True when the library was built with OpenMP.
bool openmp_enabled() noexcept;

/// Threads the parallel kernels will use (1 without OpenMP).
int max_threads() noexcept;
void set_max_threads(int n) noexcept;

/// a (N x M) times b (M x K). Throws ShapeError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);

/// a (N x M) times b^T where b is K x M.
Tensor matmul_a_bt(const Tensor& a, const Tensor& b);

/// a^T times b where a is N x M and b is N x K.
Tensor matmul_at_b(const Tensor& a, const Tensor& b);

/// Max-subtracted row softmax. Masked entries come out exactly 0 and are
/// excluded from the denominator. Throws NumericError on a fully masked row.
Tensor softmax_rows(const Tensor& x, MaskView mask = {});

Tensor log_softmax_rows(const Tensor& x);

/// Divides each row by its Euclidean norm, writing the norms to `norms_out`
/// when non-empty. Throws NumericError naming the first zero row.
Tensor row_l2_normalize(const Tensor& x, std::span<double> norms_out = {});

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvShape& shape);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                     const ConvShape& shape, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// `argmax_out` (size N * C*(H/2)*(W/2)) receives the flat input index of each max.
Tensor maxpool2(const Tensor& x, const ImageShape& shape, std::span<std::uint32_t> argmax_out);

}  // namespace bake::kernels
