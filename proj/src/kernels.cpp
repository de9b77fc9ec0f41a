#include "bake/kernels.hpp"

#include "kernel_rows.hpp"

#ifdef BAKE_HAVE_OPENMP
#include <omp.h>
#endif

namespace bake::kernels {

namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;

bool go_parallel(std::size_t work) { return openmp_enabled() && max_threads() > 1 && work >= kParallelWork; }

}  // namespace

bool openmp_enabled() noexcept {
#ifdef BAKE_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() noexcept {
#ifdef BAKE_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) noexcept {
#ifdef BAKE_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  return go_parallel(a.rows() * a.cols() * b.cols()) ? parallel::matmul(a, b) : serial::matmul(a, b);
}

Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
  return go_parallel(a.rows() * a.cols() * b.rows()) ? parallel::matmul_a_bt(a, b)
                                                      : serial::matmul_a_bt(a, b);
}

Tensor matmul_at_b(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_at_b: outer dimensions disagree, (" + a.shape_string() + ")^T x " +
                     b.shape_string());
  }
  return matmul(a.transposed(), b);
}

Tensor softmax_rows(const Tensor& x, MaskView mask) {
  return go_parallel(x.size() * 8) ? parallel::softmax_rows(x, mask) : serial::softmax_rows(x, mask);
}

Tensor log_softmax_rows(const Tensor& x) {
  return go_parallel(x.size() * 8) ? parallel::log_softmax_rows(x) : serial::log_softmax_rows(x);
}

Tensor row_l2_normalize(const Tensor& x, std::span<double> norms_out) {
  if (!norms_out.empty() && norms_out.size() != x.rows()) {
    throw ShapeError("row_l2_normalize: norms buffer has " + std::to_string(norms_out.size()) +
                     " entries for " + x.shape_string());
  }
  return go_parallel(x.size() * 4) ? parallel::row_l2_normalize(x, norms_out)
                                   : serial::row_l2_normalize(x, norms_out);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvShape& shape) {
  return go_parallel(x.rows() * shape.out().size() * weight.cols())
             ? parallel::conv2d(x, weight, bias, shape)
             : serial::conv2d(x, weight, bias, shape);
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                     const ConvShape& shape, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b) {
  if (go_parallel(x.rows() * shape.out().size() * weight.cols()))
    parallel::conv2d_backward(x, weight, grad_out, shape, grad_x, grad_w, grad_b);
  else
    serial::conv2d_backward(x, weight, grad_out, shape, grad_x, grad_w, grad_b);
}

Tensor maxpool2(const Tensor& x, const ImageShape& shape, std::span<std::uint32_t> argmax_out) {
  return go_parallel(x.size()) ? parallel::maxpool2(x, shape, argmax_out)
                               : serial::maxpool2(x, shape, argmax_out);
}

}  // namespace bake::kernels
