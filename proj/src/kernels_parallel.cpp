#include <atomic>
#include <limits>

#include "bake/kernels.hpp"
#include "kernel_rows.hpp"

#ifdef BAKE_HAVE_OPENMP
#include <omp.h>
#endif

namespace bake::kernels::parallel {

namespace {

// Loop indices for `omp for` must be signed.
std::ptrdiff_t count(std::size_t n) { return static_cast<std::ptrdiff_t>(n); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_matmul(a, b);
  Tensor out(a.rows(), b.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count(a.rows()); ++i)
    detail::matmul_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
  detail::check_matmul_a_bt(a, b);
  Tensor out(a.rows(), b.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count(a.rows()); ++i)
    detail::matmul_a_bt_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

Tensor softmax_rows(const Tensor& x, MaskView mask) {
  detail::check_mask(x, mask);
  Tensor out(x.rows(), x.cols());
  std::atomic<std::size_t> bad_row{std::numeric_limits<std::size_t>::max()};
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count(x.rows()); ++i) {
    const auto r = static_cast<std::size_t>(i);
    if (!detail::softmax_row(x, mask, out, r)) {
      std::size_t cur = bad_row.load();
      while (r < cur && !bad_row.compare_exchange_weak(cur, r)) {
      }
    }
  }
  if (bad_row.load() != std::numeric_limits<std::size_t>::max()) detail::throw_masked_row(bad_row);
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  Tensor out(x.rows(), x.cols());
  if (x.cols() == 0) return out;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count(x.rows()); ++i)
    detail::log_softmax_row(x, out, static_cast<std::size_t>(i));
  return out;
}

Tensor row_l2_normalize(const Tensor& x, std::span<double> norms_out) {
  Tensor out(x.rows(), x.cols());
  std::atomic<std::size_t> bad_row{std::numeric_limits<std::size_t>::max()};
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count(x.rows()); ++i) {
    const auto r = static_cast<std::size_t>(i);
    const double norm = detail::l2_normalize_row(x, out, r);
    if (norm == 0.0) {
      std::size_t cur = bad_row.load();
      while (r < cur && !bad_row.compare_exchange_weak(cur, r)) {
      }
    }
    if (!norms_out.empty()) norms_out[r] = norm;
  }
  if (bad_row.load() != std::numeric_limits<std::size_t>::max()) detail::throw_zero_row(bad_row);
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvShape& shape) {
  detail::check_conv(x, weight, bias, shape);
  Tensor out(x.rows(), shape.out().size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < count(x.rows()); ++n)
    detail::conv2d_sample(x, weight, bias, shape, out, static_cast<std::size_t>(n));
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                     const ConvShape& shape, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b) {
  if (grad_x) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < count(x.rows()); ++n)
      detail::conv2d_grad_input_sample(weight, grad_out, shape, *grad_x, static_cast<std::size_t>(n));
  }
  if (grad_w || grad_b) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t oc = 0; oc < count(shape.out_channels); ++oc)
      detail::conv2d_grad_weight_channel(x, grad_out, shape, grad_w, grad_b,
                                         static_cast<std::size_t>(oc));
  }
}

Tensor maxpool2(const Tensor& x, const ImageShape& shape, std::span<std::uint32_t> argmax_out) {
  detail::check_pool(x, shape, argmax_out);
  Tensor out(x.rows(), shape.channels * (shape.height / 2) * (shape.width / 2));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < count(x.rows()); ++n)
    detail::maxpool2_sample(x, shape, out, argmax_out, static_cast<std::size_t>(n));
  return out;
}

}  // namespace bake::kernels::parallel
