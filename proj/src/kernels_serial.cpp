#include "bake/kernels.hpp"
#include "kernel_rows.hpp"

namespace bake::kernels::serial {

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_matmul(a, b);
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) detail::matmul_row(a, b, out, i);
  return out;
}

Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
  detail::check_matmul_a_bt(a, b);
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) detail::matmul_a_bt_row(a, b, out, i);
  return out;
}

Tensor softmax_rows(const Tensor& x, MaskView mask) {
  detail::check_mask(x, mask);
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (!detail::softmax_row(x, mask, out, i)) detail::throw_masked_row(i);
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  Tensor out(x.rows(), x.cols());
  if (x.cols() == 0) return out;
  for (std::size_t i = 0; i < x.rows(); ++i) detail::log_softmax_row(x, out, i);
  return out;
}

Tensor row_l2_normalize(const Tensor& x, std::span<double> norms_out) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double norm = detail::l2_normalize_row(x, out, i);
    if (norm == 0.0) detail::throw_zero_row(i);
    if (!norms_out.empty()) norms_out[i] = norm;
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvShape& shape) {
  detail::check_conv(x, weight, bias, shape);
  Tensor out(x.rows(), shape.out().size());
  for (std::size_t n = 0; n < x.rows(); ++n) detail::conv2d_sample(x, weight, bias, shape, out, n);
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                     const ConvShape& shape, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b) {
  if (grad_x) {
    for (std::size_t n = 0; n < x.rows(); ++n)
      detail::conv2d_grad_input_sample(weight, grad_out, shape, *grad_x, n);
  }
  if (grad_w || grad_b) {
    for (std::size_t oc = 0; oc < shape.out_channels; ++oc)
      detail::conv2d_grad_weight_channel(x, grad_out, shape, grad_w, grad_b, oc);
  }
}

Tensor maxpool2(const Tensor& x, const ImageShape& shape, std::span<std::uint32_t> argmax_out) {
  detail::check_pool(x, shape, argmax_out);
  Tensor out(x.rows(), shape.channels * (shape.height / 2) * (shape.width / 2));
  for (std::size_t n = 0; n < x.rows(); ++n) detail::maxpool2_sample(x, shape, out, argmax_out, n);
  return out;
}

}  // namespace bake::kernels::serial
