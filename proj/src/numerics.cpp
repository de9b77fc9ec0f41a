#include "bake/numerics.hpp"

#include "bake/error.hpp"

namespace bake {

Tensor softmax_rows(const Tensor& x, const SoftmaxMask* mask) {
  if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols())) {
    throw ShapeError("softmax_rows: mask " + std::to_string(mask->rows()) + "x" +
                     std::to_string(mask->cols()) + " for input " + x.shape_string());
  }
  return kernels::softmax_rows(x, mask ? mask->view() : kernels::MaskView{});
}

Tensor row_sums(const Tensor& x) {
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v;
    out(i, 0) = s;
  }
  return out;
}

}  // namespace bake
