#pragma once

// Per-row and per-sample kernel bodies shared by the serial and OpenMP
// drivers. A driver only decides which rows run where; the arithmetic and
// its accumulation order live here, once.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "bake/kernels.hpp"

namespace bake::kernels::detail {

// out row i of a(NxM) * b(MxK), i-k-j order.
inline void matmul_row(const Tensor& a, const Tensor& b, Tensor& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t k_cols = b.cols();
  double* o = out.data() + i * k_cols;
  const double* ar = a.data() + i * inner;
  for (std::size_t k = 0; k < inner; ++k) {
    const double av = ar[k];
    if (av == 0.0) continue;
    const double* br = b.data() + k * k_cols;
    for (std::size_t j = 0; j < k_cols; ++j) o[j] += av * br[j];
  }
}

// out row i of a(NxM) * b(KxM)^T.
inline void matmul_a_bt_row(const Tensor& a, const Tensor& b, Tensor& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const double* ar = a.data() + i * inner;
  double* o = out.data() + i * b.rows();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* br = b.data() + j * inner;
    double s = 0.0;
    for (std::size_t k = 0; k < inner; ++k) s += ar[k] * br[k];
    o[j] = s;
  }
}

// Returns false when every entry of the row is masked.
inline bool softmax_row(const Tensor& x, MaskView mask, Tensor& out, std::size_t i) {
  const std::size_t k = x.cols();
  const double* xr = x.data() + i * k;
  const std::uint8_t* mr = mask.empty() ? nullptr : mask.data() + i * k;
  double* o = out.data() + i * k;
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < k; ++j) {
    if (mr && mr[j]) continue;
    mx = std::max(mx, xr[j]);
    any = true;
  }
  if (!any) return false;
  double denom = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (mr && mr[j]) {
      o[j] = 0.0;
      continue;
    }
    o[j] = std::exp(xr[j] - mx);
    denom += o[j];
  }
  for (std::size_t j = 0; j < k; ++j) o[j] /= denom;
  return true;
}

inline void log_softmax_row(const Tensor& x, Tensor& out, std::size_t i) {
  const std::size_t k = x.cols();
  const double* xr = x.data() + i * k;
  double* o = out.data() + i * k;
  double mx = xr[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
  double denom = 0.0;
  for (std::size_t j = 0; j < k; ++j) denom += std::exp(xr[j] - mx);
  const double lse = mx + std::log(denom);
  for (std::size_t j = 0; j < k; ++j) o[j] = xr[j] - lse;
}

// Returns the row norm; leaves the row untouched when it is zero.
inline double l2_normalize_row(const Tensor& x, Tensor& out, std::size_t i) {
  const std::size_t d = x.cols();
  const double* xr = x.data() + i * d;
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) sq += xr[j] * xr[j];
  const double norm = std::sqrt(sq);
  if (norm == 0.0) return 0.0;
  double* o = out.data() + i * d;
  for (std::size_t j = 0; j < d; ++j) o[j] = xr[j] / norm;
  return norm;
}

inline void conv2d_sample(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvShape& s,
                          Tensor& out, std::size_t n) {
  const ImageShape os = s.out();
  const std::size_t k = s.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(s.pad);
  const double* xr = x.data() + n * s.in.size();
  double* o = out.data() + n * os.size();
  for (std::size_t oc = 0; oc < os.channels; ++oc) {
    const double* wr = w.data() + oc * w.cols();
    for (std::size_t oy = 0; oy < os.height; ++oy) {
      for (std::size_t ox = 0; ox < os.width; ++ox) {
        double acc = bias.data()[oc];
        for (std::size_t ic = 0; ic < s.in.channels; ++ic) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in.height)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in.width)) continue;
              acc += wr[(ic * k + ky) * k + kx] *
                     xr[(ic * s.in.height + static_cast<std::size_t>(iy)) * s.in.width +
                        static_cast<std::size_t>(ix)];
            }
          }
        }
        o[(oc * os.height + oy) * os.width + ox] = acc;
      }
    }
  }
}

// grad_x for one sample.
inline void conv2d_grad_input_sample(const Tensor& w, const Tensor& g, const ConvShape& s,
                                     Tensor& gx, std::size_t n) {
  const ImageShape os = s.out();
  const std::size_t k = s.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(s.pad);
  const double* gr = g.data() + n * os.size();
  double* gxr = gx.data() + n * s.in.size();
  for (std::size_t oc = 0; oc < os.channels; ++oc) {
    const double* wr = w.data() + oc * w.cols();
    for (std::size_t oy = 0; oy < os.height; ++oy) {
      for (std::size_t ox = 0; ox < os.width; ++ox) {
        const double gv = gr[(oc * os.height + oy) * os.width + ox];
        if (gv == 0.0) continue;
        for (std::size_t ic = 0; ic < s.in.channels; ++ic) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in.height)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in.width)) continue;
              gxr[(ic * s.in.height + static_cast<std::size_t>(iy)) * s.in.width +
                  static_cast<std::size_t>(ix)] += gv * wr[(ic * k + ky) * k + kx];
            }
          }
        }
      }
    }
  }
}

// grad_w row and grad_b entry for one output channel, summed over the batch.
inline void conv2d_grad_weight_channel(const Tensor& x, const Tensor& g, const ConvShape& s,
                                       Tensor* gw, Tensor* gb, std::size_t oc) {
  const ImageShape os = s.out();
  const std::size_t k = s.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(s.pad);
  double* gwr = gw ? gw->data() + oc * gw->cols() : nullptr;
  double bsum = 0.0;
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const double* xr = x.data() + n * s.in.size();
    const double* gr = g.data() + n * os.size();
    for (std::size_t oy = 0; oy < os.height; ++oy) {
      for (std::size_t ox = 0; ox < os.width; ++ox) {
        const double gv = gr[(oc * os.height + oy) * os.width + ox];
        bsum += gv;
        if (!gwr || gv == 0.0) continue;
        for (std::size_t ic = 0; ic < s.in.channels; ++ic) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in.height)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in.width)) continue;
              gwr[(ic * k + ky) * k + kx] +=
                  gv * xr[(ic * s.in.height + static_cast<std::size_t>(iy)) * s.in.width +
                          static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
  if (gb) gb->data()[oc] += bsum;
}

inline void maxpool2_sample(const Tensor& x, const ImageShape& s, Tensor& out,
                            std::span<std::uint32_t> argmax, std::size_t n) {
  const std::size_t oh = s.height / 2;
  const std::size_t ow = s.width / 2;
  const std::size_t out_size = s.channels * oh * ow;
  const double* xr = x.data() + n * s.size();
  double* o = out.data() + n * out_size;
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (c * s.height + 2 * oy) * s.width + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * s.height + 2 * oy + dy) * s.width + 2 * ox + dx;
            if (xr[idx] > xr[best]) best = idx;
          }
        }
        const std::size_t oi = (c * oh + oy) * ow + ox;
        o[oi] = xr[best];
        if (!argmax.empty()) argmax[n * out_size + oi] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

}  // namespace bake::kernels::detail

#include <string>

#include "bake/error.hpp"

namespace bake::kernels::detail {

inline void check_matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + a.shape_string() + " x " +
                     b.shape_string());
  }
}

inline void check_matmul_a_bt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_a_bt: inner dimensions disagree, " + a.shape_string() + " x (" +
                     b.shape_string() + ")^T");
  }
}

inline void check_mask(const Tensor& x, MaskView mask) {
  if (!mask.empty() && mask.size() != x.size()) {
    throw ShapeError("softmax_rows: mask has " + std::to_string(mask.size()) +
                     " entries for input " + x.shape_string());
  }
}

inline void check_conv(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvShape& s) {
  if (x.cols() != s.in.size()) {
    throw ShapeError("conv2d: input rows have " + std::to_string(x.cols()) + " values, expected " +
                     std::to_string(s.in.size()));
  }
  if (w.rows() != s.out_channels || w.cols() != s.in.channels * s.kernel * s.kernel) {
    throw ShapeError("conv2d: weight shape " + w.shape_string() + " does not match geometry");
  }
  if (bias.size() != s.out_channels) throw ShapeError("conv2d: bias shape " + bias.shape_string());
  if (s.in.height + 2 * s.pad < s.kernel || s.in.width + 2 * s.pad < s.kernel) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
}

inline void check_pool(const Tensor& x, const ImageShape& s, std::span<std::uint32_t> argmax) {
  if (x.cols() != s.size()) {
    throw ShapeError("maxpool2: input rows have " + std::to_string(x.cols()) +
                     " values, expected " + std::to_string(s.size()));
  }
  const std::size_t out = x.rows() * s.channels * (s.height / 2) * (s.width / 2);
  if (!argmax.empty() && argmax.size() != out) throw ShapeError("maxpool2: argmax buffer size");
}

[[noreturn]] inline void throw_masked_row(std::size_t row) {
  throw NumericError("softmax_rows: row " + std::to_string(row) + " is fully masked");
}

[[noreturn]] inline void throw_zero_row(std::size_t row) {
  throw NumericError("row_l2_normalize: row " + std::to_string(row) +
                     " is the zero vector (degenerate feature)");
}

}  // namespace bake::kernels::detail
