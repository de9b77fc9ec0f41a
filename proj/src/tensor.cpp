#include "bake/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "bake/error.hpp"

namespace bake {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("tensor of shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " given " + std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for tensor");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) throw ShapeError("item() on non-scalar tensor " + shape_string());
  return values_[0];
}

std::string Tensor::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> ids) const {
  Tensor out(ids.size(), cols_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows_) {
      throw ShapeError("row id " + std::to_string(ids[i]) + " out of range for " + shape_string());
    }
    std::copy_n(values_.data() + ids[i] * cols_, cols_, out.data() + i * cols_);
  }
  return out;
}

Tensor Tensor::transposed() const {
  Tensor out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) noexcept {
  for (double& v : values_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

bool all_finite(const Tensor& t) noexcept {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace bake
