#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bake {

/// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xK.
///
/// Every array in the toolkit (inputs, features, logits, affinities, soft
/// targets, parameters) is a Tensor; gradient tracking lives on the Tape,
/// not here.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  /// Scalar value of a 1x1 tensor; throws ShapeError otherwise.
  double item() const;

  /// "RxC", used in error messages.
  std::string shape_string() const;

  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  /// Rows at `ids`, in order.
  Tensor gather_rows(std::span<const std::size_t> ids) const;

  Tensor transposed() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s) noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

/// Largest absolute elementwise difference; shapes must agree.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// True when every value is finite.
bool all_finite(const Tensor& t) noexcept;

/// Throws ShapeError naming `what` unless the shapes agree.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace bake
