#pragma once

#include "bake/tensor.hpp"

namespace bake {

/// Smallest pivot magnitude accepted by linear_solve.
inline constexpr double kSingularPivot = 1e-12;

/// Solves a X = b for X by Gaussian elimination with partial pivoting.
///
/// `a` must be square; `b` may carry any number of right-hand-side columns.
/// Not differentiable: it only ever runs on detached values. Throws
/// ShapeError on mismatched operands and NumericError when a pivot falls
/// below kSingularPivot.
Tensor linear_solve(const Tensor& a, const Tensor& b);

}  // namespace bake
