#pragma once

#include <span>

#include "pft/numerics/tensor.hpp"

namespace pft {

// Differentiable operations. Each validates shapes, rejects non-finite results
// with NumericError and records itself on the active Tape when any operand
// requires a gradient.
//
// Binary elementwise ops accept equal shapes, or a rank-1 right operand whose
// length equals the last extent of the left one (broadcast over rows).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor mean_over_axis(const Tensor& a, std::size_t axis);

inline constexpr double kStdEpsilon = 1e-6;
/// Population standard deviation, sqrt(var + eps); the reduced extent must be >= 2.
Tensor std_over_axis(const Tensor& a, std::size_t axis, double eps = kStdEpsilon);

/// Log-softmax over the last axis.
Tensor log_softmax(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor square(const Tensor& a);

}  // namespace pft
