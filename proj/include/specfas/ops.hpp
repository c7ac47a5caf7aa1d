#pragma once

#include <cstddef>
#include <vector>

#include "specfas/tensor.hpp"

namespace specfas::ops {

// Elementwise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
// Throws DomainError for any value <= 0.
Tensor log(const Tensor& a);
// a^exponent; the base must be non-negative unless the exponent is integral.
Tensor pow(const Tensor& a, double exponent);
// max(a, floor); gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& a, double floor);

// [m,k] x [k,n] -> [m,n], or batched [b,m,k] x [b,k,n] -> [b,m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes of a rank-2 or rank-3 tensor.
Tensor transpose_last2(const Tensor& a);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// NHWC input [n,h,w,cin], kernel [kh,kw,cin,cout] -> [n,ho,wo,cout].
// Zero padding; ho = (h + 2*padding - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dOptions options = {});

// Reductions over the last axis use max subtraction / log-sum-exp.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
// Rows of the last axis scaled to unit L2 norm. Zero rows raise DomainError.
Tensor l2_normalize(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim = false);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor reshape(const Tensor& a, const Shape& shape);

Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace specfas::ops

namespace specfas {

inline Tensor operator+(const Tensor& a, const Tensor& b) { return ops::add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return ops::sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return ops::mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return ops::scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return ops::scale(a, s); }
inline Tensor operator-(const Tensor& a) { return ops::neg(a); }

}  // namespace specfas
