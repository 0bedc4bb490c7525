#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "julesz/tensor.hpp"

namespace julesz {

enum class BinaryOp { add, sub, mul, div };
enum class Reduction { sum, mean };
enum class UnaryOp { relu, sqrt, log, square, neg };

// Shapes must match exactly; the scalar overload covers broadcasting a constant.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);

Tensor reduce(Reduction kind, const Tensor& x);
// Reduced axes are removed from the result shape.
Tensor reduce(Reduction kind, const Tensor& x, std::vector<std::size_t> axes);

// sqrt and log throw DomainError on non-positive input.
Tensor map(UnaryOp kind, const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
inline Tensor operator+(const Tensor& a, double b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor operator-(const Tensor& a, double b) { return elementwise(BinaryOp::sub, a, b); }
inline Tensor operator*(const Tensor& a, double b) { return elementwise(BinaryOp::mul, a, b); }
inline Tensor operator*(double a, const Tensor& b) { return elementwise(BinaryOp::mul, b, a); }
inline Tensor operator/(const Tensor& a, double b) { return elementwise(BinaryOp::div, a, b); }

inline Tensor sum(const Tensor& x) { return reduce(Reduction::sum, x); }
inline Tensor mean(const Tensor& x) { return reduce(Reduction::mean, x); }
inline Tensor relu(const Tensor& x) { return map(UnaryOp::relu, x); }
inline Tensor square(const Tensor& x) { return map(UnaryOp::square, x); }
inline Tensor log(const Tensor& x) { return map(UnaryOp::log, x); }
inline Tensor sqrt(const Tensor& x) { return map(UnaryOp::sqrt, x); }
inline Tensor operator-(const Tensor& x) { return map(UnaryOp::neg, x); }

Tensor reshape(const Tensor& x, Shape shape);

// Joins tensors whose shapes agree on every axis but `axis`.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

// Rows [begin, end) of the leading axis.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);

// Elementwise clamp to [lo, hi]; the gradient passes only where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

// Plain inner product of the values; not recorded.
double dot(const Tensor& a, const Tensor& b);

}  // namespace julesz
