#pragma once

#include <cstddef>
#include <vector>

#include "detcnn/tensor.hpp"

namespace detcnn {

class ThreadPool;

enum class ElementwiseOp { add, sub, mul, relu, sigmoid, exp, log, sqrt };
enum class ReduceOp { sum, mean, max };

/// Unary op. Elements are evaluated in index order; exp/log/sigmoid use
/// detmath so results do not depend on the platform libm.
/// log of a non-positive element throws.
template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a);

/// Binary op (add/sub/mul). `b` must have a's shape, or be rank-1 with the
/// length of a's last axis (bias-style broadcast).
template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Reduces over `axes` (removed from the result; reducing every axis gives
/// shape [1]). Each output element is one sequential accumulation in
/// ascending input-index order, so results are identical for any pool size.
/// An empty axis set returns a copy.
template <typename T>
BasicTensor<T> reduce(ReduceOp op, const BasicTensor<T>& t, std::vector<std::size_t> axes,
                      ThreadPool* pool = nullptr);

/// Bilinear resize of an [H,W,C] tensor with half-pixel centers:
/// src = (i + 0.5) * H / out_h - 0.5, clamped to [0, H-1].
/// Interpolation is top*(1-wy) + bottom*wy with top/bottom = a*(1-wx) + b*wx.
Tensor bilinear_resize(const Tensor& t, std::size_t out_h, std::size_t out_w);

}  // namespace detcnn
