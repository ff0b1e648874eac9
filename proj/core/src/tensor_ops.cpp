#include "detcnn/tensor_ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>

#include "detcnn/detmath.hpp"
#include "detcnn/error.hpp"
#include "detcnn/parallel.hpp"

namespace detcnn {

namespace {

const char* op_name(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::add: return "add";
    case ElementwiseOp::sub: return "sub";
    case ElementwiseOp::mul: return "mul";
    case ElementwiseOp::relu: return "relu";
    case ElementwiseOp::sigmoid: return "sigmoid";
    case ElementwiseOp::exp: return "exp";
    case ElementwiseOp::log: return "log";
    case ElementwiseOp::sqrt: return "sqrt";
  }
  return "?";
}

template <typename T>
void debug_check_finite([[maybe_unused]] const BasicTensor<T>& t, [[maybe_unused]] ElementwiseOp op) {
#ifndef NDEBUG
  // exp may legitimately overflow; every other op keeps finite inputs finite.
  if (op == ElementwiseOp::exp) return;
  for (T v : t.data()) assert(std::isfinite(v) && "engine op produced NaN/Inf");
#endif
}

}  // namespace

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a) {
  BasicTensor<T> out(a.shape());
  const T* x = a.ptr();
  T* y = out.ptr();
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case ElementwiseOp::sigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = detmath::sigmoid(x[i]);
      break;
    case ElementwiseOp::exp:
      for (std::size_t i = 0; i < n; ++i) y[i] = detmath::exp(x[i]);
      break;
    case ElementwiseOp::log:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > T(0))) {
          throw config_error("log of non-positive value at index " + std::to_string(i));
        }
        y[i] = detmath::log(x[i]);
      }
      break;
    case ElementwiseOp::sqrt:
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] < T(0)) throw config_error("sqrt of negative value at index " + std::to_string(i));
        y[i] = std::sqrt(x[i]);
      }
      break;
    default:
      throw config_error(std::string("elementwise op '") + op_name(op) + "' needs two operands");
  }
  debug_check_finite(out, op);
  return out;
}

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (op != ElementwiseOp::add && op != ElementwiseOp::sub && op != ElementwiseOp::mul) {
    throw config_error(std::string("elementwise op '") + op_name(op) + "' takes one operand");
  }
  const std::size_t last = a.shape().dims().back();
  const bool same = a.shape() == b.shape();
  const bool bias = b.shape().rank() == 1 && b.shape()[0] == last;
  if (!same && !bias) {
    throw config_error("elementwise " + std::string(op_name(op)) + ": shape mismatch " + a.shape().str() +
                       " vs " + b.shape().str());
  }
  BasicTensor<T> out(a.shape());
  const T* x = a.ptr();
  const T* z = b.ptr();
  T* y = out.ptr();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T rhs = same ? z[i] : z[i % last];
    switch (op) {
      case ElementwiseOp::add: y[i] = x[i] + rhs; break;
      case ElementwiseOp::sub: y[i] = x[i] - rhs; break;
      default: y[i] = x[i] * rhs; break;
    }
  }
  debug_check_finite(out, op);
  return out;
}

template <typename T>
BasicTensor<T> reduce(ReduceOp op, const BasicTensor<T>& t, std::vector<std::size_t> axes, ThreadPool* pool) {
  const auto& dims = t.shape().dims();
  const std::size_t rank = dims.size();
  if (axes.empty()) return t;
  std::vector<bool> reduced(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank) {
      throw config_error("reduce: axis " + std::to_string(a) + " invalid for shape " + t.shape().str());
    }
    if (reduced[a]) throw config_error("reduce: axis " + std::to_string(a) + " listed twice");
    reduced[a] = true;
  }

  std::vector<std::size_t> stride(rank, 1);
  for (std::size_t i = rank - 1; i > 0; --i) stride[i - 1] = stride[i] * dims[i];

  std::vector<std::size_t> kept_dims, kept_stride, red_dims, red_stride;
  for (std::size_t i = 0; i < rank; ++i) {
    if (reduced[i]) {
      red_dims.push_back(dims[i]);
      red_stride.push_back(stride[i]);
    } else {
      kept_dims.push_back(dims[i]);
      kept_stride.push_back(stride[i]);
    }
  }
  std::size_t red_count = 1;
  for (std::size_t d : red_dims) red_count *= d;

  Shape out_shape = kept_dims.empty() ? Shape{1} : Shape(kept_dims);
  BasicTensor<T> out(out_shape);
  const T* src = t.ptr();
  T* dst = out.ptr();

  parallel_for(pool, out.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(red_dims.size());
    for (std::size_t o = begin; o < end; ++o) {
      // base input offset of output element o
      std::size_t rem = o;
      std::size_t base = 0;
      for (std::size_t k = kept_dims.size(); k-- > 0;) {
        base += (rem % kept_dims[k]) * kept_stride[k];
        rem /= kept_dims[k];
      }
      std::fill(idx.begin(), idx.end(), 0);
      std::size_t offset = base;
      T acc = op == ReduceOp::max ? -std::numeric_limits<T>::infinity() : T(0);
      for (std::size_t r = 0; r < red_count; ++r) {
        const T v = src[offset];
        if (op == ReduceOp::max) {
          if (v > acc) acc = v;
        } else {
          acc += v;
        }
        // odometer over reduced axes, last axis fastest
        for (std::size_t k = red_dims.size(); k-- > 0;) {
          if (++idx[k] < red_dims[k]) {
            offset += red_stride[k];
            break;
          }
          offset -= (red_dims[k] - 1) * red_stride[k];
          idx[k] = 0;
        }
      }
      if (op == ReduceOp::mean) acc = acc / static_cast<T>(red_count);
      dst[o] = acc;
    }
  });
  return out;
}

Tensor bilinear_resize(const Tensor& t, std::size_t out_h, std::size_t out_w) {
  if (t.shape().rank() != 3) throw config_error("bilinear_resize expects [H,W,C], got " + t.shape().str());
  if (out_h == 0 || out_w == 0) throw config_error("bilinear_resize: target dims must be positive");
  const std::size_t H = t.shape()[0], W = t.shape()[1], C = t.shape()[2];
  Tensor out(Shape{out_h, out_w, C});

  struct Tap {
    std::size_t i0, i1;
    float w;
  };
  auto taps = [](std::size_t in, std::size_t out_n) {
    std::vector<Tap> v(out_n);
    for (std::size_t i = 0; i < out_n; ++i) {
      double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      v[i] = {i0, std::min(i0 + 1, in - 1), static_cast<float>(s - static_cast<double>(i0))};
    }
    return v;
  };
  const auto ty = taps(H, out_h);
  const auto tx = taps(W, out_w);

  const float* src = t.ptr();
  float* dst = out.ptr();
  for (std::size_t i = 0; i < out_h; ++i) {
    const float wy = ty[i].w;
    const float* r0 = src + ty[i].i0 * W * C;
    const float* r1 = src + ty[i].i1 * W * C;
    for (std::size_t j = 0; j < out_w; ++j) {
      const float wx = tx[j].w;
      const std::size_t c0 = tx[j].i0 * C, c1 = tx[j].i1 * C;
      for (std::size_t c = 0; c < C; ++c) {
        const float top = r0[c0 + c] * (1.0f - wx) + r0[c1 + c] * wx;
        const float bottom = r1[c0 + c] * (1.0f - wx) + r1[c1 + c] * wx;
        dst[(i * out_w + j) * C + c] = top * (1.0f - wy) + bottom * wy;
      }
    }
  }
  return out;
}

template BasicTensor<float> elementwise(ElementwiseOp, const BasicTensor<float>&);
template BasicTensor<double> elementwise(ElementwiseOp, const BasicTensor<double>&);
template BasicTensor<float> elementwise(ElementwiseOp, const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> elementwise(ElementwiseOp, const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> reduce(ReduceOp, const BasicTensor<float>&, std::vector<std::size_t>, ThreadPool*);
template BasicTensor<double> reduce(ReduceOp, const BasicTensor<double>&, std::vector<std::size_t>, ThreadPool*);

}  // namespace detcnn
