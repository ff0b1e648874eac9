// Direct convolution kernels (no im2col/FFT/Winograd).
//
// Accumulation orders, fixed for every worker count:
//   forward        y[n,oh,ow,co] = (sum over kh, kw, ci ascending of x*w) + bias
//   input grad     per sample, scatter in (oh, ow, kh, kw, co) order
//   kernel grad    dW[kh,kw,ci,co] summed over (n, oh, ow) ascending
// Padding taps are skipped rather than multiplied by zero.

#include <algorithm>

#include "detcnn/error.hpp"
#include "detcnn/layers.hpp"
#include "detcnn/parallel.hpp"
#include "layer_impl.hpp"

namespace detcnn::detail {

namespace {

struct ConvGeom {
  std::size_t n, h, w, cin;
  std::size_t oh, ow, cout;
  std::size_t k, stride, pad_t, pad_l;
};

ConvGeom make_geom(const Shape& x, std::size_t k, std::size_t stride, Padding padding, std::size_t cout) {
  const auto gh = window_geometry(x[1], k, stride, padding);
  const auto gw = window_geometry(x[2], k, stride, padding);
  return {x[0], x[1], x[2], x[3], gh.out, gw.out, cout, k, stride, gh.pad_before, gw.pad_before};
}

// Input coordinate of output position o and tap t, or -1 when it falls in padding.
inline long tap(std::size_t o, std::size_t t, std::size_t stride, std::size_t pad, std::size_t in) {
  const long i = static_cast<long>(o * stride + t) - static_cast<long>(pad);
  return (i < 0 || i >= static_cast<long>(in)) ? -1 : i;
}

template <typename T>
BasicTensor<T> conv_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>* bias,
                            const ConvGeom& g, ThreadPool* pool) {
  BasicTensor<T> y(Shape{g.n, g.oh, g.ow, g.cout});
  const T* xp = x.ptr();
  const T* kp = kernel.ptr();
  T* yp = y.ptr();
  parallel_for(pool, g.n * g.oh, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const std::size_t n = row / g.oh, oy = row % g.oh;
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        T* out = yp + ((n * g.oh + oy) * g.ow + ox) * g.cout;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const long iy = tap(oy, kh, g.stride, g.pad_t, g.h);
          if (iy < 0) continue;
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const long ix = tap(ox, kw, g.stride, g.pad_l, g.w);
            if (ix < 0) continue;
            const T* xv = xp + ((n * g.h + iy) * g.w + ix) * g.cin;
            const T* wk = kp + (kh * g.k + kw) * g.cin * g.cout;
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              const T v = xv[ci];
              const T* wr = wk + ci * g.cout;
              for (std::size_t co = 0; co < g.cout; ++co) out[co] += v * wr[co];
            }
          }
        }
        if (bias) {
          const T* b = bias->ptr();
          for (std::size_t co = 0; co < g.cout; ++co) out[co] += b[co];
        }
      }
    }
  });
  return y;
}

template <typename T>
BasicTensor<T> conv_backward_input(const BasicTensor<T>& dy, const BasicTensor<T>& kernel, const ConvGeom& g,
                                   ThreadPool* pool) {
  // kernel transposed to [kh, kw, co, ci] so the inner loop runs over ci
  BasicTensor<T> kt(Shape{g.k, g.k, g.cout, g.cin});
  for (std::size_t t = 0; t < g.k * g.k; ++t) {
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        kt[(t * g.cout + co) * g.cin + ci] = kernel[(t * g.cin + ci) * g.cout + co];
      }
    }
  }
  BasicTensor<T> dx(Shape{g.n, g.h, g.w, g.cin});
  parallel_for(pool, g.n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = begin; n < end; ++n) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const T* gv = dy.ptr() + ((n * g.oh + oy) * g.ow + ox) * g.cout;
          for (std::size_t kh = 0; kh < g.k; ++kh) {
            const long iy = tap(oy, kh, g.stride, g.pad_t, g.h);
            if (iy < 0) continue;
            for (std::size_t kw = 0; kw < g.k; ++kw) {
              const long ix = tap(ox, kw, g.stride, g.pad_l, g.w);
              if (ix < 0) continue;
              T* dxp = dx.ptr() + ((n * g.h + iy) * g.w + ix) * g.cin;
              const T* wt = kt.ptr() + (kh * g.k + kw) * g.cout * g.cin;
              for (std::size_t co = 0; co < g.cout; ++co) {
                const T gco = gv[co];
                const T* wr = wt + co * g.cin;
                for (std::size_t ci = 0; ci < g.cin; ++ci) dxp[ci] += gco * wr[ci];
              }
            }
          }
        }
      }
    }
  });
  return dx;
}

template <typename T>
BasicTensor<T> conv_backward_kernel(const BasicTensor<T>& x, const BasicTensor<T>& dy, const ConvGeom& g,
                                    ThreadPool* pool) {
  BasicTensor<T> dk(Shape{g.k, g.k, g.cin, g.cout});
  const std::size_t rows = g.k * g.k * g.cin;
  // each worker owns a contiguous range of (kh, kw, ci) rows of dW
  parallel_for(pool, rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const T* gv = dy.ptr() + ((n * g.oh + oy) * g.ow + ox) * g.cout;
          for (std::size_t t = begin / g.cin; t * g.cin < end; ++t) {
            const std::size_t kh = t / g.k, kw = t % g.k;
            const long iy = tap(oy, kh, g.stride, g.pad_t, g.h);
            const long ix = tap(ox, kw, g.stride, g.pad_l, g.w);
            if (iy < 0 || ix < 0) continue;
            const T* xv = x.ptr() + ((n * g.h + iy) * g.w + ix) * g.cin;
            const std::size_t c0 = std::max(begin, t * g.cin) - t * g.cin;
            const std::size_t c1 = std::min(end, (t + 1) * g.cin) - t * g.cin;
            for (std::size_t ci = c0; ci < c1; ++ci) {
              const T v = xv[ci];
              T* dr = dk.ptr() + (t * g.cin + ci) * g.cout;
              for (std::size_t co = 0; co < g.cout; ++co) dr[co] += v * gv[co];
            }
          }
        }
      }
    }
  });
  return dk;
}

template <typename T>
BasicTensor<T> bias_grad(const BasicTensor<T>& dy, std::size_t cout) {
  BasicTensor<T> db(Shape{cout});
  const std::size_t rows = dy.size() / cout;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* gv = dy.ptr() + r * cout;
    for (std::size_t co = 0; co < cout; ++co) db[co] += gv[co];
  }
  return db;
}

// Depthwise (multiplier 1): y[n,oh,ow,c] = sum over kh, kw ascending of x*d.
template <typename T>
BasicTensor<T> depthwise_forward(const BasicTensor<T>& x, const BasicTensor<T>& dk, const ConvGeom& g,
                                 ThreadPool* pool) {
  BasicTensor<T> y(Shape{g.n, g.oh, g.ow, g.cin});
  parallel_for(pool, g.n * g.oh, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const std::size_t n = row / g.oh, oy = row % g.oh;
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        T* out = y.ptr() + ((n * g.oh + oy) * g.ow + ox) * g.cin;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const long iy = tap(oy, kh, g.stride, g.pad_t, g.h);
          if (iy < 0) continue;
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const long ix = tap(ox, kw, g.stride, g.pad_l, g.w);
            if (ix < 0) continue;
            const T* xv = x.ptr() + ((n * g.h + iy) * g.w + ix) * g.cin;
            const T* dr = dk.ptr() + (kh * g.k + kw) * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c) out[c] += xv[c] * dr[c];
          }
        }
      }
    }
  });
  return y;
}

template <typename T>
BasicTensor<T> depthwise_backward_input(const BasicTensor<T>& dy, const BasicTensor<T>& dk, const ConvGeom& g,
                                        ThreadPool* pool) {
  BasicTensor<T> dx(Shape{g.n, g.h, g.w, g.cin});
  parallel_for(pool, g.n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = begin; n < end; ++n) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const T* gv = dy.ptr() + ((n * g.oh + oy) * g.ow + ox) * g.cin;
          for (std::size_t kh = 0; kh < g.k; ++kh) {
            const long iy = tap(oy, kh, g.stride, g.pad_t, g.h);
            if (iy < 0) continue;
            for (std::size_t kw = 0; kw < g.k; ++kw) {
              const long ix = tap(ox, kw, g.stride, g.pad_l, g.w);
              if (ix < 0) continue;
              T* dxp = dx.ptr() + ((n * g.h + iy) * g.w + ix) * g.cin;
              const T* dr = dk.ptr() + (kh * g.k + kw) * g.cin;
              for (std::size_t c = 0; c < g.cin; ++c) dxp[c] += gv[c] * dr[c];
            }
          }
        }
      }
    }
  });
  return dx;
}

template <typename T>
BasicTensor<T> depthwise_backward_kernel(const BasicTensor<T>& x, const BasicTensor<T>& dy, const ConvGeom& g,
                                         ThreadPool* pool) {
  BasicTensor<T> dk(Shape{g.k, g.k, g.cin, 1});
  // each worker owns a range of taps
  parallel_for(pool, g.k * g.k, [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const T* gv = dy.ptr() + ((n * g.oh + oy) * g.ow + ox) * g.cin;
          for (std::size_t t = begin; t < end; ++t) {
            const long iy = tap(oy, t / g.k, g.stride, g.pad_t, g.h);
            const long ix = tap(ox, t % g.k, g.stride, g.pad_l, g.w);
            if (iy < 0 || ix < 0) continue;
            const T* xv = x.ptr() + ((n * g.h + iy) * g.w + ix) * g.cin;
            T* dr = dk.ptr() + t * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c) dr[c] += xv[c] * gv[c];
          }
        }
      }
    }
  });
  return dk;
}

template <typename T>
using Inputs = typename Layer<T>::Inputs;

template <typename T>
class Conv2DLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(std::span<const Shape> in) const override {
    require_image(this->id(), in);
    const auto& c = this->config();
    try {
      const auto gh = window_geometry(in[0][0], c.kernel_size, c.stride, c.padding);
      const auto gw = window_geometry(in[0][1], c.kernel_size, c.stride, c.padding);
      return Shape{gh.out, gw.out, c.filters};
    } catch (const Error& e) {
      throw config_error("conv2d '" + this->id() + "' on input " + in[0].str() + ": " + e.what());
    }
  }

 protected:
  void create_params(std::span<const Shape> in) override {
    const auto& c = this->config();
    const std::size_t k = c.kernel_size, cin = in[0][2];
    if (c.use_bias) this->params_.push_back({"bias", BasicTensor<T>(Shape{c.filters}), {}, true});
    this->params_.push_back({"kernel",
                             glorot_param<T>(c.seed, k * k * cin, k * k * c.filters, Shape{k, k, cin, c.filters},
                                             this->id() + "/kernel"),
                             {},
                             true});
  }

  BasicTensor<T> do_forward(Inputs<T> in, const RunContext& ctx) override {
    const auto& c = this->config();
    const BasicTensor<T>& kernel = this->find("kernel")->value;
    if (in[0]->shape()[3] != kernel.shape()[2]) {
      throw config_error("conv2d '" + this->id() + "': channel mismatch, input " + in[0]->shape().str() +
                         " vs kernel " + kernel.shape().str());
    }
    const ConvGeom g = make_geom(in[0]->shape(), c.kernel_size, c.stride, c.padding, c.filters);
    const Param<T>* bias = c.use_bias ? this->find("bias") : nullptr;
    return conv_forward(*in[0], kernel, bias ? &bias->value : nullptr, g, ctx.pool);
  }

  std::vector<BasicTensor<T>> do_backward(Inputs<T> in, const BasicTensor<T>&, const BasicTensor<T>& dy,
                                          const RunContext& ctx) override {
    const auto& c = this->config();
    const ConvGeom g = make_geom(in[0]->shape(), c.kernel_size, c.stride, c.padding, c.filters);
    Param<T>& kernel = *this->find("kernel");
    if (ctx.param_grads) {
      kernel.grad = conv_backward_kernel(*in[0], dy, g, ctx.pool);
      if (c.use_bias) this->find("bias")->grad = bias_grad(dy, c.filters);
    }
    if (!ctx.input_grads) return {BasicTensor<T>()};
    return {conv_backward_input(dy, kernel.value, g, ctx.pool)};
  }
};

template <typename T>
class SeparableConv2DLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(std::span<const Shape> in) const override {
    require_image(this->id(), in);
    const auto& c = this->config();
    try {
      const auto gh = window_geometry(in[0][0], c.kernel_size, 1, c.padding);
      const auto gw = window_geometry(in[0][1], c.kernel_size, 1, c.padding);
      return Shape{gh.out, gw.out, c.filters};
    } catch (const Error& e) {
      throw config_error("separable_conv2d '" + this->id() + "' on input " + in[0].str() + ": " + e.what());
    }
  }

 protected:
  void create_params(std::span<const Shape> in) override {
    const auto& c = this->config();
    const std::size_t k = c.kernel_size, cin = in[0][2];
    if (c.use_bias) this->params_.push_back({"bias", BasicTensor<T>(Shape{c.filters}), {}, true});
    // fans follow the conv rule on the [k,k,cin,1] and [1,1,cin,filters] kernels
    this->params_.push_back({"depthwise_kernel",
                             glorot_param<T>(c.seed, k * k * cin, k * k, Shape{k, k, cin, 1},
                                             this->id() + "/depthwise_kernel"),
                             {},
                             true});
    this->params_.push_back({"pointwise_kernel",
                             glorot_param<T>(c.pointwise_seed, cin, c.filters, Shape{1, 1, cin, c.filters},
                                             this->id() + "/pointwise_kernel"),
                             {},
                             true});
  }

  BasicTensor<T> do_forward(Inputs<T> in, const RunContext& ctx) override {
    const auto& c = this->config();
    const BasicTensor<T>& dk = this->find("depthwise_kernel")->value;
    const BasicTensor<T>& pk = this->find("pointwise_kernel")->value;
    if (in[0]->shape()[3] != dk.shape()[2]) {
      throw config_error("separable_conv2d '" + this->id() + "': channel mismatch, input " +
                         in[0]->shape().str() + " vs depthwise kernel " + dk.shape().str());
    }
    const ConvGeom gd = make_geom(in[0]->shape(), c.kernel_size, 1, c.padding, in[0]->shape()[3]);
    mid_ = depthwise_forward(*in[0], dk, gd, ctx.pool);
    const ConvGeom gp = make_geom(mid_.shape(), 1, 1, Padding::valid, c.filters);
    const Param<T>* bias = c.use_bias ? this->find("bias") : nullptr;
    return conv_forward(mid_, pk, bias ? &bias->value : nullptr, gp, ctx.pool);
  }

  std::vector<BasicTensor<T>> do_backward(Inputs<T> in, const BasicTensor<T>&, const BasicTensor<T>& dy,
                                          const RunContext& ctx) override {
    const auto& c = this->config();
    Param<T>& dk = *this->find("depthwise_kernel");
    Param<T>& pk = *this->find("pointwise_kernel");
    const ConvGeom gd = make_geom(in[0]->shape(), c.kernel_size, 1, c.padding, in[0]->shape()[3]);
    const ConvGeom gp = make_geom(mid_.shape(), 1, 1, Padding::valid, c.filters);
    const bool need_mid = ctx.param_grads || ctx.input_grads;
    BasicTensor<T> dmid;
    if (need_mid) dmid = conv_backward_input(dy, pk.value, gp, ctx.pool);
    if (ctx.param_grads) {
      pk.grad = conv_backward_kernel(mid_, dy, gp, ctx.pool);
      dk.grad = depthwise_backward_kernel(*in[0], dmid, gd, ctx.pool);
      if (c.use_bias) this->find("bias")->grad = bias_grad(dy, c.filters);
    }
    if (!ctx.input_grads) return {BasicTensor<T>()};
    return {depthwise_backward_input(dmid, dk.value, gd, ctx.pool)};
  }

 private:
  BasicTensor<T> mid_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_conv_layer(std::string id, const LayerConfig& cfg) {
  if (cfg.kind == LayerKind::separable_conv2d) return std::make_unique<SeparableConv2DLayer<T>>(std::move(id), cfg);
  return std::make_unique<Conv2DLayer<T>>(std::move(id), cfg);
}

template std::unique_ptr<Layer<float>> make_conv_layer(std::string, const LayerConfig&);
template std::unique_ptr<Layer<double>> make_conv_layer(std::string, const LayerConfig&);

}  // namespace detcnn::detail
