#include "detcnn/layers.hpp"

#include <algorithm>
#include <sstream>
#include <type_traits>

#include "detcnn/detmath.hpp"
#include "detcnn/detrand.hpp"
#include "detcnn/error.hpp"
#include "detcnn/parallel.hpp"
#include "layer_impl.hpp"

namespace detcnn {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::rescale: return "rescale";
    case LayerKind::random_flip_h: return "random_flip_h";
    case LayerKind::random_rotation: return "random_rotation";
    case LayerKind::random_zoom: return "random_zoom";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::separable_conv2d: return "separable_conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::dense: return "dense";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dropout: return "dropout";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::residual_add: return "residual_add";
  }
  return "unknown";
}

namespace {

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

const char* padding_name(Padding p) { return p == Padding::same ? "same" : "valid"; }

}  // namespace

std::string LayerConfig::describe() const {
  std::ostringstream os;
  switch (kind) {
    case LayerKind::rescale:
      os << "scale=" << fmt_float(scale) << " offset=" << fmt_float(offset);
      break;
    case LayerKind::random_flip_h:
      os << "mode=horizontal seed=" << seed;
      break;
    case LayerKind::random_rotation:
    case LayerKind::random_zoom:
      os << "factor=" << fmt_float(rate) << " seed=" << seed;
      break;
    case LayerKind::conv2d:
      os << "filters=" << filters << " kernel_size=" << kernel_size << " stride=" << stride
         << " padding=" << padding_name(padding) << " use_bias=" << (use_bias ? 1 : 0) << " seed=" << seed;
      break;
    case LayerKind::separable_conv2d:
      os << "filters=" << filters << " kernel_size=" << kernel_size << " padding=" << padding_name(padding)
         << " use_bias=" << (use_bias ? 1 : 0) << " depthwise_seed=" << seed << " pointwise_seed=" << pointwise_seed;
      break;
    case LayerKind::maxpool2d:
      os << "pool_size=" << kernel_size << " stride=" << stride << " padding=" << padding_name(padding);
      break;
    case LayerKind::batchnorm:
      os << "epsilon=" << fmt_float(epsilon) << " momentum=" << fmt_float(momentum);
      break;
    case LayerKind::dense:
      os << "units=" << filters << " use_bias=" << (use_bias ? 1 : 0) << " seed=" << seed;
      break;
    case LayerKind::dropout:
      os << "rate=" << fmt_float(rate) << " seed=" << seed;
      break;
    default:
      break;
  }
  return os.str();
}

LayerConfig LayerConfig::rescale(float scale, float offset) {
  LayerConfig c;
  c.kind = LayerKind::rescale;
  c.scale = scale;
  c.offset = offset;
  return c;
}

LayerConfig LayerConfig::random_flip_h(std::uint64_t seed) {
  LayerConfig c;
  c.kind = LayerKind::random_flip_h;
  c.seed = seed;
  return c;
}

LayerConfig LayerConfig::random_rotation(float factor, std::uint64_t seed) {
  if (factor < 0.0f) throw config_error("rotation factor must be >= 0");
  LayerConfig c;
  c.kind = LayerKind::random_rotation;
  c.rate = factor;
  c.seed = seed;
  return c;
}

LayerConfig LayerConfig::random_zoom(float factor, std::uint64_t seed) {
  if (factor < 0.0f || factor >= 1.0f) throw config_error("zoom factor must be in [0, 1)");
  LayerConfig c;
  c.kind = LayerKind::random_zoom;
  c.rate = factor;
  c.seed = seed;
  return c;
}

LayerConfig LayerConfig::conv2d(std::size_t filters, std::size_t kernel, std::size_t stride, Padding padding,
                                bool use_bias, std::uint64_t seed) {
  if (filters == 0 || kernel == 0 || stride == 0) throw config_error("conv2d: filters, kernel, stride must be >= 1");
  LayerConfig c;
  c.kind = LayerKind::conv2d;
  c.filters = filters;
  c.kernel_size = kernel;
  c.stride = stride;
  c.padding = padding;
  c.use_bias = use_bias;
  c.seed = seed;
  return c;
}

LayerConfig LayerConfig::separable_conv2d(std::size_t filters, std::size_t kernel, Padding padding, bool use_bias,
                                          std::uint64_t depthwise_seed, std::uint64_t pointwise_seed) {
  if (filters == 0 || kernel == 0) throw config_error("separable_conv2d: filters and kernel must be >= 1");
  LayerConfig c;
  c.kind = LayerKind::separable_conv2d;
  c.filters = filters;
  c.kernel_size = kernel;
  c.padding = padding;
  c.use_bias = use_bias;
  c.seed = depthwise_seed;
  c.pointwise_seed = pointwise_seed;
  return c;
}

LayerConfig LayerConfig::maxpool2d(std::size_t pool, std::size_t stride, Padding padding) {
  if (pool == 0 || stride == 0) throw config_error("maxpool2d: pool and stride must be >= 1");
  LayerConfig c;
  c.kind = LayerKind::maxpool2d;
  c.kernel_size = pool;
  c.stride = stride;
  c.padding = padding;
  return c;
}

LayerConfig LayerConfig::batchnorm(float epsilon, float momentum) {
  LayerConfig c;
  c.kind = LayerKind::batchnorm;
  c.epsilon = epsilon;
  c.momentum = momentum;
  return c;
}

LayerConfig LayerConfig::relu() {
  LayerConfig c;
  c.kind = LayerKind::relu;
  return c;
}

LayerConfig LayerConfig::sigmoid() {
  LayerConfig c;
  c.kind = LayerKind::sigmoid;
  return c;
}

LayerConfig LayerConfig::dense(std::size_t units, std::uint64_t seed) {
  if (units == 0) throw config_error("dense: units must be >= 1");
  LayerConfig c;
  c.kind = LayerKind::dense;
  c.filters = units;
  c.seed = seed;
  return c;
}

LayerConfig LayerConfig::flatten() {
  LayerConfig c;
  c.kind = LayerKind::flatten;
  return c;
}

LayerConfig LayerConfig::dropout(float rate, std::uint64_t seed) {
  if (rate < 0.0f || rate >= 1.0f) throw config_error("dropout rate must be in [0, 1)");
  LayerConfig c;
  c.kind = LayerKind::dropout;
  c.rate = rate;
  c.seed = seed;
  return c;
}

LayerConfig LayerConfig::global_avg_pool() {
  LayerConfig c;
  c.kind = LayerKind::global_avg_pool;
  return c;
}

LayerConfig LayerConfig::residual_add() {
  LayerConfig c;
  c.kind = LayerKind::residual_add;
  return c;
}

WindowGeometry window_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  if (kernel == 0 || stride == 0) throw config_error("window: kernel and stride must be >= 1");
  if (padding == Padding::valid) {
    if (in < kernel) {
      throw config_error("window of size " + std::to_string(kernel) + " does not fit input of size " +
                         std::to_string(in));
    }
    return {(in - kernel) / stride + 1, 0};
  }
  const std::size_t out = (in + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t total = needed > in ? needed - in : 0;
  return {out, total / 2};
}

// ---------------------------------------------------------------------------
// Layer base

template <typename T>
void Layer<T>::build(std::span<const Shape> inputs) {
  if (inputs.size() != arity()) {
    throw config_error("layer '" + id_ + "' expects " + std::to_string(arity()) + " input(s), got " +
                       std::to_string(inputs.size()));
  }
  (void)output_shape(inputs);
  input_shapes_.assign(inputs.begin(), inputs.end());
  params_.clear();
  buffers_.clear();
  create_params(inputs);
}

template <typename T>
typename Layer<T>::TensorT Layer<T>::forward(Inputs inputs, const RunContext& ctx) {
  if (!built()) throw config_error("layer '" + id_ + "' used before build()");
  if (inputs.size() != arity()) {
    throw config_error("layer '" + id_ + "' expects " + std::to_string(arity()) + " input(s)");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Shape& s = inputs[i]->shape();
    if (s.rank() < 2 || s.unbatched() != input_shapes_[i]) {
      throw config_error("layer '" + id_ + "': input " + std::to_string(i) + " has shape " + s.str() +
                         ", expected [N x " + input_shapes_[i].str() + "]");
    }
  }
  TensorT out = do_forward(inputs, ctx);
  forward_done_ = true;
  return out;
}

template <typename T>
typename Layer<T>::TensorT Layer<T>::forward(const TensorT& x, const RunContext& ctx) {
  const TensorT* p = &x;
  return forward(Inputs(&p, 1), ctx);
}

template <typename T>
std::vector<typename Layer<T>::TensorT> Layer<T>::backward(Inputs inputs, const TensorT& output,
                                                           const TensorT& grad_out, const RunContext& ctx) {
  if (!forward_done_) throw config_error("layer '" + id_ + "': backward called before forward");
  if (grad_out.shape() != output.shape()) {
    throw config_error("layer '" + id_ + "': gradient shape " + grad_out.shape().str() +
                       " does not match output " + output.shape().str());
  }
  return do_backward(inputs, output, grad_out, ctx);
}

template <typename T>
typename Layer<T>::TensorT Layer<T>::backward(const TensorT& x, const TensorT& output, const TensorT& grad_out,
                                              const RunContext& ctx) {
  const TensorT* p = &x;
  auto grads = backward(Inputs(&p, 1), output, grad_out, ctx);
  return std::move(grads.front());
}

template <typename T>
Param<T>* Layer<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  for (auto& p : buffers_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::string Layer<T>::stream_label() const {
  return std::string(to_string(cfg_.kind)) + "/" + std::to_string(cfg_.seed) + "/" + id_;
}

template class Layer<float>;
template class Layer<double>;

namespace detail {

void require_image(const std::string& id, std::span<const Shape> inputs) {
  if (inputs.size() != 1 || inputs[0].rank() != 3) {
    throw config_error("layer '" + id + "' expects one [H,W,C] input, got " +
                       (inputs.empty() ? std::string("none") : inputs[0].str()));
  }
}

template <typename T>
BasicTensor<T> glorot_param(std::uint64_t seed, std::size_t fan_in, std::size_t fan_out, const Shape& shape,
                            const std::string& label) {
  Tensor w = glorot_uniform(InitSpec{InitKind::glorot_uniform, seed, fan_in, fan_out}, shape, label);
  if constexpr (std::is_same_v<T, float>) {
    return w;
  } else {
    return w.template cast<T>();
  }
}

template BasicTensor<float> glorot_param(std::uint64_t, std::size_t, std::size_t, const Shape&, const std::string&);
template BasicTensor<double> glorot_param(std::uint64_t, std::size_t, std::size_t, const Shape&, const std::string&);

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reshaping layers

namespace {

template <typename T>
using Inputs = typename Layer<T>::Inputs;

template <typename T>
class RescaleLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Shape output_shape(std::span<const Shape> in) const override { return in[0]; }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext&) override {
    const T scale = static_cast<T>(this->config().scale);
    const T offset = static_cast<T>(this->config().offset);
    BasicTensor<T> y(in[0]->shape());
    const T* x = in[0]->ptr();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * scale + offset;
    return y;
  }
  std::vector<BasicTensor<T>> do_backward(Inputs<T>, const BasicTensor<T>&, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>()};
    const T scale = static_cast<T>(this->config().scale);
    BasicTensor<T> dx(g.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * scale;
    return {std::move(dx)};
  }
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Shape output_shape(std::span<const Shape> in) const override { return in[0]; }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext&) override {
    BasicTensor<T> y(in[0]->shape());
    const T* x = in[0]->ptr();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
  }
  std::vector<BasicTensor<T>> do_backward(Inputs<T> in, const BasicTensor<T>&, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>()};
    BasicTensor<T> dx(g.shape());
    const T* x = in[0]->ptr();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > T(0) ? g[i] : T(0);
    return {std::move(dx)};
  }
};

template <typename T>
class SigmoidLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Shape output_shape(std::span<const Shape> in) const override { return in[0]; }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext&) override {
    BasicTensor<T> y(in[0]->shape());
    const T* x = in[0]->ptr();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = detmath::sigmoid(x[i]);
    return y;
  }
  std::vector<BasicTensor<T>> do_backward(Inputs<T>, const BasicTensor<T>& y, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>()};
    BasicTensor<T> dx(g.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * (y[i] * (T(1) - y[i]));
    return {std::move(dx)};
  }
};

template <typename T>
class FlattenLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Shape output_shape(std::span<const Shape> in) const override { return Shape{in[0].numel()}; }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext&) override {
    const std::size_t n = in[0]->shape()[0];
    return in[0]->reshaped(Shape{n, in[0]->size() / n});
  }
  std::vector<BasicTensor<T>> do_backward(Inputs<T> in, const BasicTensor<T>&, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>()};
    return {g.reshaped(in[0]->shape())};
  }
};

template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Shape output_shape(std::span<const Shape> in) const override {
    if (in[0].rank() != 1) {
      throw config_error("dense layer '" + this->id() + "' expects a flat input, got " + in[0].str());
    }
    return Shape{this->config().filters};
  }

 protected:
  void create_params(std::span<const Shape> in) override {
    const std::size_t fan_in = in[0][0], units = this->config().filters;
    if (this->config().use_bias) this->params_.push_back({"bias", BasicTensor<T>(Shape{units}), {}, true});
    this->params_.push_back({"kernel",
                             detail::glorot_param<T>(this->config().seed, fan_in, units, Shape{fan_in, units},
                                                     this->id() + "/kernel"),
                             {},
                             true});
  }

  const BasicTensor<T>& kernel() { return this->find("kernel")->value; }

  BasicTensor<T> do_forward(Inputs<T> in, const RunContext& ctx) override {
    const BasicTensor<T>& x = *in[0];
    const std::size_t n = x.shape()[0], fan_in = x.shape()[1], units = this->config().filters;
    const T* w = kernel().ptr();
    const Param<T>* bias = this->config().use_bias ? this->find("bias") : nullptr;
    BasicTensor<T> y(Shape{n, units});
    parallel_rows(ctx, n, [&](std::size_t s) {
      T* out = y.ptr() + s * units;
      const T* xr = x.ptr() + s * fan_in;
      for (std::size_t i = 0; i < fan_in; ++i) {
        const T xv = xr[i];
        const T* wr = w + i * units;
        for (std::size_t o = 0; o < units; ++o) out[o] += xv * wr[o];
      }
      if (bias) {
        for (std::size_t o = 0; o < units; ++o) out[o] += bias->value[o];
      }
    });
    return y;
  }

  std::vector<BasicTensor<T>> do_backward(Inputs<T> in, const BasicTensor<T>&, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    const BasicTensor<T>& x = *in[0];
    const std::size_t n = x.shape()[0], fan_in = x.shape()[1], units = this->config().filters;
    if (ctx.param_grads) {
      Param<T>& k = *this->find("kernel");
      k.grad = BasicTensor<T>(k.value.shape());
      // dW[i,o] = sum_n x[n,i] * g[n,o], rows of dW partitioned across workers
      parallel_rows(ctx, fan_in, [&](std::size_t i) {
        T* dw = k.grad.ptr() + i * units;
        for (std::size_t s = 0; s < n; ++s) {
          const T xv = x[s * fan_in + i];
          const T* gr = g.ptr() + s * units;
          for (std::size_t o = 0; o < units; ++o) dw[o] += xv * gr[o];
        }
      });
      if (Param<T>* b = this->config().use_bias ? this->find("bias") : nullptr) {
        b->grad = BasicTensor<T>(b->value.shape());
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t o = 0; o < units; ++o) b->grad[o] += g[s * units + o];
        }
      }
    }
    if (!ctx.input_grads) return {BasicTensor<T>()};
    BasicTensor<T> dx(x.shape());
    const T* w = kernel().ptr();
    parallel_rows(ctx, n, [&](std::size_t s) {
      const T* gr = g.ptr() + s * units;
      T* dr = dx.ptr() + s * fan_in;
      for (std::size_t i = 0; i < fan_in; ++i) {
        const T* wr = w + i * units;
        T acc = T(0);
        for (std::size_t o = 0; o < units; ++o) acc += gr[o] * wr[o];
        dr[i] = acc;
      }
    });
    return {std::move(dx)};
  }

 private:
  template <typename F>
  static void parallel_rows(const RunContext& ctx, std::size_t rows, F&& f) {
    parallel_for(ctx.pool, rows, [&](std::size_t b, std::size_t e) {
      for (std::size_t r = b; r < e; ++r) f(r);
    });
  }
};

template <typename T>
class DropoutLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Shape output_shape(std::span<const Shape> in) const override { return in[0]; }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext& ctx) override {
    const BasicTensor<T>& x = *in[0];
    const float rate = this->config().rate;
    if (ctx.mode == Mode::infer || rate == 0.0f) {
      mask_.clear();
      return x;
    }
    // one draw per element at counter = flat index
    const DetRng rng(this->config().seed,
                     this->stream_label() + "/e" + std::to_string(ctx.epoch) + "/b" + std::to_string(ctx.batch));
    const T scale = T(1) / (T(1) - static_cast<T>(rate));
    mask_.assign(x.size(), 0);
    BasicTensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (DetRng::to_unit_float(rng.at(i)) >= rate) {
        mask_[i] = 1;
        y[i] = x[i] * scale;
      }
    }
    scale_ = scale;
    return y;
  }

  std::vector<BasicTensor<T>> do_backward(Inputs<T>, const BasicTensor<T>&, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>()};
    if (mask_.empty()) return {g};
    BasicTensor<T> dx(g.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (mask_[i]) dx[i] = g[i] * scale_;
    }
    return {std::move(dx)};
  }

 private:
  std::vector<unsigned char> mask_;
  T scale_ = T(1);
};

template <typename T>
class GlobalAvgPoolLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Shape output_shape(std::span<const Shape> in) const override {
    detail::require_image(this->id(), in);
    return Shape{in[0][2]};
  }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext&) override {
    const BasicTensor<T>& x = *in[0];
    const std::size_t n = x.shape()[0], hw = x.shape()[1] * x.shape()[2], c = x.shape()[3];
    BasicTensor<T> y(Shape{n, c});
    const T count = static_cast<T>(hw);
    for (std::size_t s = 0; s < n; ++s) {
      T* out = y.ptr() + s * c;
      const T* xs = x.ptr() + s * hw * c;
      for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t ch = 0; ch < c; ++ch) out[ch] += xs[p * c + ch];
      }
      for (std::size_t ch = 0; ch < c; ++ch) out[ch] = out[ch] / count;
    }
    return y;
  }

  std::vector<BasicTensor<T>> do_backward(Inputs<T> in, const BasicTensor<T>&, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>()};
    const BasicTensor<T>& x = *in[0];
    const std::size_t n = x.shape()[0], hw = x.shape()[1] * x.shape()[2], c = x.shape()[3];
    const T count = static_cast<T>(hw);
    BasicTensor<T> dx(x.shape());
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t ch = 0; ch < c; ++ch) dx[(s * hw + p) * c + ch] = g[s * c + ch] / count;
      }
    }
    return {std::move(dx)};
  }
};

template <typename T>
class ResidualAddLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Shape output_shape(std::span<const Shape> in) const override {
    if (in.size() != 2 || in[0] != in[1]) {
      throw config_error("residual_add '" + this->id() + "' needs two inputs of equal shape, got " +
                         (in.size() == 2 ? in[0].str() + " and " + in[1].str() : std::to_string(in.size()) +
                                                                                      " input(s)"));
    }
    return in[0];
  }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext&) override {
    BasicTensor<T> y(in[0]->shape());
    const T* a = in[0]->ptr();
    const T* b = in[1]->ptr();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
    return y;
  }
  std::vector<BasicTensor<T>> do_backward(Inputs<T>, const BasicTensor<T>&, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>(), BasicTensor<T>()};
    return {g, g};
  }
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(std::string id, const LayerConfig& cfg) {
  switch (cfg.kind) {
    case LayerKind::rescale: return std::make_unique<RescaleLayer<T>>(std::move(id), cfg);
    case LayerKind::relu: return std::make_unique<ReluLayer<T>>(std::move(id), cfg);
    case LayerKind::sigmoid: return std::make_unique<SigmoidLayer<T>>(std::move(id), cfg);
    case LayerKind::flatten: return std::make_unique<FlattenLayer<T>>(std::move(id), cfg);
    case LayerKind::dense: return std::make_unique<DenseLayer<T>>(std::move(id), cfg);
    case LayerKind::dropout: return std::make_unique<DropoutLayer<T>>(std::move(id), cfg);
    case LayerKind::global_avg_pool: return std::make_unique<GlobalAvgPoolLayer<T>>(std::move(id), cfg);
    case LayerKind::residual_add: return std::make_unique<ResidualAddLayer<T>>(std::move(id), cfg);
    case LayerKind::conv2d:
    case LayerKind::separable_conv2d: return detail::make_conv_layer<T>(std::move(id), cfg);
    case LayerKind::maxpool2d: return detail::make_pool_layer<T>(std::move(id), cfg);
    case LayerKind::batchnorm: return detail::make_norm_layer<T>(std::move(id), cfg);
    case LayerKind::random_flip_h:
    case LayerKind::random_rotation:
    case LayerKind::random_zoom: return detail::make_augment_layer<T>(std::move(id), cfg);
  }
  throw config_error("unknown layer kind");
}

template std::unique_ptr<Layer<float>> make_layer(std::string, const LayerConfig&);
template std::unique_ptr<Layer<double>> make_layer(std::string, const LayerConfig&);

}  // namespace detcnn
