#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "detcnn/tensor.hpp"

namespace detcnn {

class ThreadPool;

enum class LayerKind {
  rescale,
  random_flip_h,
  random_rotation,
  random_zoom,
  conv2d,
  separable_conv2d,
  maxpool2d,
  batchnorm,
  relu,
  sigmoid,
  dense,
  flatten,
  dropout,
  global_avg_pool,
  residual_add,
};

inline constexpr LayerKind kAllLayerKinds[] = {
    LayerKind::rescale,   LayerKind::random_flip_h, LayerKind::random_rotation, LayerKind::random_zoom,
    LayerKind::conv2d,    LayerKind::separable_conv2d, LayerKind::maxpool2d,    LayerKind::batchnorm,
    LayerKind::relu,      LayerKind::sigmoid,       LayerKind::dense,           LayerKind::flatten,
    LayerKind::dropout,   LayerKind::global_avg_pool, LayerKind::residual_add,
};

const char* to_string(LayerKind kind);

enum class Padding { valid, same };
enum class Mode { train, infer };

/// Hyperparameters of one layer. Fields irrelevant to a kind are ignored.
struct LayerConfig {
  LayerKind kind = LayerKind::relu;
  std::size_t filters = 0;      // conv / separable output channels, dense units
  std::size_t kernel_size = 1;  // conv kernel or pool window edge
  std::size_t stride = 1;
  Padding padding = Padding::valid;
  bool use_bias = true;
  float rate = 0.0f;  // dropout rate; rotation / zoom factor
  float scale = 1.0f;
  float offset = 0.0f;
  std::uint64_t seed = 0;            // kernel init, dropout or augmentation stream
  std::uint64_t pointwise_seed = 0;  // separable pointwise kernel init
  float epsilon = 1e-3f;             // batchnorm
  float momentum = 0.99f;            // batchnorm

  /// Kind-specific hyperparameters as "key=value" pairs in a fixed order.
  std::string describe() const;

  static LayerConfig rescale(float scale, float offset = 0.0f);
  static LayerConfig random_flip_h(std::uint64_t seed);
  static LayerConfig random_rotation(float factor, std::uint64_t seed);
  static LayerConfig random_zoom(float factor, std::uint64_t seed);
  static LayerConfig conv2d(std::size_t filters, std::size_t kernel, std::size_t stride, Padding padding,
                            bool use_bias, std::uint64_t seed);
  static LayerConfig separable_conv2d(std::size_t filters, std::size_t kernel, Padding padding, bool use_bias,
                                      std::uint64_t depthwise_seed, std::uint64_t pointwise_seed);
  static LayerConfig maxpool2d(std::size_t pool, std::size_t stride, Padding padding);
  static LayerConfig batchnorm(float epsilon = 1e-3f, float momentum = 0.99f);
  static LayerConfig relu();
  static LayerConfig sigmoid();
  static LayerConfig dense(std::size_t units, std::uint64_t seed);
  static LayerConfig flatten();
  static LayerConfig dropout(float rate, std::uint64_t seed);
  static LayerConfig global_avg_pool();
  static LayerConfig residual_add();
};

/// Output length and leading pad of a sliding window.
///   valid: out = floor((in - k) / stride) + 1, no padding (throws if in < k)
///   same:  out = ceil(in / stride), total pad = max((out-1)*stride + k - in, 0),
///          pad_before = total / 2 (the odd cell goes to the bottom/right)
struct WindowGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};
WindowGeometry window_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

/// Per-call execution state. epoch/batch key the random streams of dropout
/// and augmentation layers.
struct RunContext {
  Mode mode = Mode::infer;
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
  ThreadPool* pool = nullptr;
  bool param_grads = true;
  bool input_grads = true;
};

template <typename T>
struct Param {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool trainable = true;
};

/// One node's computation. Forward and backward use the NHWC batch layout;
/// shapes passed to output_shape/build exclude the batch axis.
template <typename T>
class Layer {
 public:
  using TensorT = BasicTensor<T>;
  using Inputs = std::span<const TensorT* const>;

  Layer(std::string id, LayerConfig cfg) : id_(std::move(id)), cfg_(cfg) {}
  virtual ~Layer() = default;

  const std::string& id() const noexcept { return id_; }
  const LayerConfig& config() const noexcept { return cfg_; }
  LayerKind kind() const noexcept { return cfg_.kind; }
  std::size_t arity() const noexcept { return cfg_.kind == LayerKind::residual_add ? 2 : 1; }

  /// Throws config_error when the inputs are unusable for this layer.
  virtual Shape output_shape(std::span<const Shape> inputs) const = 0;

  /// Validates the inputs and creates initialised parameters/buffers.
  void build(std::span<const Shape> inputs);
  void build(const Shape& input) { build(std::span<const Shape>(&input, 1)); }
  bool built() const noexcept { return !input_shapes_.empty(); }

  TensorT forward(Inputs inputs, const RunContext& ctx);
  TensorT forward(const TensorT& x, const RunContext& ctx);

  /// Gradients with respect to each input (empty tensors when
  /// ctx.input_grads is false). Parameter gradients land in params()[i].grad
  /// when ctx.param_grads is set. `inputs` and `output` must be the tensors of
  /// the most recent forward call.
  std::vector<TensorT> backward(Inputs inputs, const TensorT& output, const TensorT& grad_out,
                                const RunContext& ctx);
  TensorT backward(const TensorT& x, const TensorT& output, const TensorT& grad_out, const RunContext& ctx);

  std::vector<Param<T>>& params() noexcept { return params_; }
  const std::vector<Param<T>>& params() const noexcept { return params_; }
  std::vector<Param<T>>& buffers() noexcept { return buffers_; }
  const std::vector<Param<T>>& buffers() const noexcept { return buffers_; }
  Param<T>* find(const std::string& name);

 protected:
  virtual void create_params(std::span<const Shape> /*inputs*/) {}
  virtual TensorT do_forward(Inputs inputs, const RunContext& ctx) = 0;
  virtual std::vector<TensorT> do_backward(Inputs inputs, const TensorT& output, const TensorT& grad_out,
                                           const RunContext& ctx) = 0;

  /// Stream label prefix for random layers: "<kind>/<seed>/<id>".
  std::string stream_label() const;

  std::vector<Param<T>> params_;
  std::vector<Param<T>> buffers_;

 private:
  std::string id_;
  LayerConfig cfg_;
  std::vector<Shape> input_shapes_;
  bool forward_done_ = false;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(std::string id, const LayerConfig& cfg);

/// The random draws an augmentation layer makes for one image.
struct AugmentDraw {
  bool flip = false;
  double angle = 0.0;  // radians
  double zoom = 1.0;   // scale applied to both axes
};
AugmentDraw augment_draw(const std::string& id, const LayerConfig& cfg, std::uint64_t epoch, std::uint64_t batch,
                         std::size_t image);

extern template class Layer<float>;
extern template class Layer<double>;

}  // namespace detcnn
