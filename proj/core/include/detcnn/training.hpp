#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "detcnn/graph.hpp"
#include "detcnn/imageio.hpp"
#include "detcnn/weights_io.hpp"

namespace detcnn {

class ThreadPool;

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  float learning_rate = 1e-3f;
  float rho = 0.9f;
  float epsilon = 1e-7f;
  std::uint64_t seed = 1001;  // shuffle stream
  std::size_t threads = 1;

  /// Throws config_error on out-of-range values.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  float train_loss = 0.0f;
  float train_acc = 0.0f;
  float val_loss = 0.0f;
  float val_acc = 0.0f;
  double wall_time_s = 0.0;
};

/// Probabilities are clamped to [1e-7, 1 - 1e-7] before the log.
inline constexpr float kBceClamp = 1e-7f;

/// Mean binary cross-entropy; terms summed in index order in float.
float bce_loss(const Tensor& pred, const Tensor& label);
/// dLoss/dpred of bce_loss. Zero where the clamp is active.
Tensor bce_grad(const Tensor& pred, const Tensor& label);
/// dLoss/dlogit of bce_loss when pred = sigmoid(logit): (p - y) / N. The
/// trainer uses this whenever the model ends in a sigmoid node, so a
/// saturated output still receives a gradient.
Tensor bce_logit_grad(const Tensor& pred, const Tensor& label);
/// Fraction with (p >= 0.5) == label.
float accuracy(const Tensor& pred, const Tensor& label);

/// ms = rho*ms + (1-rho)*g^2; param -= lr*g / (sqrt(ms) + eps). Elementwise.
void rmsprop_step(Tensor& param, const Tensor& grad, Tensor& ms, const TrainConfig& cfg);

/// RMSprop mean-square accumulators, one per trainable in registry order.
class RmsProp {
 public:
  explicit RmsProp(TrainConfig cfg) : cfg_(cfg) {}
  void step(ModelGraph& g);

  std::vector<NamedTensor> state(ModelGraph& g) const;
  void load_state(ModelGraph& g, std::span<const NamedTensor> state);

 private:
  TrainConfig cfg_;
  std::vector<Tensor> ms_;
};

/// Stacks items[indices] into an [N,H,W,3] batch and an [N,1] label tensor.
void make_batch(const Dataset& ds, std::span<const std::size_t> indices, Tensor& images, Tensor& labels);

struct EvalResult {
  float loss = 0.0f;
  float acc = 0.0f;
};

/// Inference-mode loss/accuracy over the dataset in item order. Per-batch
/// values are weighted by batch size and summed in float.
EvalResult evaluate(ModelGraph& g, const Dataset& ds, std::size_t batch_size, ThreadPool* pool = nullptr);

/// Inference-mode model output for each image in `images` ([N,H,W,C]).
Tensor predict(ModelGraph& g, const Tensor& images, ThreadPool* pool = nullptr);

/// Mini-batch training. Epoch e (1-based) visits a Fisher-Yates permutation
/// drawn from stream (cfg.seed, "shuffle/<e>"); the last partial batch is
/// kept. A non-finite batch loss aborts with ErrorKind::numeric.
std::vector<EpochRecord> train(ModelGraph& g, const Dataset& train_ds, const Dataset& val_ds,
                               const TrainConfig& cfg, RmsProp& optimizer,
                               const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace detcnn
