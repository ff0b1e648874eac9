#include "detcnn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "detcnn/detmath.hpp"
#include "detcnn/detrand.hpp"
#include "detcnn/error.hpp"
#include "detcnn/parallel.hpp"

namespace detcnn {

namespace {

void check_pair(const Tensor& pred, const Tensor& label, const char* what) {
  if (pred.shape() != label.shape()) {
    throw config_error(std::string(what) + ": prediction " + pred.shape().str() + " vs label " + label.shape().str());
  }
}

// NaN passes through so a diverged model shows up as a non-finite loss
float clamp_p(float p) { return std::isnan(p) ? p : std::fmin(std::fmax(p, kBceClamp), 1.0f - kBceClamp); }

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw config_error("epochs must be >= 1");
  if (batch_size < 1) throw config_error("batch size must be >= 1");
  if (!(learning_rate > 0.0f)) throw config_error("learning rate must be > 0");
  if (!(rho > 0.0f && rho < 1.0f)) throw config_error("rho must lie in (0, 1)");
  if (!(epsilon > 0.0f)) throw config_error("epsilon must be > 0");
  if (threads < 1) throw config_error("threads must be >= 1");
}

float bce_loss(const Tensor& pred, const Tensor& label) {
  check_pair(pred, label, "bce_loss");
  float sum = 0.0f;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const float p = clamp_p(pred[i]), y = label[i];
    sum += -(y * detmath::log(p) + (1.0f - y) * detmath::log(1.0f - p));
  }
  return sum / static_cast<float>(pred.size());
}

Tensor bce_grad(const Tensor& pred, const Tensor& label) {
  check_pair(pred, label, "bce_grad");
  Tensor g(pred.shape());
  const float n = static_cast<float>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const float p = pred[i];
    if (p < kBceClamp || p > 1.0f - kBceClamp) continue;
    g[i] = (p - label[i]) / (p * (1.0f - p)) / n;
  }
  return g;
}

Tensor bce_logit_grad(const Tensor& pred, const Tensor& label) {
  check_pair(pred, label, "bce_logit_grad");
  Tensor g(pred.shape());
  const float n = static_cast<float>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = (pred[i] - label[i]) / n;
  return g;
}

float accuracy(const Tensor& pred, const Tensor& label) {
  check_pair(pred, label, "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += (pred[i] >= 0.5f ? 1.0f : 0.0f) == label[i];
  return static_cast<float>(correct) / static_cast<float>(pred.size());
}

void rmsprop_step(Tensor& param, const Tensor& grad, Tensor& ms, const TrainConfig& cfg) {
  if (param.shape() != grad.shape() || param.shape() != ms.shape()) {
    throw config_error("rmsprop_step: shapes " + param.shape().str() + ", " + grad.shape().str() + ", " +
                       ms.shape().str() + " differ");
  }
  const float rho = cfg.rho, lr = cfg.learning_rate, eps = cfg.epsilon;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    ms[i] = rho * ms[i] + (1.0f - rho) * (g * g);
    param[i] = param[i] - lr * g / (std::sqrt(ms[i]) + eps);
  }
}

void RmsProp::step(ModelGraph& g) {
  auto refs = g.trainables();
  if (ms_.empty()) {
    for (const auto& r : refs) ms_.emplace_back(r.param->value.shape());
  }
  if (ms_.size() != refs.size()) throw config_error("optimizer state does not match the model");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].param->grad.empty()) throw config_error("no gradient for '" + refs[i].qualified_name() + "'");
    rmsprop_step(refs[i].param->value, refs[i].param->grad, ms_[i], cfg_);
  }
}

std::vector<NamedTensor> RmsProp::state(ModelGraph& g) const {
  auto refs = g.trainables();
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    out.push_back({refs[i].qualified_name() + "/rms", i < ms_.size() ? ms_[i] : Tensor(refs[i].param->value.shape()),
                   false});
  }
  return out;
}

void RmsProp::load_state(ModelGraph& g, std::span<const NamedTensor> state) {
  auto refs = g.trainables();
  if (state.size() != refs.size()) throw config_error("optimizer state does not match the model");
  std::vector<Tensor> ms;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (state[i].name != refs[i].qualified_name() + "/rms" || state[i].value.shape() != refs[i].param->value.shape()) {
      throw config_error("optimizer state entry '" + state[i].name + "' does not match the model");
    }
    ms.push_back(state[i].value);
  }
  ms_ = std::move(ms);
}

void make_batch(const Dataset& ds, std::span<const std::size_t> indices, Tensor& images, Tensor& labels) {
  if (indices.empty()) throw config_error("make_batch: empty batch");
  const Shape item = ds.items.at(indices[0]).image.shape();
  images = Tensor(item.batched(indices.size()));
  labels = Tensor(Shape{indices.size(), 1});
  const std::size_t per = item.numel();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const DatasetItem& it = ds.items.at(indices[i]);
    if (it.image.shape() != item) throw data_error("dataset images differ in shape");
    std::memcpy(images.ptr() + i * per, it.image.ptr(), per * sizeof(float));
    labels[i] = static_cast<float>(it.label);
  }
}

EvalResult evaluate(ModelGraph& g, const Dataset& ds, std::size_t batch_size, ThreadPool* pool) {
  if (ds.size() == 0) throw data_error("cannot evaluate on an empty dataset");
  RunContext ctx;
  ctx.mode = Mode::infer;
  ctx.pool = pool;
  float loss_sum = 0.0f;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  Tensor x, y;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t bn = std::min(batch_size, ds.size() - start);
    idx.resize(bn);
    for (std::size_t i = 0; i < bn; ++i) idx[i] = start + i;
    make_batch(ds, idx, x, y);
    const Tensor p = g.forward(x, ctx);
    loss_sum += bce_loss(p, y) * static_cast<float>(bn);
    for (std::size_t i = 0; i < bn; ++i) correct += (p[i] >= 0.5f ? 1.0f : 0.0f) == y[i];
  }
  const float n = static_cast<float>(ds.size());
  return {loss_sum / n, static_cast<float>(correct) / n};
}

Tensor predict(ModelGraph& g, const Tensor& images, ThreadPool* pool) {
  RunContext ctx;
  ctx.mode = Mode::infer;
  ctx.pool = pool;
  return g.forward(images, ctx);
}

std::vector<EpochRecord> train(ModelGraph& g, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                               RmsProp& optimizer, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train_ds.size() == 0) throw data_error("training dataset is empty");
  if (val_ds.size() == 0) throw data_error("validation dataset is empty");
  ThreadPool pool(cfg.threads);
  std::vector<EpochRecord> records;
  // a trailing sigmoid is differentiated together with the loss
  std::string logits;
  if (g.output() != kInputNode && g.node(g.output()).layer->kind() == LayerKind::sigmoid) {
    logits = g.node(g.output()).inputs.at(0);
  }
  const std::size_t n = train_ds.size();
  Tensor x, y;
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    DetRng rng(cfg.seed, "shuffle/" + std::to_string(e));
    const auto perm = shuffle_permutation(rng, n);
    float loss_sum = 0.0f;
    std::size_t correct = 0;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch) {
      const std::size_t bn = std::min(cfg.batch_size, n - start);
      make_batch(train_ds, std::span(perm).subspan(start, bn), x, y);
      RunContext ctx;
      ctx.mode = Mode::train;
      ctx.epoch = e;
      ctx.batch = batch;
      ctx.pool = &pool;
      ctx.param_grads = true;
      ctx.input_grads = false;
      ModelGraph::Cache cache;
      const Tensor p = g.forward(x, ctx, &cache);
      const float loss = bce_loss(p, y);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::numeric,
                    "non-finite loss at epoch " + std::to_string(e) + ", batch " + std::to_string(batch));
      }
      if (logits.empty()) {
        g.backward(cache, bce_grad(p, y), ctx);
      } else {
        g.backward(cache, bce_logit_grad(p, y), ctx, "", logits);
      }
      optimizer.step(g);
      loss_sum += loss * static_cast<float>(bn);
      for (std::size_t i = 0; i < bn; ++i) correct += (p[i] >= 0.5f ? 1.0f : 0.0f) == y[i];
    }
    EpochRecord rec;
    rec.epoch = e;
    rec.train_loss = loss_sum / static_cast<float>(n);
    rec.train_acc = static_cast<float>(correct) / static_cast<float>(n);
    const EvalResult v = evaluate(g, val_ds, cfg.batch_size, &pool);
    rec.val_loss = v.loss;
    rec.val_acc = v.acc;
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return records;
}

}  // namespace detcnn
