#include <cmath>

#include "detcnn/error.hpp"
#include "detcnn/layers.hpp"
#include "layer_impl.hpp"

namespace detcnn::detail {

namespace {

template <typename T>
using Inputs = typename Layer<T>::Inputs;

// Channel-last batch normalization. Statistics are per channel over every
// other axis; variance is the biased (1/M) estimate.
template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(std::span<const Shape> in) const override { return in[0]; }

 protected:
  void create_params(std::span<const Shape> in) override {
    const std::size_t c = in[0].dims().back();
    this->params_.push_back({"beta", BasicTensor<T>(Shape{c}, T(0)), {}, true});
    this->params_.push_back({"gamma", BasicTensor<T>(Shape{c}, T(1)), {}, true});
    this->buffers_.push_back({"moving_mean", BasicTensor<T>(Shape{c}, T(0)), {}, false});
    this->buffers_.push_back({"moving_variance", BasicTensor<T>(Shape{c}, T(1)), {}, false});
  }

  BasicTensor<T> do_forward(Inputs<T> in, const RunContext& ctx) override {
    const BasicTensor<T>& x = *in[0];
    const std::size_t c = x.shape().dims().back(), rows = x.size() / c;
    const T eps = static_cast<T>(this->config().epsilon);
    const T* gamma = this->find("gamma")->value.ptr();
    const T* beta = this->find("beta")->value.ptr();
    BasicTensor<T>& mm = this->find("moving_mean")->value;
    BasicTensor<T>& mv = this->find("moving_variance")->value;

    BasicTensor<T> mean(Shape{c}), var(Shape{c});
    train_ = ctx.mode == Mode::train;
    if (train_) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[r * c + ch];
      }
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] = mean[ch] / static_cast<T>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T d = x[r * c + ch] - mean[ch];
          var[ch] += d * d;
        }
      }
      for (std::size_t ch = 0; ch < c; ++ch) var[ch] = var[ch] / static_cast<T>(rows);
      const T m = static_cast<T>(this->config().momentum);
      for (std::size_t ch = 0; ch < c; ++ch) {
        mm[ch] = mm[ch] * m + mean[ch] * (T(1) - m);
        mv[ch] = mv[ch] * m + var[ch] * (T(1) - m);
      }
    } else {
      mean = mm;
      var = mv;
    }

    invstd_ = BasicTensor<T>(Shape{c});
    for (std::size_t ch = 0; ch < c; ++ch) invstd_[ch] = T(1) / std::sqrt(var[ch] + eps);

    xhat_ = BasicTensor<T>(x.shape());
    BasicTensor<T> y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = r * c + ch;
        xhat_[i] = (x[i] - mean[ch]) * invstd_[ch];
        y[i] = gamma[ch] * xhat_[i] + beta[ch];
      }
    }
    return y;
  }

  std::vector<BasicTensor<T>> do_backward(Inputs<T>, const BasicTensor<T>&, const BasicTensor<T>& dy,
                                          const RunContext& ctx) override {
    const std::size_t c = dy.shape().dims().back(), rows = dy.size() / c;
    const T* gamma = this->find("gamma")->value.ptr();

    BasicTensor<T> dgamma(Shape{c}), dbeta(Shape{c});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = r * c + ch;
        dbeta[ch] += dy[i];
        dgamma[ch] += dy[i] * xhat_[i];
      }
    }
    if (ctx.param_grads) {
      this->find("gamma")->grad = dgamma;
      this->find("beta")->grad = dbeta;
    }
    if (!ctx.input_grads) return {BasicTensor<T>()};

    BasicTensor<T> dx(dy.shape());
    if (train_) {
      // dx = gamma * invstd / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
      const T m = static_cast<T>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t i = r * c + ch;
          const T k = gamma[ch] * invstd_[ch] / m;
          dx[i] = k * (m * dy[i] - dbeta[ch] - xhat_[i] * dgamma[ch]);
        }
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t i = r * c + ch;
          dx[i] = dy[i] * (gamma[ch] * invstd_[ch]);
        }
      }
    }
    return {std::move(dx)};
  }

 private:
  BasicTensor<T> xhat_;
  BasicTensor<T> invstd_;
  bool train_ = false;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_norm_layer(std::string id, const LayerConfig& cfg) {
  return std::make_unique<BatchNormLayer<T>>(std::move(id), cfg);
}

template std::unique_ptr<Layer<float>> make_norm_layer(std::string, const LayerConfig&);
template std::unique_ptr<Layer<double>> make_norm_layer(std::string, const LayerConfig&);

}  // namespace detcnn::detail
