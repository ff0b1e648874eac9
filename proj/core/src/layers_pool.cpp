#include <limits>

#include "detcnn/error.hpp"
#include "detcnn/layers.hpp"
#include "detcnn/parallel.hpp"
#include "layer_impl.hpp"

namespace detcnn::detail {

namespace {

template <typename T>
using Inputs = typename Layer<T>::Inputs;

/// Max over each window; padded cells never win. Ties keep the first cell in
/// row-major scan order, and the winning flat input index is kept for backward.
template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(std::span<const Shape> in) const override {
    require_image(this->id(), in);
    const auto& c = this->config();
    try {
      const auto gh = window_geometry(in[0][0], c.kernel_size, c.stride, c.padding);
      const auto gw = window_geometry(in[0][1], c.kernel_size, c.stride, c.padding);
      return Shape{gh.out, gw.out, in[0][2]};
    } catch (const Error& e) {
      throw config_error("maxpool2d '" + this->id() + "' on input " + in[0].str() + ": " + e.what());
    }
  }

  const std::vector<std::size_t>& argmax() const noexcept { return argmax_; }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext& ctx) override {
    const auto& cfg = this->config();
    const BasicTensor<T>& x = *in[0];
    const std::size_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
    const auto gh = window_geometry(h, cfg.kernel_size, cfg.stride, cfg.padding);
    const auto gw = window_geometry(w, cfg.kernel_size, cfg.stride, cfg.padding);
    BasicTensor<T> y(Shape{n, gh.out, gw.out, c});
    argmax_.assign(y.size(), 0);
    parallel_for(ctx.pool, n * gh.out, [&](std::size_t begin, std::size_t end) {
      for (std::size_t row = begin; row < end; ++row) {
        const std::size_t s = row / gh.out, oy = row % gh.out;
        for (std::size_t ox = 0; ox < gw.out; ++ox) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_idx = std::numeric_limits<std::size_t>::max();
            for (std::size_t ky = 0; ky < cfg.kernel_size; ++ky) {
              const long iy = static_cast<long>(oy * cfg.stride + ky) - static_cast<long>(gh.pad_before);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t kx = 0; kx < cfg.kernel_size; ++kx) {
                const long ix = static_cast<long>(ox * cfg.stride + kx) - static_cast<long>(gw.pad_before);
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                const std::size_t idx = ((s * h + iy) * w + ix) * c + ch;
                if (best_idx == std::numeric_limits<std::size_t>::max() || x[idx] > best) {
                  best = x[idx];
                  best_idx = idx;
                }
              }
            }
            const std::size_t o = ((s * gh.out + oy) * gw.out + ox) * c + ch;
            y[o] = best;
            argmax_[o] = best_idx;
          }
        }
      }
    });
    return y;
  }

  std::vector<BasicTensor<T>> do_backward(Inputs<T> in, const BasicTensor<T>& y, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>()};
    if (argmax_.size() != y.size()) throw config_error("maxpool2d '" + this->id() + "': stale forward state");
    BasicTensor<T> dx(in[0]->shape());
    const std::size_t n = y.shape()[0], per_sample = y.size() / n;
    // overlapping windows accumulate in output order within each sample
    parallel_for(ctx.pool, n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t o = begin * per_sample; o < end * per_sample; ++o) dx[argmax_[o]] += g[o];
    });
    return {std::move(dx)};
  }

 private:
  std::vector<std::size_t> argmax_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_pool_layer(std::string id, const LayerConfig& cfg) {
  return std::make_unique<MaxPoolLayer<T>>(std::move(id), cfg);
}

template std::unique_ptr<Layer<float>> make_pool_layer(std::string, const LayerConfig&);
template std::unique_ptr<Layer<double>> make_pool_layer(std::string, const LayerConfig&);

}  // namespace detcnn::detail
