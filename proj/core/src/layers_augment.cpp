// Training-time augmentation: horizontal flip, rotation, zoom.
//
// Every image draws from its own counter position of the layer's stream
// "<kind>/<seed>/<id>/e<epoch>/b<batch>", so results depend only on
// (seed, id, epoch, batch, image index). Warps use inverse mapping around the
// image center with bilinear sampling; coordinates are clamped, which
// replicates edge pixels instead of filling with a constant.

#include <cmath>
#include <numbers>

#include "detcnn/detmath.hpp"
#include "detcnn/detrand.hpp"
#include "detcnn/error.hpp"
#include "detcnn/layers.hpp"
#include "detcnn/parallel.hpp"
#include "layer_impl.hpp"

namespace detcnn {

AugmentDraw augment_draw(const std::string& id, const LayerConfig& cfg, std::uint64_t epoch, std::uint64_t batch,
                         std::size_t image) {
  const DetRng rng(cfg.seed, std::string(to_string(cfg.kind)) + "/" + std::to_string(cfg.seed) + "/" + id + "/e" +
                                 std::to_string(epoch) + "/b" + std::to_string(batch));
  const double u = DetRng::to_unit_float(rng.at(image));
  AugmentDraw d;
  switch (cfg.kind) {
    case LayerKind::random_flip_h:
      d.flip = u < 0.5;
      break;
    case LayerKind::random_rotation:
      // factor is a fraction of a full turn
      d.angle = (2.0 * u - 1.0) * static_cast<double>(cfg.rate) * 2.0 * std::numbers::pi;
      break;
    case LayerKind::random_zoom:
      d.zoom = 1.0 + (2.0 * u - 1.0) * static_cast<double>(cfg.rate);
      break;
    default:
      throw config_error(std::string("augment_draw: ") + to_string(cfg.kind) + " is not an augmentation layer");
  }
  return d;
}

namespace detail {

namespace {

template <typename T>
using Inputs = typename Layer<T>::Inputs;

struct Tap {
  std::size_t y0, y1, x0, x1;
  double wy, wx;
};

// Source tap for output pixel (r, c) under sx = cx + a*dx + b*dy, sy = cy + c*dx + d*dy.
Tap warp_tap(std::size_t r, std::size_t col, std::size_t h, std::size_t w, const double m[4]) {
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double dy = static_cast<double>(r) - cy;
  const double dx = static_cast<double>(col) - cx;
  double sx = cx + (m[0] * dx + m[1] * dy);
  double sy = cy + (m[2] * dx + m[3] * dy);
  sx = std::fmin(std::fmax(sx, 0.0), static_cast<double>(w - 1));
  sy = std::fmin(std::fmax(sy, 0.0), static_cast<double>(h - 1));
  Tap t;
  t.y0 = static_cast<std::size_t>(std::floor(sy));
  t.x0 = static_cast<std::size_t>(std::floor(sx));
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.wy = sy - static_cast<double>(t.y0);
  t.wx = sx - static_cast<double>(t.x0);
  return t;
}

template <typename T>
class AugmentLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(std::span<const Shape> in) const override {
    require_image(this->id(), in);
    return in[0];
  }

 protected:
  BasicTensor<T> do_forward(Inputs<T> in, const RunContext& ctx) override {
    const BasicTensor<T>& x = *in[0];
    epoch_ = ctx.epoch;
    batch_ = ctx.batch;
    active_ = ctx.mode == Mode::train;
    if (!active_) return x;
    BasicTensor<T> y(x.shape());
    const std::size_t n = x.shape()[0];
    parallel_for(ctx.pool, n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t s = begin; s < end; ++s) apply(x, y, s, false);
    });
    return y;
  }

  std::vector<BasicTensor<T>> do_backward(Inputs<T> in, const BasicTensor<T>&, const BasicTensor<T>& g,
                                          const RunContext& ctx) override {
    if (!ctx.input_grads) return {BasicTensor<T>()};
    if (!active_) return {g};
    BasicTensor<T> dx(in[0]->shape());
    const std::size_t n = g.shape()[0];
    parallel_for(ctx.pool, n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t s = begin; s < end; ++s) apply(g, dx, s, true);
    });
    return {std::move(dx)};
  }

 private:
  // Forward warps src into dst for sample s; transpose scatters dst-gradient
  // `src` back onto `dst` with the same bilinear weights.
  void apply(const BasicTensor<T>& src, BasicTensor<T>& dst, std::size_t s, bool transpose) const {
    const std::size_t h = src.shape()[1], w = src.shape()[2], c = src.shape()[3];
    const AugmentDraw d = augment_draw(this->id(), this->config(), epoch_, batch_, s);
    const T* sp = src.ptr() + s * h * w * c;
    T* dp = dst.ptr() + s * h * w * c;

    if (this->kind() == LayerKind::random_flip_h) {
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col) {
          const std::size_t from = d.flip ? w - 1 - col : col;
          for (std::size_t ch = 0; ch < c; ++ch) dp[(r * w + from) * c + ch] = sp[(r * w + col) * c + ch];
        }
      }
      return;
    }

    double m[4];
    if (this->kind() == LayerKind::random_rotation) {
      const double cs = detmath::cos(d.angle), sn = detmath::sin(d.angle);
      m[0] = cs;
      m[1] = sn;
      m[2] = -sn;
      m[3] = cs;
    } else {
      m[0] = d.zoom;
      m[1] = 0.0;
      m[2] = 0.0;
      m[3] = d.zoom;
    }
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        const Tap t = warp_tap(r, col, h, w, m);
        const T wy = static_cast<T>(t.wy), wx = static_cast<T>(t.wx);
        const std::size_t i00 = (t.y0 * w + t.x0) * c, i01 = (t.y0 * w + t.x1) * c;
        const std::size_t i10 = (t.y1 * w + t.x0) * c, i11 = (t.y1 * w + t.x1) * c;
        const std::size_t o = (r * w + col) * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          if (!transpose) {
            const T top = sp[i00 + ch] * (T(1) - wx) + sp[i01 + ch] * wx;
            const T bottom = sp[i10 + ch] * (T(1) - wx) + sp[i11 + ch] * wx;
            dp[o + ch] = top * (T(1) - wy) + bottom * wy;
          } else {
            const T gv = sp[o + ch];
            dp[i00 + ch] += gv * ((T(1) - wx) * (T(1) - wy));
            dp[i01 + ch] += gv * (wx * (T(1) - wy));
            dp[i10 + ch] += gv * ((T(1) - wx) * wy);
            dp[i11 + ch] += gv * (wx * wy);
          }
        }
      }
    }
  }

  std::uint64_t epoch_ = 0;
  std::uint64_t batch_ = 0;
  bool active_ = false;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_augment_layer(std::string id, const LayerConfig& cfg) {
  return std::make_unique<AugmentLayer<T>>(std::move(id), cfg);
}

template std::unique_ptr<Layer<float>> make_augment_layer(std::string, const LayerConfig&);
template std::unique_ptr<Layer<double>> make_augment_layer(std::string, const LayerConfig&);

}  // namespace detail
}  // namespace detcnn
