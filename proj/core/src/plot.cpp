#include "detcnn/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "detcnn/error.hpp"

namespace detcnn {

namespace {

using Rgb = std::array<float, 3>;

struct Canvas {
  Tensor img;
  std::size_t w, h;

  void set(long x, long y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return;
    for (std::size_t ch = 0; ch < 3; ++ch) img[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * 3 + ch] = c[ch];
  }

  // Bresenham, two pixels thick
  void line(long x0, long y0, long x1, long y1, const Rgb& c) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
      set(x0, y0, c);
      set(x0, y0 + 1, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

}  // namespace

Tensor render_metrics_plot(const std::vector<EpochRecord>& epochs, std::size_t width, std::size_t height) {
  if (width < 64 || height < 64) throw config_error("plot must be at least 64x64");
  Canvas cv{Tensor(Shape{height, width, 3}, 255.0f), width, height};
  const long left = 40, right = static_cast<long>(width) - 16, top = 16, bottom = static_cast<long>(height) - 32;
  const Rgb axis{0, 0, 0}, grid{220, 220, 220};
  for (int k = 1; k <= 4; ++k) {
    const long y = bottom - (bottom - top) * k / 4;
    cv.line(left, y, right, y, grid);
  }
  cv.line(left, bottom, right, bottom, axis);
  cv.line(left, top, left, bottom, axis);
  if (epochs.empty()) return cv.img;

  float max_loss = 0.0f;
  for (const auto& e : epochs) max_loss = std::max({max_loss, e.train_loss, e.val_loss});
  if (!(max_loss > 0.0f) || !std::isfinite(max_loss)) max_loss = 1.0f;

  const std::size_t n = epochs.size();
  auto px = [&](std::size_t i) {
    return n == 1 ? (left + right) / 2 : left + static_cast<long>((right - left) * static_cast<long>(i) / static_cast<long>(n - 1));
  };
  auto py = [&](float v) {
    v = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    return bottom - static_cast<long>(std::lround(static_cast<double>(v) * static_cast<double>(bottom - top)));
  };
  const struct {
    Rgb color;
    float (*get)(const EpochRecord&, float);
  } series[] = {
      {{31, 119, 180}, [](const EpochRecord& e, float) { return e.train_acc; }},
      {{44, 160, 44}, [](const EpochRecord& e, float) { return e.val_acc; }},
      {{255, 127, 14}, [](const EpochRecord& e, float m) { return e.train_loss / m; }},
      {{214, 39, 40}, [](const EpochRecord& e, float m) { return e.val_loss / m; }},
  };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < n; ++i) {
      const long x = px(i), y = py(s.get(epochs[i], max_loss));
      if (i > 0) cv.line(px(i - 1), py(s.get(epochs[i - 1], max_loss)), x, y, s.color);
      for (long d = -2; d <= 2; ++d) {
        cv.set(x + d, y, s.color);
        cv.set(x, y + d, s.color);
      }
    }
  }
  return cv.img;
}

}  // namespace detcnn
