#include "detcnn/gradcam.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "detcnn/error.hpp"
#include "detcnn/tensor_ops.hpp"

namespace detcnn {

namespace {

bool is_conv(const ModelGraph& g, const std::string& id) {
  const LayerKind k = g.node(id).layer->kind();
  return k == LayerKind::conv2d || k == LayerKind::separable_conv2d;
}

}  // namespace

std::string default_cam_target(const ModelGraph& g) {
  std::string best;
  std::size_t best_depth = 0;
  for (const auto& id : g.order()) {
    if (!is_conv(g, id)) continue;
    const std::size_t d = g.depth(id);
    if (best.empty() || d >= best_depth) {
      best = id;
      best_depth = d;
    }
  }
  if (best.empty()) throw config_error("model has no convolutional node for Grad-CAM");
  return best;
}

std::string cam_feature_node(const ModelGraph& g, const std::string& target) {
  const auto users = g.consumers(target);
  if (users.size() == 1 && g.node(users[0]).layer->kind() == LayerKind::relu) return users[0];
  return target;
}

Tensor cam_grid(const Tensor& activations, const Tensor& grads) {
  if (activations.shape() != grads.shape()) {
    throw config_error("cam_grid: activations " + activations.shape().str() + " vs gradients " +
                       grads.shape().str());
  }
  const Shape& s = activations.shape();
  std::size_t h, w;
  if (s.rank() == 3) {
    h = s[0];
    w = s[1];
  } else if (s.rank() == 4 && s[0] == 1) {
    h = s[1];
    w = s[2];
  } else {
    throw config_error("cam_grid expects [h,w,K] or [1,h,w,K], got " + s.str());
  }
  const std::size_t k = s.dims().back(), pixels = h * w;

  std::vector<float> alpha(k, 0.0f);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < k; ++c) alpha[c] += grads[p * k + c];
  }
  for (std::size_t c = 0; c < k; ++c) alpha[c] = alpha[c] / static_cast<float>(pixels);

  Tensor grid(Shape{h, w});
  float peak = 0.0f;
  for (std::size_t p = 0; p < pixels; ++p) {
    float m = 0.0f;
    for (std::size_t c = 0; c < k; ++c) m += alpha[c] * activations[p * k + c];
    m = m > 0.0f ? m : 0.0f;
    grid[p] = m;
    if (m > peak) peak = m;
  }
  if (peak > 0.0f) {
    for (std::size_t p = 0; p < pixels; ++p) grid[p] = grid[p] / peak;
  }
  return grid;
}

CamMap grad_cam(ModelGraph& g, const Tensor& image, const std::string& target_layer, int class_index,
                ThreadPool* pool) {
  if (!g.contains(target_layer) || !is_conv(g, target_layer)) {
    throw config_error("Grad-CAM target '" + target_layer + "' is not a convolutional node");
  }
  const Tensor x = image.shape().rank() == g.input_shape().rank() ? image.reshaped(image.shape().batched(1)) : image;
  if (x.shape()[0] != 1) throw config_error("grad_cam takes a single image");

  RunContext ctx;
  ctx.mode = Mode::infer;
  ctx.pool = pool;
  ModelGraph::Cache cache;
  const Tensor out = g.forward(x, ctx, &cache);
  const std::size_t width = out.size();
  const std::size_t classes = width == 1 ? 2 : width;
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= classes) {
    throw config_error("class index " + std::to_string(class_index) + " out of range for " +
                       std::to_string(classes) + " classes");
  }

  Tensor seed(out.shape());
  CamMap cam;
  if (width == 1) {
    seed[0] = class_index == 1 ? 1.0f : -1.0f;
    cam.class_score = class_index == 1 ? out[0] : 1.0f - out[0];
  } else {
    seed[static_cast<std::size_t>(class_index)] = 1.0f;
    cam.class_score = out[static_cast<std::size_t>(class_index)];
  }
  ctx.param_grads = false;
  ctx.input_grads = true;
  const std::string feat = cam_feature_node(g, target_layer);
  const Tensor grads = g.backward(cache, seed, ctx, feat);
  cam.grid = cam_grid(cache.at(feat), grads);
  cam.target_layer = target_layer;
  cam.class_index = class_index;
  return cam;
}

std::array<float, 3> cam_color(float v) {
  static constexpr float stops[5][3] = {
      {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}};
  v = std::isnan(v) ? 0.0f : std::fmin(std::fmax(v, 0.0f), 1.0f);
  const float pos = v * 4.0f;
  const std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(pos), 3);
  const float t = pos - static_cast<float>(seg);
  std::array<float, 3> c{};
  for (int i = 0; i < 3; ++i) c[i] = stops[seg][i] + (stops[seg + 1][i] - stops[seg][i]) * t;
  return c;
}

Tensor render_overlay(const Tensor& image, const CamMap& cam, float alpha) {
  if (!(alpha >= 0.0f && alpha <= 1.0f)) throw config_error("overlay alpha must lie in [0,1]");
  if (image.shape().rank() != 3 || image.shape()[2] != 3) {
    throw config_error("overlay image must be [H,W,3], got " + image.shape().str());
  }
  if (cam.grid.shape().rank() != 2) throw config_error("CAM grid must be [h,w]");
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  const Tensor up =
      bilinear_resize(cam.grid.reshaped(Shape{cam.grid.shape()[0], cam.grid.shape()[1], 1}), h, w);
  Tensor out(image.shape());
  for (std::size_t p = 0; p < h * w; ++p) {
    const auto c = cam_color(up[p]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      out[p * 3 + ch] = (1.0f - alpha) * image[p * 3 + ch] + alpha * c[ch];
    }
  }
  return out;
}

std::string cam_to_text(const CamMap& cam) {
  std::ostringstream os;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8f", static_cast<double>(cam.class_score));
  const std::size_t h = cam.grid.shape()[0], w = cam.grid.shape()[1];
  os << "# target=" << cam.target_layer << " class=" << cam.class_index << " score=" << buf << " rows=" << h
     << " cols=" << w << "\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::snprintf(buf, sizeof buf, "%.8f", static_cast<double>(cam.grid[y * w + x]));
      os << (x ? " " : "") << buf;
    }
    os << "\n";
  }
  return os.str();
}

Tensor perturb(const Tensor& image, const PerturbSpec& spec) {
  if (image.shape().rank() != 3) throw config_error("perturb expects an [H,W,C] image");
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  if (spec.x0 >= spec.x1 || spec.y0 >= spec.y1) throw config_error("perturb rectangle is empty");
  if (spec.x1 > w || spec.y1 > h) {
    throw config_error("perturb rectangle (" + std::to_string(spec.x0) + "," + std::to_string(spec.y0) + ")-(" +
                       std::to_string(spec.x1) + "," + std::to_string(spec.y1) + ") exceeds image " +
                       std::to_string(w) + "x" + std::to_string(h));
  }
  if (spec.op == PerturbSpec::Op::fill_rect) {
    if (c != 3) throw config_error("fill_rect needs a 3-channel image");
    Tensor out = image;
    for (std::size_t y = spec.y0; y < spec.y1; ++y) {
      for (std::size_t x = spec.x0; x < spec.x1; ++x) {
        for (std::size_t ch = 0; ch < 3; ++ch) out[(y * w + x) * 3 + ch] = spec.fill[ch];
      }
    }
    return out;
  }

  const bool full_w = spec.x0 == 0 && spec.x1 == w;
  const bool full_h = spec.y0 == 0 && spec.y1 == h;
  if (full_w && full_h) throw config_error("crop rectangle covers the whole image");
  const bool drop_rows = !full_h, drop_cols = !full_w;
  std::vector<std::size_t> rows, cols;
  for (std::size_t y = 0; y < h; ++y) {
    if (!(drop_rows && y >= spec.y0 && y < spec.y1)) rows.push_back(y);
  }
  for (std::size_t x = 0; x < w; ++x) {
    if (!(drop_cols && x >= spec.x0 && x < spec.x1)) cols.push_back(x);
  }
  if (rows.empty() || cols.empty()) throw config_error("crop rectangle leaves no pixels");
  Tensor rest(Shape{rows.size(), cols.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        rest[(i * cols.size() + j) * c + ch] = image[(rows[i] * w + cols[j]) * c + ch];
      }
    }
  }
  return bilinear_resize(rest, h, w);
}

}  // namespace detcnn
