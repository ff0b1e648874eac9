#include "detcnn/model_zoo.hpp"

#include "detcnn/error.hpp"

namespace detcnn {

namespace {

constexpr float kRotationFactor = 0.1f;
constexpr float kZoomFactor = 0.2f;
constexpr float kDropoutRate = 0.5f;

std::string augment(ModelGraph& g, const SeedSet& seeds) {
  g.add("aug_flip", LayerConfig::random_flip_h(seeds.augmentation), {kInputNode});
  g.add("aug_rotation", LayerConfig::random_rotation(kRotationFactor, seeds.augmentation), {"aug_flip"});
  g.add("aug_zoom", LayerConfig::random_zoom(kZoomFactor, seeds.augmentation), {"aug_rotation"});
  g.add("rescale", LayerConfig::rescale(1.0f / 255.0f), {"aug_zoom"});
  return "rescale";
}

void head(ModelGraph& g, const std::string& from, const SeedSet& seeds) {
  g.add("dropout", LayerConfig::dropout(kDropoutRate, seeds.dropout), {from});
  g.add("dense", LayerConfig::dense(1, seeds.global), {"dropout"});
  g.add("sigmoid", LayerConfig::sigmoid(), {"dense"});
  g.set_output("sigmoid");
}

}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::convnet: return "convnet";
    case ModelKind::mini_xception: return "mini-xception";
    case ModelKind::mini_xception_gpu: return "mini-xception-gpu";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  for (auto k : {ModelKind::convnet, ModelKind::mini_xception, ModelKind::mini_xception_gpu}) {
    if (name == to_string(k)) return k;
  }
  throw config_error("unknown model '" + name + "' (expected convnet, mini-xception or mini-xception-gpu)");
}

ModelGraph build_convnet(std::size_t pdim, const SeedSet& seeds) {
  ModelGraph g(Shape{pdim, pdim, 3});
  std::string x = augment(g, seeds);
  const std::size_t filters[] = {32, 64, 128, 256, 256};
  for (std::size_t i = 0; i < 5; ++i) {
    const std::string n = std::to_string(i + 1);
    g.add("conv" + n, LayerConfig::conv2d(filters[i], 3, 1, Padding::valid, true, seeds.global), {x});
    g.add("relu" + n, LayerConfig::relu(), {"conv" + n});
    x = "relu" + n;
    if (i < 4) {
      g.add("pool" + n, LayerConfig::maxpool2d(2, 2, Padding::valid), {x});
      x = "pool" + n;
    }
  }
  g.add("flatten", LayerConfig::flatten(), {x});
  head(g, "flatten", seeds);
  return g;
}

ModelGraph build_mini_xception(std::size_t pdim, const SeedSet& seeds, XceptionVariant variant) {
  ModelGraph g(Shape{pdim, pdim, 3});
  std::string x = augment(g, seeds);
  g.add("conv_entry", LayerConfig::conv2d(32, 5, 1, Padding::valid, false, seeds.kernel), {x});
  x = "conv_entry";
  const bool gpu = variant == XceptionVariant::gpu_det;
  const std::size_t sizes[] = {32, 64, 128, 256, 512};
  for (std::size_t b = 0; b < 5; ++b) {
    const std::string p = "b" + std::to_string(b + 1) + "_";
    const std::size_t size = sizes[b];
    const std::string residual = x;
    for (int half = 1; half <= 2; ++half) {
      const std::string h = std::to_string(half);
      g.add(p + "bn" + h, LayerConfig::batchnorm(), {x});
      g.add(p + "relu" + h, LayerConfig::relu(), {p + "bn" + h});
      if (gpu) {
        g.add(p + "conv" + h, LayerConfig::conv2d(size, 3, 1, Padding::same, false, seeds.kernel), {p + "relu" + h});
        x = p + "conv" + h;
      } else {
        g.add(p + "sep" + h, LayerConfig::separable_conv2d(size, 3, Padding::same, false, seeds.kernel, seeds.pointwise),
              {p + "relu" + h});
        x = p + "sep" + h;
      }
    }
    g.add(p + "pool", LayerConfig::maxpool2d(3, 2, Padding::same), {x});
    x = p + "pool";
    if (!gpu) {
      g.add(p + "res", LayerConfig::conv2d(size, 1, 2, Padding::same, false, seeds.kernel), {residual});
      g.add(p + "add", LayerConfig::residual_add(), {p + "pool", p + "res"});
      x = p + "add";
    }
  }
  g.add("gap", LayerConfig::global_avg_pool(), {x});
  head(g, "gap", seeds);
  return g;
}

ModelGraph build_model(ModelKind kind, std::size_t pdim, const SeedSet& seeds) {
  switch (kind) {
    case ModelKind::convnet: return build_convnet(pdim, seeds);
    case ModelKind::mini_xception: return build_mini_xception(pdim, seeds, XceptionVariant::cpu_det);
    case ModelKind::mini_xception_gpu: return build_mini_xception(pdim, seeds, XceptionVariant::gpu_det);
  }
  throw config_error("unknown model kind");
}

std::vector<std::size_t> convnet_spatial_trace(std::size_t pdim) {
  std::vector<std::size_t> out;
  std::size_t s = pdim;
  for (std::size_t i = 1; i <= 5; ++i) {
    if (s < 3) {
      throw config_error("conv" + std::to_string(i) + ": spatial size " + std::to_string(s) +
                         " is smaller than the 3x3 kernel");
    }
    s -= 2;
    out.push_back(s);
    if (i < 5) {
      if (s < 2) throw config_error("pool" + std::to_string(i) + ": spatial size 1 is smaller than the 2x2 window");
      s /= 2;
      out.push_back(s);
    }
  }
  return out;
}

}  // namespace detcnn
