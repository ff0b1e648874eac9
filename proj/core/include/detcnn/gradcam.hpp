#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "detcnn/graph.hpp"
#include "detcnn/tensor.hpp"

namespace detcnn {

class ThreadPool;

struct CamMap {
  Tensor grid;  // [h,w], values in [0,1]
  std::string target_layer;
  float class_score = 0.0f;  // model probability of class_index
  int class_index = 0;
};

/// The conv/sepconv node furthest from the input (ties: latest in canonical
/// order).
std::string default_cam_target(const ModelGraph& g);

/// Node whose output is used as the feature maps of `target`: a conv node
/// whose only consumer is a relu counts as a conv with fused relu activation,
/// so the relu output is used; otherwise the conv output itself.
std::string cam_feature_node(const ModelGraph& g, const std::string& target);

/// The Grad-CAM formula on one feature stack: alpha_k = mean over pixels of
/// grads[..,k], M = relu(sum_k alpha_k * A[..,k]), grid = M / max(M) (zero
/// grid when max(M) == 0). Both inputs are [h,w,K] or [1,h,w,K]; sums run in
/// index order.
Tensor cam_grid(const Tensor& activations, const Tensor& grads);

/// Grad-CAM of one [H,W,C] image in inference mode. For a single sigmoid
/// output, class 1 differentiates +p and class 0 differentiates -p; for wider
/// outputs the class_index entry is used.
CamMap grad_cam(ModelGraph& g, const Tensor& image, const std::string& target_layer, int class_index,
                ThreadPool* pool = nullptr);

/// Piecewise-linear ramp: 0 blue, 0.25 cyan, 0.5 green, 0.75 yellow, 1 red
/// (0..255 per channel). Inputs are clamped to [0,1].
std::array<float, 3> cam_color(float v);

/// Bilinear upsampling of the grid to the image size, colored by cam_color,
/// blended as (1-alpha)*image + alpha*color.
Tensor render_overlay(const Tensor& image, const CamMap& cam, float alpha = 0.4f);

/// One row per grid row, values printed with %.8f, after a '#' header line.
std::string cam_to_text(const CamMap& cam);

/// Rectangles are half-open pixel ranges [x0,x1) x [y0,y1).
struct PerturbSpec {
  enum class Op { crop_rect, fill_rect };
  Op op = Op::fill_rect;
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::array<float, 3> fill{0.0f, 0.0f, 0.0f};
};

/// fill_rect overwrites the rectangle. crop_rect deletes the rows and the
/// columns the rectangle spans (only the rows for a full-width rectangle,
/// only the columns for a full-height one) and resizes the rest back to the
/// original size. Degenerate, out-of-bounds or whole-image rectangles are
/// config errors.
Tensor perturb(const Tensor& image, const PerturbSpec& spec);

}  // namespace detcnn
