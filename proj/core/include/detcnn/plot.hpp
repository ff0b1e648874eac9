#pragma once

#include <cstddef>
#include <vector>

#include "detcnn/tensor.hpp"
#include "detcnn/training.hpp"

namespace detcnn {

/// Line plot of per-epoch metrics as an [H,W,3] image on white: train
/// accuracy (blue), validation accuracy (green), train loss (orange) and
/// validation loss (red). Accuracies use the [0,1] axis; losses are scaled
/// by the largest loss in the run.
Tensor render_metrics_plot(const std::vector<EpochRecord>& epochs, std::size_t width = 480,
                           std::size_t height = 320);

}  // namespace detcnn
