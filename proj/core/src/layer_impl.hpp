#pragma once

#include <memory>
#include <string>

#include "detcnn/layers.hpp"

namespace detcnn::detail {

template <typename T>
std::unique_ptr<Layer<T>> make_conv_layer(std::string id, const LayerConfig& cfg);
template <typename T>
std::unique_ptr<Layer<T>> make_pool_layer(std::string id, const LayerConfig& cfg);
template <typename T>
std::unique_ptr<Layer<T>> make_norm_layer(std::string id, const LayerConfig& cfg);
template <typename T>
std::unique_ptr<Layer<T>> make_augment_layer(std::string id, const LayerConfig& cfg);

/// Requires an [H,W,C] per-item shape; names the layer on failure.
void require_image(const std::string& id, std::span<const Shape> inputs);

/// Glorot-uniform tensor in element type T (drawn in float, then widened).
template <typename T>
BasicTensor<T> glorot_param(std::uint64_t seed, std::size_t fan_in, std::size_t fan_out, const Shape& shape,
                            const std::string& label);

}  // namespace detcnn::detail
