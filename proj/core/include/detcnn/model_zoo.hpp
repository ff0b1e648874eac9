#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "detcnn/detrand.hpp"
#include "detcnn/graph.hpp"

namespace detcnn {

enum class ModelKind { convnet, mini_xception, mini_xception_gpu };

/// "convnet", "mini-xception", "mini-xception-gpu".
const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

enum class XceptionVariant { cpu_det, gpu_det };

/// Augmentation (flip, rotation 0.1, zoom 0.2), rescale 1/255, four
/// conv3x3+relu+maxpool2 stages with 32/64/128/256 filters, conv3x3 256 + relu,
/// flatten, dropout 0.5, dense 1, sigmoid. Kernels use seeds.global.
/// Too small a pdim fails with an error naming the first layer that cannot fit.
ModelGraph build_convnet(std::size_t pdim = 180, const SeedSet& seeds = {});

/// Augmentation, rescale, entry conv 5x5/32 (valid, no bias), then for sizes
/// 32..512: BN, relu, sepconv, BN, relu, sepconv, maxpool 3/2 same, plus a
/// strided 1x1 conv on the skip path added back; global average pool,
/// dropout 0.5, dense 1, sigmoid.
///
/// gpu_det replaces each sepconv with a full 3x3 conv (same, no bias) and
/// drops the residual add; the skip-path conv then feeds nothing and is
/// omitted.
ModelGraph build_mini_xception(std::size_t pdim = 180, const SeedSet& seeds = {},
                               XceptionVariant variant = XceptionVariant::cpu_det);

ModelGraph build_model(ModelKind kind, std::size_t pdim, const SeedSet& seeds = {});

/// Closed-form spatial edge after each ConvNet conv/pool stage
/// (conv1, pool1, ..., pool4, conv5). Throws config_error naming the stage
/// that underflows.
std::vector<std::size_t> convnet_spatial_trace(std::size_t pdim);

}  // namespace detcnn
