#pragma once

// The toy scene-completion network: image heads, optional vision-language
// distillation branch, lift-splat, NGP, SSI and the voxel head.

#include <cstdint>
#include <vector>

#include "vlscene/config.hpp"
#include "vlscene/gssa.hpp"
#include "vlscene/labels.hpp"
#include "vlscene/losses.hpp"
#include "vlscene/scene_sim.hpp"
#include "vlscene/view_transform.hpp"
#include "vlscene/vlgd.hpp"

namespace vlscene::model {

inline constexpr std::size_t kImageChannels = 4;

struct Params {
    view::ContextHeadParams context;
    view::DepthHeadParams depth;
    vlgd::Params vlgd;
    gssa::Params gssa;

    static Params init(const ExperimentConfig& cfg, std::uint64_t seed);
    /// Every tensor, in checkpoint order.
    std::vector<Tensor> tensors() const;
    /// Tensors reachable from the loss under the config's module toggles.
    std::vector<Tensor> trainable(const ExperimentConfig& cfg) const;
};

/// Per-sample constants: splat geometry and the teacher maps resized to the image.
struct Prepared {
    view::SplatTable table;
    Tensor teacher_vision;  // [C_t, H, W]
    Tensor teacher_logits;  // [Q, H, W]
    std::vector<double> bins;
    std::vector<double> depth;
    std::vector<double> class_weights;  // empty unless enabled
};

Prepared prepare(const ExperimentConfig& cfg, const scene::SceneSample& sample);

struct Output {
    Tensor logits;  // [M + 1, 2X, 2Y, 2Z]
    Tensor depth;   // [bins, H, W]
    losses::LossParts parts;
    Tensor total;
};

/// Loss parts are left undefined when `with_loss` is false.
Output forward(const Params& p, const ExperimentConfig& cfg, const scene::SceneSample& sample, const Prepared& prep,
               bool with_loss = true);

/// Per-voxel argmax of [K, X, Y, Z] logits.
LabelGrid predict(const Tensor& logits);

}  // namespace vlscene::model
