#pragma once

// Scene-completion training objective: scene-class affinity terms, voxel cross
// entropy, depth supervision and the weighted total.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vlscene/labels.hpp"
#include "vlscene/tensor.hpp"

namespace vlscene::losses {

/// Scene-class affinity over class probabilities [K, N]. `labels` has N
/// entries in [0, K) or -1 (ignored). For each class present in the labels:
///   P = sum_{y=c} p_c / sum_i p_c,  R = sum_{y=c} p_c / n_c,
///   S = sum_{y!=c} (1 - p_c) / n_{!c}  (only when n_{!c} > 0),
/// loss = -mean_c (log P + log R + log S), logs clamped at 1e-12.
Tensor affinity_loss(const Tensor& probs, std::span<const std::int32_t> labels);

/// Affinity over softmax(Y_logits) against the label grid; 255 is ignored.
Tensor scal_loss_sem(const Tensor& logits, const LabelGrid& gt);
/// Affinity over [p_empty, 1 - p_empty] against occupied/empty labels.
Tensor scal_loss_geo(const Tensor& logits, const LabelGrid& gt);

/// Voxel-wise cross entropy with ignore label 255; optional per-class weights.
Tensor ce_loss(const Tensor& logits, const LabelGrid& gt, std::span<const double> class_weights = {});
/// 1 / log(1.02 + frequency) per class over the non-ignored voxels.
std::vector<double> inverse_log_frequency_weights(const LabelGrid& gt, std::size_t num_classes);

/// Nearest bin centre to `depth`.
std::int32_t nearest_bin(std::span<const double> bins, double depth);

/// Cross entropy between per-pixel depth distributions D [bins, H, W] and the
/// bin of the ground-truth depth; pixels with depth 0 are ignored. With
/// `soft_targets` the target splits linearly between the two nearest bins.
Tensor depth_loss(const Tensor& depth_probs, std::span<const double> gt_depth, std::span<const double> bins,
                  bool soft_targets = false);

struct LossWeights {
    double lambda_ssc = 1.0, lambda_kd = 1.0;
    double sem_scal = 1.0, geo_scal = 1.0, ce = 1.0, depth = 1.0;
    double kd_feat = 1.0, kd_logits = 1.0;

    void validate() const;
};

/// Undefined parts count as zero.
struct LossParts {
    Tensor sem_scal, geo_scal, ce, depth, kd_feat, kd_logits;
};

/// lambda_ssc * (weighted Eq-8 parts) + lambda_kd * (weighted distillation parts).
Tensor total_loss(const LossParts& parts, const LossWeights& w);

}  // namespace vlscene::losses
