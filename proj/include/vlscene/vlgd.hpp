#pragma once

// Vision-language guidance: teacher logits map, student/teacher fusion, the
// semantic head and the two distillation losses.

#include <filesystem>
#include <string>
#include <vector>

#include "vlscene/init.hpp"
#include "vlscene/tensor.hpp"

namespace vlscene::vlgd {

/// Frozen teacher outputs for one image.
struct TeacherBundle {
    Tensor vision;  // [C_t, H, W]
    Tensor text;    // [Q, C_t]
    std::vector<std::string> class_names;

    std::size_t num_classes() const { return text.dim(0); }
    std::size_t channels() const { return text.dim(1); }
    /// Throws on inconsistent shapes or non-finite values.
    void validate() const;
};

/// True when every pair of text rows has cosine similarity above 1 - 1e-9.
bool text_rows_degenerate(const Tensor& text);

/// Manifest (JSON) plus two VLFT payloads next to it.
void save_teacher(const TeacherBundle& bundle, const std::filesystem::path& manifest);
TeacherBundle load_teacher(const std::filesystem::path& manifest);

/// Per pixel: softmax over q of cos(F_vision[:, h, w], F_text[q]). Constant
/// (the teacher is frozen); norms are clamped at 1e-12.
Tensor compute_logits_map(const Tensor& vision, const Tensor& text);

/// Bilinear resize of a constant [C, H, W] map (half-pixel centres, edge clamp).
Tensor resize_bilinear(const Tensor& map, std::size_t height, std::size_t width);

/// 1x1 conv -> relu -> 1x1 conv, with biases.
struct Mlp {
    Tensor w1, b1, w2, b2;
};

struct ResidualBlock {
    Tensor w1, b1, w2, b2;  // 3x3 convs
};

struct Params {
    Tensor fuse_w1, fuse_b1, fuse_w2, fuse_b2;  // [C, C + C_t + Q, 3, 3], [C, C, 3, 3]
    Mlp vision_mlp, sem_mlp;
    ResidualBlock head_blocks[2];
    Tensor head_w, head_b;  // [Q, C, 1, 1], [Q]

    static Params init(init::Rng& rng, std::size_t c, std::size_t c_t, std::size_t q);
    static Params zeros(std::size_t c, std::size_t c_t, std::size_t q);
    std::vector<Tensor> tensors() const;
};

/// concat -> conv3x3 -> relu -> conv3x3 gives F_vision_hat; then
/// F_fuse = sigmoid(GAP(MLP_v(F_vision_hat))) * MLP_v(F_vision_hat)
///        + sigmoid(GAP(MLP_s(F_sem))) * MLP_s(F_sem).
Tensor fuse_features(const Tensor& sem, const Tensor& vision, const Tensor& logits, const Params& p);

/// mean |F_sem - F_fuse|; with `detach_target` no gradient reaches F_fuse.
Tensor feature_distill_loss(const Tensor& sem, const Tensor& fuse, bool detach_target = true);

/// Two residual blocks (conv, relu, conv, add) then a 1x1 conv to Q logits.
Tensor semantic_head(const Tensor& sem, const Params& p);

/// Soft-target cross entropy against the teacher map. Throws when a target
/// pixel's distribution does not sum to 1 within 1e-6.
Tensor logits_distill_loss(const Tensor& pred, const Tensor& logits);
/// Argmax pseudo-label variant.
Tensor logits_distill_loss_hard(const Tensor& pred, const Tensor& logits);

}  // namespace vlscene::vlgd
