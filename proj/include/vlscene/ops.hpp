#pragma once

// The primitive differentiable operations the pipeline is built from.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vlscene/tensor.hpp"

namespace vlscene {

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(max(a, floor)); the gradient is zero below the floor.
Tensor safe_log(const Tensor& a, double floor = 1e-12);

/// x[c, ...] * w[c]: per-channel weights broadcast over every trailing axis.
Tensor mul_channels(const Tensor& x, const Tensor& w);

// Layout.
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows `rows[i]` of a [N, C] tensor, as [rows.size(), C].
Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> rows);
/// Nearest-neighbour upsampling of [C, X, Y, Z] by `factor` on each spatial axis.
Tensor upsample_nearest(const Tensor& a, std::size_t factor);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [C, ...] -> [C], averaging every trailing axis.
Tensor global_avg_pool(const Tensor& a);
/// mean |a - b|
Tensor l1_mean(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& a, std::size_t axis);

/// Mean over positions of -sum_axis target * log softmax(pred).
Tensor soft_cross_entropy(const Tensor& pred_logits, const Tensor& target_probs, std::size_t axis);

/// Mean over non-ignored positions of -log softmax(pred)[label]. `labels` holds
/// one entry per position (all axes except `axis`, row-major). With
/// `class_weights` the mean is weighted by the weight of each position's label.
Tensor hard_cross_entropy(const Tensor& pred_logits, std::span<const std::int32_t> labels, std::size_t axis,
                          std::int32_t ignore_label, std::span<const double> class_weights = {});

struct Conv3dOptions {
    std::array<std::size_t, 3> stride{1, 1, 1};
    std::array<std::size_t, 3> padding{0, 0, 0};
};

/// Cross-correlation of input [C_in, X, Y, Z] with kernel [C_out, C_in, kx, ky, kz],
/// zero padding. Pass an undefined `bias` for the bias-free form.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Conv3dOptions& options = {},
              const Tensor& bias = {});

/// Image convolution: input [C_in, H, W], kernel [C_out, C_in, kh, kw], stride 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t padding, const Tensor& bias = {});

/// Padding that keeps spatial extents for an odd kernel extent at stride 1.
constexpr std::size_t same_padding(std::size_t kernel_extent) { return kernel_extent / 2; }

}  // namespace vlscene
