#include "vlscene/losses.hpp"

#include <algorithm>
#include <cmath>

#include "vlscene/autograd.hpp"
#include "vlscene/error.hpp"
#include "vlscene/ops.hpp"

namespace vlscene {

void LabelGrid::validate(std::size_t num_classes) const {
    if (labels.size() != extents[0] * extents[1] * extents[2]) throw ShapeError("label grid: size does not match extents");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != kIgnoreLabel && labels[i] >= num_classes) {
            throw FormatError("label grid: value " + std::to_string(labels[i]) + " at voxel " + std::to_string(i) +
                              " outside [0, " + std::to_string(num_classes - 1) + "]");
        }
    }
}

}  // namespace vlscene

namespace vlscene::losses {

using detail::input_grad;
using detail::make_result;
using detail::Node;

namespace {

constexpr double kLogFloor = 1e-12;

void require_grid(const char* op, const Tensor& logits, const LabelGrid& gt) {
    if (logits.rank() != 4) throw ShapeError(std::string(op) + ": logits must be [K, X, Y, Z]");
    for (int a = 0; a < 3; ++a) {
        if (logits.dim(1 + a) != gt.extents[a]) {
            throw ShapeError(std::string(op) + ": axis " + std::string(1, "xyz"[a]) + " logits extent " +
                             std::to_string(logits.dim(1 + a)) + " vs labels " + std::to_string(gt.extents[a]));
        }
    }
}

Tensor class_probs(const Tensor& logits) {
    return reshape(softmax(logits, 0), {logits.dim(0), logits.numel() / logits.dim(0)});
}

struct ClassTerm {
    double a = 0, b = 0, s = 0;  // sum_{y=c} p, sum_i p, sum_{y!=c} (1 - p)
    double n_pos = 0, n_neg = 0;
};

}  // namespace

Tensor affinity_loss(const Tensor& probs, std::span<const std::int32_t> labels) {
    if (probs.rank() != 2) throw ShapeError("affinity_loss: probabilities must be [K, N]");
    const std::size_t K = probs.dim(0), N = probs.dim(1);
    if (labels.size() != N) throw ShapeError("affinity_loss: label count does not match voxels");
    const auto p = probs.data();
    std::vector<ClassTerm> t(K);
    std::size_t evaluated = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const std::int32_t y = labels[i];
        if (y < 0) continue;
        if (static_cast<std::size_t>(y) >= K) throw ShapeError("affinity_loss: label " + std::to_string(y) + " out of range");
        ++evaluated;
        for (std::size_t c = 0; c < K; ++c) {
            const double pc = p[c * N + i];
            t[c].b += pc;
            if (static_cast<std::size_t>(y) == c) {
                t[c].a += pc;
                t[c].n_pos += 1;
            } else {
                t[c].s += 1.0 - pc;
                t[c].n_neg += 1;
            }
        }
    }
    if (evaluated == 0) throw Error("affinity_loss: every voxel is ignored");
    std::size_t present = 0;
    double total = 0.0;
    for (const ClassTerm& c : t) {
        if (c.n_pos == 0) continue;
        ++present;
        total += std::log(std::max(c.a / c.b, kLogFloor)) + std::log(std::max(c.a / c.n_pos, kLogFloor));
        if (c.n_neg > 0) total += std::log(std::max(c.s / c.n_neg, kLogFloor));
    }
    const double n_present = static_cast<double>(present);
    std::vector<std::int32_t> lab(labels.begin(), labels.end());
    return make_result(
        "affinity_loss", {}, {-total / n_present}, {probs}, [t, lab, K, N, n_present](Node& self) {
            double* g = input_grad(self, 0);
            if (!g) return;
            const double go = -self.grad[0] / n_present;
            for (std::size_t c = 0; c < K; ++c) {
                const ClassTerm& ct = t[c];
                if (ct.n_pos == 0) continue;
                // d/dp of log(a/b), log(a/n), log(s/n'); zero where the clamp is active.
                const bool prec = ct.a / ct.b > kLogFloor, rec = ct.a / ct.n_pos > kLogFloor;
                const bool spec = ct.n_neg > 0 && ct.s / ct.n_neg > kLogFloor;
                const double da = (prec ? 1.0 / ct.a : 0.0) + (rec ? 1.0 / ct.a : 0.0);
                const double db = prec ? -1.0 / ct.b : 0.0;
                const double ds = spec ? -1.0 / ct.s : 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const std::int32_t y = lab[i];
                    if (y < 0) continue;
                    const double d = static_cast<std::size_t>(y) == c ? da + db : db + ds;
                    g[c * N + i] += go * d;
                }
            }
        });
}

Tensor scal_loss_sem(const Tensor& logits, const LabelGrid& gt) {
    require_grid("scal_loss_sem", logits, gt);
    std::vector<std::int32_t> labels(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) labels[i] = gt.labels[i] == kIgnoreLabel ? -1 : gt.labels[i];
    return affinity_loss(class_probs(logits), labels);
}

Tensor scal_loss_geo(const Tensor& logits, const LabelGrid& gt) {
    require_grid("scal_loss_geo", logits, gt);
    const Tensor probs = class_probs(logits);
    const Tensor empty = slice(probs, 0, 0, 1);
    const Tensor occupied = sub(Tensor::full(empty.shape(), 1.0), empty);
    std::vector<std::int32_t> labels(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        labels[i] = gt.labels[i] == kIgnoreLabel ? -1 : (gt.labels[i] != 0 ? 1 : 0);
    }
    return affinity_loss(concat({empty, occupied}, 0), labels);
}

Tensor ce_loss(const Tensor& logits, const LabelGrid& gt, std::span<const double> class_weights) {
    require_grid("ce_loss", logits, gt);
    const auto labels = gt.as_int();
    return hard_cross_entropy(logits, labels, 0, kIgnoreLabel, class_weights);
}

std::vector<double> inverse_log_frequency_weights(const LabelGrid& gt, std::size_t num_classes) {
    std::vector<double> counts(num_classes, 0.0);
    double total = 0.0;
    for (std::uint8_t l : gt.labels) {
        if (l == kIgnoreLabel) continue;
        counts.at(l) += 1.0;
        total += 1.0;
    }
    std::vector<double> w(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) w[c] = 1.0 / std::log(1.02 + (total > 0 ? counts[c] / total : 0.0));
    return w;
}

std::int32_t nearest_bin(std::span<const double> bins, double depth) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < bins.size(); ++k) {
        if (std::abs(bins[k] - depth) < std::abs(bins[best] - depth)) best = k;
    }
    return static_cast<std::int32_t>(best);
}

Tensor depth_loss(const Tensor& depth_probs, std::span<const double> gt_depth, std::span<const double> bins,
                  bool soft_targets) {
    if (depth_probs.rank() != 3 || depth_probs.dim(0) != bins.size()) {
        throw ShapeError("depth_loss: D " + shape_str(depth_probs.shape()) + " does not match " +
                         std::to_string(bins.size()) + " bins");
    }
    const std::size_t hw = depth_probs.dim(1) * depth_probs.dim(2);
    if (gt_depth.size() != hw) throw ShapeError("depth_loss: depth map size does not match D");
    std::size_t valid = 0;
    for (double d : gt_depth) valid += d > 0.0;
    if (valid == 0) throw Error("depth_loss: no valid pixels");
    const Tensor log_d = safe_log(depth_probs);
    if (!soft_targets) {
        std::vector<std::int32_t> labels(hw);
        for (std::size_t p = 0; p < hw; ++p) labels[p] = gt_depth[p] > 0.0 ? nearest_bin(bins, gt_depth[p]) : -1;
        return hard_cross_entropy(log_d, labels, 0, -1);
    }
    const std::size_t nb = bins.size();
    std::vector<double> target(nb * hw, 0.0);
    for (std::size_t p = 0; p < hw; ++p) {
        const double d = gt_depth[p];
        if (!(d > 0.0)) continue;
        if (d <= bins.front()) {
            target[p] = 1.0;
        } else if (d >= bins.back()) {
            target[(nb - 1) * hw + p] = 1.0;
        } else {
            std::size_t k = 0;
            while (bins[k + 1] < d) ++k;
            const double f = (d - bins[k]) / (bins[k + 1] - bins[k]);
            target[k * hw + p] = 1.0 - f;
            target[(k + 1) * hw + p] = f;
        }
    }
    // Invalid pixels carry an all-zero target; rescale the mean to valid pixels.
    const Tensor t = Tensor::from_vector(depth_probs.shape(), std::move(target));
    return scale(soft_cross_entropy(log_d, t, 0), static_cast<double>(hw) / static_cast<double>(valid));
}

void LossWeights::validate() const {
    const double all[] = {lambda_ssc, lambda_kd, sem_scal, geo_scal, ce, depth, kd_feat, kd_logits};
    for (double v : all) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
    }
}

Tensor total_loss(const LossParts& parts, const LossWeights& w) {
    auto weighted = [](std::initializer_list<std::pair<const Tensor*, double>> terms) {
        Tensor acc;
        for (const auto& [t, weight] : terms) {
            if (!t->defined() || weight == 0.0) continue;
            const Tensor term = weight == 1.0 ? *t : scale(*t, weight);
            acc = acc.defined() ? add(acc, term) : term;
        }
        return acc;
    };
    const Tensor ssc = weighted({{&parts.sem_scal, w.sem_scal}, {&parts.geo_scal, w.geo_scal}, {&parts.ce, w.ce},
                                 {&parts.depth, w.depth}});
    const Tensor kd = weighted({{&parts.kd_feat, w.kd_feat}, {&parts.kd_logits, w.kd_logits}});
    const Tensor total = weighted({{&ssc, w.lambda_ssc}, {&kd, w.lambda_kd}});
    return total.defined() ? total : Tensor::scalar(0.0);
}

}  // namespace vlscene::losses
