#include "vlscene/model.hpp"

#include "vlscene/error.hpp"
#include "vlscene/ops.hpp"

namespace vlscene::model {

namespace {

std::vector<Tensor> ssi_tensors(const gssa::SsiParams& s) {
    return {s.down1, s.block1.vertical_a, s.block1.horizontal_a, s.block1.horizontal_b, s.block1.vertical_b,
            s.down2, s.block2.vertical_a, s.block2.horizontal_a, s.block2.horizontal_b, s.block2.vertical_b,
            s.up2,   s.up1,               s.rank1.along_x,       s.rank1.along_y,       s.rank1.along_z};
}

void append(std::vector<Tensor>& out, const std::vector<Tensor>& more) { out.insert(out.end(), more.begin(), more.end()); }

}  // namespace

Params Params::init(const ExperimentConfig& cfg, std::uint64_t seed) {
    init::Rng rng(seed);
    const std::size_t c = cfg.model.channels;
    const std::size_t q = cfg.scene.spec.num_classes();
    Params p;
    p.context = view::ContextHeadParams::init(rng, kImageChannels, c);
    p.depth = view::DepthHeadParams::init(rng, kImageChannels, cfg.model.depth_hidden, cfg.model.depth_bins);
    p.vlgd = vlgd::Params::init(rng, c, cfg.scene.spec.teacher_channels, q);
    p.gssa = gssa::Params::init(rng, cfg.widths());
    return p;
}

std::vector<Tensor> Params::tensors() const {
    std::vector<Tensor> out = context.tensors();
    append(out, depth.tensors());
    append(out, vlgd.tensors());
    append(out, gssa.tensors());
    return out;
}

std::vector<Tensor> Params::trainable(const ExperimentConfig& cfg) const {
    std::vector<Tensor> out = context.tensors();
    append(out, depth.tensors());
    if (cfg.model.enable_vlgd) {
        const auto& w = cfg.loss.weights;
        // The fusion branch only sees a gradient through an undetached feature term.
        if (w.kd_feat != 0.0 && !cfg.loss.detach_fusion_target) {
            append(out, {vlgd.fuse_w1, vlgd.fuse_b1, vlgd.fuse_w2, vlgd.fuse_b2, vlgd.vision_mlp.w1, vlgd.vision_mlp.b1,
                         vlgd.vision_mlp.w2, vlgd.vision_mlp.b2, vlgd.sem_mlp.w1, vlgd.sem_mlp.b1, vlgd.sem_mlp.w2,
                         vlgd.sem_mlp.b2});
        }
        if (w.kd_logits != 0.0) {
            for (const auto& b : vlgd.head_blocks) append(out, {b.w1, b.b1, b.w2, b.b2});
            append(out, {vlgd.head_w, vlgd.head_b});
        }
    }
    if (cfg.model.enable_ngp) {
        for (std::size_t r = 0; r < gssa.ngp.large.size(); ++r) append(out, {gssa.ngp.large[r], gssa.ngp.small[r]});
    }
    if (cfg.model.enable_ssi) append(out, ssi_tensors(gssa.ssi));
    append(out, {gssa.head.weight, gssa.head.bias});
    return out;
}

Prepared prepare(const ExperimentConfig& cfg, const scene::SceneSample& sample) {
    Prepared p;
    view::CameraModel cam = sample.camera;
    cam.depth_bins = view::uniform_depth_bins(cfg.model.depth_bins, cfg.model.depth_near, cfg.model.depth_far);
    p.table = view::SplatTable::build(cam, cfg.feature_grid());
    p.bins = cam.depth_bins;
    const std::size_t h = sample.image.dim(1), w = sample.image.dim(2);
    const Tensor logits = vlgd::compute_logits_map(sample.teacher.vision, sample.teacher.text);
    p.teacher_vision = vlgd::resize_bilinear(sample.teacher.vision, h, w);
    p.teacher_logits = vlgd::resize_bilinear(logits, h, w);
    p.depth.assign(sample.gt_depth.data().begin(), sample.gt_depth.data().end());
    if (cfg.loss.class_weights) {
        p.class_weights = losses::inverse_log_frequency_weights(sample.labels, cfg.scene.spec.num_classes());
    }
    return p;
}

Output forward(const Params& p, const ExperimentConfig& cfg, const scene::SceneSample& sample, const Prepared& prep,
               bool with_loss) {
    if (sample.image.rank() != 3 || sample.image.dim(0) != kImageChannels) {
        throw ShapeError("forward: F_image must be [" + std::to_string(kImageChannels) + ", H, W], got " +
                         shape_str(sample.image.shape()));
    }
    Output out;
    const Tensor sem = view::context_head(sample.image, p.context);
    out.depth = view::depth_head(sample.image, p.depth);

    const auto& w = cfg.loss.weights;
    if (with_loss && cfg.model.enable_vlgd) {
        if (w.kd_feat != 0.0) {
            const Tensor fused = vlgd::fuse_features(sem, prep.teacher_vision, prep.teacher_logits, p.vlgd);
            out.parts.kd_feat = vlgd::feature_distill_loss(sem, fused, cfg.loss.detach_fusion_target);
        }
        if (w.kd_logits != 0.0) {
            const Tensor pred = vlgd::semantic_head(sem, p.vlgd);
            out.parts.kd_logits = cfg.loss.kd_logits_hard ? vlgd::logits_distill_loss_hard(pred, prep.teacher_logits)
                                                          : vlgd::logits_distill_loss(pred, prep.teacher_logits);
        }
    }

    Tensor v = view::lift_splat(sem, out.depth, prep.table, cfg.feature_grid().extents);
    if (cfg.model.enable_ngp) v = gssa::ngp(v, p.gssa.ngp);
    if (cfg.model.enable_ssi) v = gssa::ssi(v, p.gssa.ssi, cfg.model.sparsity_threshold);
    out.logits = gssa::output_head(v, p.gssa.head);
    if (out.logits.dim(1) != sample.labels.extents[0] || out.logits.dim(2) != sample.labels.extents[1] ||
        out.logits.dim(3) != sample.labels.extents[2]) {
        throw ShapeError("forward: prediction " + shape_str(out.logits.shape()) + " does not match the label grid");
    }
    if (!with_loss) return out;

    out.parts.sem_scal = losses::scal_loss_sem(out.logits, sample.labels);
    out.parts.geo_scal = losses::scal_loss_geo(out.logits, sample.labels);
    out.parts.ce = losses::ce_loss(out.logits, sample.labels, prep.class_weights);
    out.parts.depth = losses::depth_loss(out.depth, prep.depth, prep.bins, cfg.loss.depth_soft);
    out.total = losses::total_loss(out.parts, w);
    return out;
}

LabelGrid predict(const Tensor& logits) {
    if (logits.rank() != 4) throw ShapeError("predict: logits must be [K, X, Y, Z], got " + shape_str(logits.shape()));
    const std::size_t k = logits.dim(0);
    LabelGrid g({logits.dim(1), logits.dim(2), logits.dim(3)});
    const std::size_t n = g.size();
    const auto d = logits.data();
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (d[c * n + i] > d[best * n + i]) best = c;
        g.labels[i] = static_cast<std::uint8_t>(best);
    }
    return g;
}

}  // namespace vlscene::model
