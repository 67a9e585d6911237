#include "vlscene/gradcheck_targets.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "vlscene/error.hpp"
#include "vlscene/gssa.hpp"
#include "vlscene/losses.hpp"
#include "vlscene/model.hpp"
#include "vlscene/ops.hpp"
#include "vlscene/view_transform.hpp"
#include "vlscene/vlgd.hpp"

namespace vlscene::gradcheck_targets {

namespace {

using Rng = std::mt19937_64;

std::vector<double> uniform(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

Tensor constant(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    auto v = uniform(rng, shape_numel(s), lo, hi);
    return Tensor::from_vector(std::move(s), std::move(v));
}

Tensor param(Rng& rng, Shape s, std::string name, double lo = -1.0, double hi = 1.0) {
    auto v = uniform(rng, shape_numel(s), lo, hi);
    return Tensor::parameter(std::move(s), std::move(v), std::move(name));
}

void randomize(const std::vector<Tensor>& ts, Rng& rng, double bound = 0.5) {
    std::uniform_real_distribution<double> d(-bound, bound);
    for (Tensor t : ts)
        for (double& v : t.mutable_data()) v = d(rng);
}

/// sum(out * r) with a fixed random r.
Tensor project(const Tensor& out, std::uint64_t seed) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    return sum(mul(out, constant(rng, out.shape())));
}

LabelGrid random_labels(Rng& rng, std::array<std::size_t, 3> e, std::size_t classes) {
    LabelGrid g(e);
    std::uniform_int_distribution<int> c(0, static_cast<int>(classes) - 1);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& l : g.labels) l = u(rng) < 0.15 ? kIgnoreLabel : static_cast<std::uint8_t>(c(rng));
    return g;
}

/// A forward-looking camera over a grid that encloses its frustum.
struct Geometry {
    view::CameraModel cam;
    view::VoxelGridSpec grid;
};

Geometry small_geometry(Rng& rng, std::size_t h, std::size_t w, std::size_t bins) {
    Geometry g;
    std::uniform_real_distribution<double> pitch(-0.3, 0.3), focal(2.0, 5.0);
    g.cam.fx = focal(rng);
    g.cam.fy = focal(rng);
    g.cam.cx = static_cast<double>(w) / 2;
    g.cam.cy = static_cast<double>(h) / 2;
    g.cam.height = h;
    g.cam.width = w;
    g.cam.pose = view::forward_looking_pose({0, 0, 0}, pitch(rng));
    g.cam.depth_bins = view::uniform_depth_bins(bins, 1.0, 4.0);
    view::Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
    for (double d : g.cam.depth_bins)
        for (std::size_t v = 0; v < h; ++v)
            for (std::size_t u = 0; u < w; ++u) {
                const auto p = g.cam.back_project(static_cast<double>(u), static_cast<double>(v), d);
                for (int a = 0; a < 3; ++a) {
                    lo[a] = std::min(lo[a], p[a]);
                    hi[a] = std::max(hi[a], p[a]);
                }
            }
    g.grid.voxel_size = 0.9;
    for (int a = 0; a < 3; ++a) {
        g.grid.origin[a] = lo[a] - 0.45;
        g.grid.extents[a] = static_cast<std::size_t>(std::ceil((hi[a] - g.grid.origin[a]) / 0.9)) + 1;
    }
    return g;
}

GradcheckReport check(const std::function<Tensor()>& loss, std::vector<Tensor> leaves, std::size_t max_entries = 0) {
    return gradcheck(loss, std::move(leaves), {}, max_entries);
}

GradcheckReport conv3d_target(std::uint64_t seed) {
    Rng rng(seed + 100);
    Tensor x = param(rng, {2, 4, 4, 3}, "input"), k = param(rng, {3, 2, 3, 3, 3}, "kernel"), b = param(rng, {3}, "bias");
    Conv3dOptions o;
    o.stride = {1 + seed % 2, 1, 1};
    o.padding = {1, 1, seed % 2};
    return check([&] { return project(conv3d(x, k, o, b), seed); }, {x, k, b});
}

GradcheckReport conv2d_target(std::uint64_t seed) {
    Rng rng(seed + 150);
    Tensor x = param(rng, {3, 5, 4}, "input"), k = param(rng, {2, 3, 3, 3}, "kernel"), b = param(rng, {2}, "bias");
    return check([&] { return project(conv2d(x, k, 1, b), seed); }, {x, k, b});
}

GradcheckReport matmul_target(std::uint64_t seed) {
    Rng rng(seed + 200);
    Tensor a = param(rng, {3, 5}, "lhs"), b = param(rng, {5, 4}, "rhs");
    return check([&] { return project(matmul(a, b), seed); }, {a, b});
}

GradcheckReport softmax_target(std::uint64_t seed) {
    Rng rng(seed + 300);
    Tensor a = param(rng, {4, 3, 5}, "logits", -3, 3);
    return check([&] { return project(softmax(a, seed % 3), seed); }, {a});
}

struct VlgdSetup {
    vlgd::Params p;
    Tensor sem, vision, logits;
};

VlgdSetup vlgd_setup(std::uint64_t seed) {
    Rng rng(seed + 500);
    init::Rng r(seed);
    VlgdSetup s{vlgd::Params::init(r, 4, 3, 2), {}, {}, {}};
    randomize(s.p.tensors(), rng);
    s.sem = param(rng, {4, 3, 3}, "sem");
    s.vision = constant(rng, {3, 3, 3});
    s.logits = vlgd::compute_logits_map(s.vision, constant(rng, {2, 3}));
    return s;
}

GradcheckReport fusion_target(std::uint64_t seed) {
    const VlgdSetup s = vlgd_setup(seed);
    std::vector<Tensor> leaves{s.p.fuse_w1, s.p.fuse_b1, s.p.fuse_w2, s.p.fuse_b2, s.p.vision_mlp.w1, s.p.vision_mlp.b1,
                               s.p.vision_mlp.w2, s.p.vision_mlp.b2, s.p.sem_mlp.w1, s.p.sem_mlp.b1, s.p.sem_mlp.w2,
                               s.p.sem_mlp.b2, s.sem};
    return check([&] { return project(vlgd::fuse_features(s.sem, s.vision, s.logits, s.p), seed); }, leaves);
}

GradcheckReport kd_feat_target(std::uint64_t seed) {
    const VlgdSetup s = vlgd_setup(seed);
    std::vector<Tensor> leaves{s.p.fuse_w1, s.p.fuse_w2, s.p.vision_mlp.w1, s.p.sem_mlp.w2, s.sem};
    return check([&] { return vlgd::feature_distill_loss(s.sem, vlgd::fuse_features(s.sem, s.vision, s.logits, s.p), false); },
                 leaves);
}

GradcheckReport kd_logits_target(std::uint64_t seed) {
    const VlgdSetup s = vlgd_setup(seed);
    std::vector<Tensor> leaves;
    for (const auto& b : s.p.head_blocks) leaves.insert(leaves.end(), {b.w1, b.b1, b.w2, b.b2});
    leaves.insert(leaves.end(), {s.p.head_w, s.p.head_b, s.sem});
    return check([&] { return vlgd::logits_distill_loss(vlgd::semantic_head(s.sem, s.p), s.logits); }, leaves);
}

GradcheckReport lift_splat_target(std::uint64_t seed) {
    Rng rng(seed + 900);
    init::Rng r(seed);
    const auto ctx = view::ContextHeadParams::init(r, 2, 3);
    const auto dep = view::DepthHeadParams::init(r, 2, 3, 4);
    Tensor image = param(rng, {2, 4, 4}, "image");
    const Geometry g = small_geometry(rng, 4, 4, 4);
    const auto table = view::SplatTable::build(g.cam, g.grid);
    auto loss = [&] {
        return project(view::lift_splat(view::context_head(image, ctx), view::depth_head(image, dep), table, g.grid.extents),
                       seed);
    };
    std::vector<Tensor> leaves = ctx.tensors();
    for (const Tensor& t : dep.tensors()) leaves.push_back(t);
    leaves.push_back(image);
    return check(loss, leaves);
}

gssa::Params small_gssa(std::uint64_t seed, const gssa::Widths& w) {
    init::Rng r(seed);
    gssa::Params p = gssa::Params::init(r, w);
    // Positive NGP kernels on positive inputs keep every NGP relu off its kink,
    // where one-sided differences would disagree with any subgradient.
    for (std::size_t i = 0; i < p.ngp.large.size(); ++i)
        for (Tensor t : {p.ngp.large[i], p.ngp.small[i]})
            for (double& x : t.mutable_data()) x = std::abs(x);
    return p;
}

GradcheckReport ngp_target(std::uint64_t seed) {
    Rng rng(seed + 1100);
    const gssa::Widths w{2, {2, 2, 3}, 3, 1 + seed % 2};
    const gssa::Params p = small_gssa(seed + 20, w);
    Tensor v = Tensor::parameter({2, 5, 4, 4}, uniform(rng, 160, 0.2, 1.0), "V");
    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < p.ngp.large.size(); ++i) leaves.insert(leaves.end(), {p.ngp.large[i], p.ngp.small[i]});
    leaves.push_back(v);
    return check([&] { return project(gssa::ngp(v, p.ngp), seed); }, leaves);
}

GradcheckReport ssi_target(std::uint64_t seed) {
    Rng rng(seed + 1200);
    const gssa::Widths w{2, {2, 3, 3}, 3, 1};
    const gssa::Params p = small_gssa(seed + 30, w);
    // Entries either clearly active or exactly zero, so the active set is stable under perturbation.
    std::vector<double> vals = uniform(rng, 2 * 4 * 4 * 4, 0.2, 1.0);
    std::uniform_real_distribution<double> keep(0, 1);
    for (std::size_t i = 0; i < 64; ++i)
        if (keep(rng) < 0.4) vals[i] = vals[64 + i] = 0.0;
    Tensor v = Tensor::parameter({2, 4, 4, 4}, vals, "V");
    const auto& s = p.ssi;
    std::vector<Tensor> leaves{s.down1, s.block1.vertical_a, s.block1.horizontal_a, s.block1.horizontal_b,
                               s.block1.vertical_b, s.down2, s.block2.vertical_a, s.block2.horizontal_a,
                               s.block2.horizontal_b, s.block2.vertical_b, s.up2, s.up1, s.rank1.along_x,
                               s.rank1.along_y, s.rank1.along_z};
    return check([&] { return project(gssa::ssi(v, s, 1e-3), seed); }, leaves);
}

GradcheckReport output_head_target(std::uint64_t seed) {
    Rng rng(seed + 1400);
    const gssa::Widths w{3, {3, 4, 4}, 4, 1};
    init::Rng r(seed);
    const gssa::Params p = gssa::Params::init(r, w);
    Tensor v = param(rng, {3, 4, 4, 2}, "V_fine");
    return check([&] { return project(gssa::output_head(v, p.head), seed); }, {v, p.head.weight, p.head.bias});
}

GradcheckReport voxel_loss_target(std::uint64_t seed, int which) {
    Rng rng(seed + 1500 + static_cast<std::uint64_t>(which) * 37);
    Tensor logits = param(rng, {4, 3, 4, 2}, "Y_logits", -2, 2);
    LabelGrid gt = random_labels(rng, {3, 4, 2}, 4);
    gt.labels[0] = 0;
    gt.labels[1] = 2;
    const std::vector<double> weights{0.5, 1.0, 1.5, 2.0};
    auto loss = [&] {
        switch (which) {
            case 0: return losses::scal_loss_sem(logits, gt);
            case 1: return losses::scal_loss_geo(logits, gt);
            default: return losses::ce_loss(logits, gt, seed % 2 ? std::span<const double>(weights) : std::span<const double>{});
        }
    };
    return check(loss, {logits});
}

GradcheckReport depth_target(std::uint64_t seed) {
    Rng rng(seed + 1600);
    Tensor raw = param(rng, {5, 3, 4}, "depth_logits", -2, 2);
    const std::vector<double> bins = view::uniform_depth_bins(5, 1.0, 6.0);
    std::vector<double> gt = uniform(rng, 12, 0.5, 6.5);
    gt[3] = 0.0;
    const bool soft = seed % 2;
    return check([&] { return losses::depth_loss(softmax(raw, 0), gt, bins, soft); }, {raw});
}

/// A tiny end-to-end configuration: 8x8 image, 8^3 label grid, every module on.
ExperimentConfig tiny_config() {
    ExperimentConfig c;
    auto& s = c.scene.spec;
    s.grid = {{1.0, -1.0, -1.0}, 0.25, {8, 8, 8}};
    s.camera_position = {0.0, 0.0, 0.2};
    s.camera_pitch = 0.2;
    s.focal = 4.0;
    s.image_height = s.image_width = 8;
    s.teacher_channels = 4;
    s.teacher_height = s.teacher_width = 4;
    s.objects = {{scene::kBox, {2, 2, 2}, {2, 2, 3}}, {scene::kPole, {5, 4, 2}, {1, 1, 6}}};
    c.model.channels = 2;
    c.model.ssi_widths = {2, 2, 3};
    c.model.depth_hidden = 3;
    c.model.depth_bins = 4;
    c.model.depth_near = 1.0;
    c.model.depth_far = 3.0;
    c.run.precision = Precision::f64;
    return c;
}

GradcheckReport pipeline_target(std::uint64_t seed) {
    const ExperimentConfig cfg = tiny_config();
    const scene::SceneSample sample = scene::generate_scene(cfg.scene.spec, seed);
    const model::Params p = model::Params::init(cfg, seed + 70);
    // Zero-initialised biases put relus in the fusion branch exactly on their kink.
    Rng rng(seed + 1700);
    randomize(p.vlgd.tensors(), rng);
    for (std::size_t i = 0; i < p.gssa.ngp.large.size(); ++i)
        for (Tensor t : {p.gssa.ngp.large[i], p.gssa.ngp.small[i]})
            for (double& x : t.mutable_data()) x = std::abs(x);
    // Nonnegative context features keep the NGP input positive wherever it is nonzero.
    Tensor b2 = p.context.b2;
    for (double& x : b2.mutable_data()) x = 2.0;
    const model::Prepared prep = model::prepare(cfg, sample);
    auto loss = [&] { return model::forward(p, cfg, sample, prep).total; };
    return check(loss, p.trainable(cfg), 24);
}

const std::map<std::string, std::function<GradcheckReport(std::uint64_t)>>& registry() {
    static const std::map<std::string, std::function<GradcheckReport(std::uint64_t)>> r{
        {"conv3d", conv3d_target},
        {"conv2d", conv2d_target},
        {"matmul", matmul_target},
        {"softmax", softmax_target},
        {"fusion", fusion_target},
        {"kd_feat", kd_feat_target},
        {"kd_logits", kd_logits_target},
        {"lift_splat", lift_splat_target},
        {"ngp", ngp_target},
        {"ssi", ssi_target},
        {"output_head", output_head_target},
        {"sem_scal", [](std::uint64_t s) { return voxel_loss_target(s, 0); }},
        {"geo_scal", [](std::uint64_t s) { return voxel_loss_target(s, 1); }},
        {"ce", [](std::uint64_t s) { return voxel_loss_target(s, 2); }},
        {"depth", depth_target},
        {"pipeline", pipeline_target},
    };
    return r;
}

}  // namespace

const std::vector<std::string>& names() {
    static const std::vector<std::string> n = [] {
        std::vector<std::string> out;
        for (const auto& [k, v] : registry()) out.push_back(k);
        return out;
    }();
    return n;
}

GradcheckReport run(const std::string& target, std::uint64_t seed) {
    const auto it = registry().find(target);
    if (it == registry().end()) {
        std::string known;
        for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown gradcheck target '" + target + "' (valid: " + known + ")");
    }
    const PrecisionScope precision(Precision::f64);
    return it->second(seed);
}

}  // namespace vlscene::gradcheck_targets
