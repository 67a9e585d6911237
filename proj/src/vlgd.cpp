#include "vlscene/vlgd.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "json.hpp"

#include "vlscene/binary_io.hpp"
#include "vlscene/error.hpp"
#include "vlscene/ops.hpp"
#include "vlscene/vlft.hpp"

namespace vlscene::vlgd {

namespace {

constexpr double kNormFloor = 1e-12;

void require_finite_values(const Tensor& t, const std::string& role) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) throw NonFiniteError("teacher bundle: non-finite value in " + role);
    }
}

void require_map(const char* op, const Tensor& t, const char* role) {
    if (t.rank() != 3) throw ShapeError(std::string(op) + ": " + role + " must be [C, H, W], got " + shape_str(t.shape()));
}

void require_same_extent(const char* op, const Tensor& a, const Tensor& b, const char* role) {
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError(std::string(op) + ": " + role + " height " + std::to_string(b.dim(1)) + " != " +
                         std::to_string(a.dim(1)));
    }
    if (a.dim(2) != b.dim(2)) {
        throw ShapeError(std::string(op) + ": " + role + " width " + std::to_string(b.dim(2)) + " != " +
                         std::to_string(a.dim(2)));
    }
}

Tensor mlp(const Tensor& x, const Mlp& m) {
    return conv2d(relu(conv2d(x, m.w1, 0, m.b1)), m.w2, 0, m.b2);
}

Mlp init_mlp(init::Rng& rng, std::size_t c, const std::string& prefix) {
    return {init::conv(rng, {c, c, 1, 1}, prefix + ".w1"), init::zeros({c}, prefix + ".b1"),
            init::conv(rng, {c, c, 1, 1}, prefix + ".w2", 0.5), init::zeros({c}, prefix + ".b2")};
}

std::vector<std::int32_t> target_argmax(const Tensor& logits) {
    const std::size_t q = logits.dim(0), hw = logits.dim(1) * logits.dim(2);
    std::vector<std::int32_t> labels(hw);
    for (std::size_t p = 0; p < hw; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < q; ++k) {
            if (logits.data()[k * hw + p] > logits.data()[best * hw + p]) best = k;
        }
        labels[p] = static_cast<std::int32_t>(best);
    }
    return labels;
}

void check_distribution(const Tensor& logits) {
    const std::size_t q = logits.dim(0), hw = logits.dim(1) * logits.dim(2);
    for (std::size_t p = 0; p < hw; ++p) {
        double s = 0.0;
        for (std::size_t k = 0; k < q; ++k) s += logits.data()[k * hw + p];
        if (std::abs(s - 1.0) > 1e-6) {
            throw Error("logits_distill_loss: target pixel " + std::to_string(p) + " sums to " + std::to_string(s));
        }
    }
}

}  // namespace

void TeacherBundle::validate() const {
    if (!vision.defined() || !text.defined()) throw FormatError("teacher bundle: missing tensor");
    require_map("teacher bundle", vision, "F_vision");
    if (text.rank() != 2) throw ShapeError("teacher bundle: F_text must be [Q, C_t], got " + shape_str(text.shape()));
    if (vision.dim(0) != text.dim(1)) {
        throw ShapeError("teacher bundle: F_vision has " + std::to_string(vision.dim(0)) + " channels, F_text rows " +
                         std::to_string(text.dim(1)));
    }
    if (!class_names.empty() && class_names.size() != text.dim(0)) {
        throw ShapeError("teacher bundle: " + std::to_string(class_names.size()) + " class names for " +
                         std::to_string(text.dim(0)) + " text rows");
    }
    require_finite_values(vision, "F_vision");
    require_finite_values(text, "F_text");
}

bool text_rows_degenerate(const Tensor& text) {
    const std::size_t q = text.dim(0), c = text.dim(1);
    const auto t = text.data();
    auto norm = [&](std::size_t r) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += t[r * c + k] * t[r * c + k];
        return std::max(std::sqrt(s), kNormFloor);
    };
    for (std::size_t a = 0; a < q; ++a) {
        for (std::size_t b = a + 1; b < q; ++b) {
            double d = 0.0;
            for (std::size_t k = 0; k < c; ++k) d += t[a * c + k] * t[b * c + k];
            if (d / (norm(a) * norm(b)) < 1.0 - 1e-9) return false;
        }
    }
    return q > 1;
}

void save_teacher(const TeacherBundle& bundle, const std::filesystem::path& manifest) {
    bundle.validate();
    const std::string stem = manifest.stem().string();
    const std::string vision_file = stem + ".vision.vlft";
    const std::string text_file = stem + ".text.vlft";
    const auto dir = manifest.parent_path();
    vlft::write(dir / vision_file, bundle.vision);
    vlft::write(dir / text_file, bundle.text);
    nlohmann::json j;
    j["format"] = "vlscene-teacher";
    j["version"] = 1;
    j["class_names"] = bundle.class_names;
    j["vision"] = vision_file;
    j["text"] = text_file;
    const std::string s = j.dump(2) + "\n";
    io::write_file(manifest, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

TeacherBundle load_teacher(const std::filesystem::path& manifest) {
    const auto bytes = io::read_file(manifest);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    if (j.value("format", "") != "vlscene-teacher") throw FormatError(manifest.string() + ": not a teacher manifest");
    if (j.value("version", 0) != 1) throw FormatError(manifest.string() + ": unsupported manifest version");
    TeacherBundle b;
    try {
        b.class_names = j.at("class_names").get<std::vector<std::string>>();
        const auto dir = manifest.parent_path();
        b.vision = vlft::read(dir / j.at("vision").get<std::string>());
        b.text = vlft::read(dir / j.at("text").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    b.validate();
    if (text_rows_degenerate(b.text)) {
        std::cerr << "warning: " << manifest.string() << ": text embeddings are cosine-degenerate\n";
    }
    return b;
}

Tensor compute_logits_map(const Tensor& vision, const Tensor& text) {
    require_map("compute_logits_map", vision, "F_vision");
    if (text.rank() != 2 || text.dim(1) != vision.dim(0)) {
        throw ShapeError("compute_logits_map: F_text " + shape_str(text.shape()) + " does not match " +
                         std::to_string(vision.dim(0)) + " vision channels");
    }
    const std::size_t c = vision.dim(0), q = text.dim(0), hw = vision.dim(1) * vision.dim(2);
    const auto v = vision.data();
    const auto t = text.data();
    std::vector<double> text_norm(q);
    for (std::size_t k = 0; k < q; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < c; ++i) s += t[k * c + i] * t[k * c + i];
        text_norm[k] = std::max(std::sqrt(s), kNormFloor);
    }
    std::vector<double> out(q * hw);
    std::vector<double> sim(q);
    for (std::size_t p = 0; p < hw; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < c; ++i) s += v[i * hw + p] * v[i * hw + p];
        const double vn = std::max(std::sqrt(s), kNormFloor);
        double top = -1e300;
        for (std::size_t k = 0; k < q; ++k) {
            double d = 0.0;
            for (std::size_t i = 0; i < c; ++i) d += v[i * hw + p] * t[k * c + i];
            sim[k] = d / (vn * text_norm[k]);
            top = std::max(top, sim[k]);
        }
        double z = 0.0;
        for (std::size_t k = 0; k < q; ++k) {
            sim[k] = std::exp(sim[k] - top);
            z += sim[k];
        }
        for (std::size_t k = 0; k < q; ++k) out[k * hw + p] = sim[k] / z;
    }
    return Tensor::from_vector({q, vision.dim(1), vision.dim(2)}, std::move(out));
}

Tensor resize_bilinear(const Tensor& map, std::size_t height, std::size_t width) {
    require_map("resize_bilinear", map, "input");
    const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
    if (h == height && w == width) return map.detach();
    auto source = [](std::size_t o, std::size_t in, std::size_t out, std::size_t& i0, std::size_t& i1, double& f) {
        double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        i0 = static_cast<std::size_t>(s);
        i1 = std::min(i0 + 1, in - 1);
        f = s - static_cast<double>(i0);
    };
    std::vector<double> out(c * height * width);
    const auto d = map.data();
    for (std::size_t y = 0; y < height; ++y) {
        std::size_t y0, y1;
        double fy;
        source(y, h, height, y0, y1, fy);
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t x0, x1;
            double fx;
            source(x, w, width, x0, x1, fx);
            for (std::size_t k = 0; k < c; ++k) {
                const double* m = d.data() + k * h * w;
                const double top = m[y0 * w + x0] * (1 - fx) + m[y0 * w + x1] * fx;
                const double bottom = m[y1 * w + x0] * (1 - fx) + m[y1 * w + x1] * fx;
                out[(k * height + y) * width + x] = top * (1 - fy) + bottom * fy;
            }
        }
    }
    return Tensor::from_vector({c, height, width}, std::move(out));
}

Params Params::init(init::Rng& rng, std::size_t c, std::size_t c_t, std::size_t q) {
    Params p;
    p.fuse_w1 = init::conv(rng, {c, c + c_t + q, 3, 3}, "vlgd.fuse.w1");
    p.fuse_b1 = init::zeros({c}, "vlgd.fuse.b1");
    p.fuse_w2 = init::conv(rng, {c, c, 3, 3}, "vlgd.fuse.w2", 0.5);
    p.fuse_b2 = init::zeros({c}, "vlgd.fuse.b2");
    p.vision_mlp = init_mlp(rng, c, "vlgd.mlp_vision");
    p.sem_mlp = init_mlp(rng, c, "vlgd.mlp_sem");
    for (int b = 0; b < 2; ++b) {
        const std::string prefix = "vlgd.head.block" + std::to_string(b);
        p.head_blocks[b] = {init::conv(rng, {c, c, 3, 3}, prefix + ".w1"), init::zeros({c}, prefix + ".b1"),
                            init::conv(rng, {c, c, 3, 3}, prefix + ".w2", 0.25), init::zeros({c}, prefix + ".b2")};
    }
    p.head_w = init::conv(rng, {q, c, 1, 1}, "vlgd.head.w", 0.5);
    p.head_b = init::zeros({q}, "vlgd.head.b");
    return p;
}

Params Params::zeros(std::size_t c, std::size_t c_t, std::size_t q) {
    init::Rng rng(0);
    Params p = init(rng, c, c_t, q);
    for (Tensor t : p.tensors()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    return p;
}

std::vector<Tensor> Params::tensors() const {
    std::vector<Tensor> out{fuse_w1, fuse_b1, fuse_w2, fuse_b2};
    for (const Mlp* m : {&vision_mlp, &sem_mlp}) out.insert(out.end(), {m->w1, m->b1, m->w2, m->b2});
    for (const auto& b : head_blocks) out.insert(out.end(), {b.w1, b.b1, b.w2, b.b2});
    out.insert(out.end(), {head_w, head_b});
    return out;
}

Tensor fuse_features(const Tensor& sem, const Tensor& vision, const Tensor& logits, const Params& p) {
    require_map("fuse_features", sem, "F_sem");
    require_map("fuse_features", vision, "F_vision");
    require_map("fuse_features", logits, "F_logits");
    require_same_extent("fuse_features", sem, vision, "F_vision");
    require_same_extent("fuse_features", sem, logits, "F_logits");
    const Tensor stacked = concat({sem, vision, logits}, 0);
    const Tensor vision_hat = conv2d(relu(conv2d(stacked, p.fuse_w1, 1, p.fuse_b1)), p.fuse_w2, 1, p.fuse_b2);
    const Tensor mv = mlp(vision_hat, p.vision_mlp);
    const Tensor ms = mlp(sem, p.sem_mlp);
    const Tensor wv = sigmoid(global_avg_pool(mv));
    const Tensor ws = sigmoid(global_avg_pool(ms));
    return add(mul_channels(mv, wv), mul_channels(ms, ws));
}

Tensor feature_distill_loss(const Tensor& sem, const Tensor& fuse, bool detach_target) {
    return l1_mean(sem, detach_target ? fuse.detach() : fuse);
}

Tensor semantic_head(const Tensor& sem, const Params& p) {
    Tensor x = sem;
    for (const auto& b : p.head_blocks) x = add(x, conv2d(relu(conv2d(x, b.w1, 1, b.b1)), b.w2, 1, b.b2));
    return conv2d(x, p.head_w, 0, p.head_b);
}

Tensor logits_distill_loss(const Tensor& pred, const Tensor& logits) {
    require_map("logits_distill_loss", pred, "F_pred");
    if (pred.shape() != logits.shape()) {
        throw ShapeError("logits_distill_loss: F_logits " + shape_str(logits.shape()) + " vs F_pred " +
                         shape_str(pred.shape()));
    }
    check_distribution(logits);
    return soft_cross_entropy(pred, logits, 0);
}

Tensor logits_distill_loss_hard(const Tensor& pred, const Tensor& logits) {
    if (pred.shape() != logits.shape()) throw ShapeError("logits_distill_loss_hard: shape mismatch");
    const auto labels = target_argmax(logits);
    return hard_cross_entropy(pred, labels, 0, -1);
}

}  // namespace vlscene::vlgd
