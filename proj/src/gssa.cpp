#include "vlscene/gssa.hpp"

#include "vlscene/error.hpp"
#include "vlscene/ops.hpp"

namespace vlscene::gssa {

namespace {

Tensor sparse_weights(init::Rng& rng, std::size_t taps, std::size_t co, std::size_t ci, const std::string& name,
                      double gain) {
    return init::uniform(rng, {taps, co, ci}, name, init::he_bound(taps * ci, gain));
}

sparse::AsymmetricBlockParams init_block(init::Rng& rng, std::size_t c, const std::string& prefix) {
    return {sparse_weights(rng, 9, c, c, prefix + ".vertical_a", 1.0),
            sparse_weights(rng, 9, c, c, prefix + ".horizontal_a", 0.3),
            sparse_weights(rng, 9, c, c, prefix + ".horizontal_b", 1.0),
            sparse_weights(rng, 9, c, c, prefix + ".vertical_b", 0.3)};
}

std::size_t numel(const std::vector<Tensor>& ts) {
    std::size_t n = 0;
    for (const auto& t : ts) n += t.numel();
    return n;
}

}  // namespace

Params Params::init(init::Rng& rng, const Widths& w) {
    if (w.ssi[0] != w.channels) throw ConfigError("gssa: first SSI width must equal the voxel channel count");
    Params p;
    const std::size_t c = w.channels;
    for (std::size_t r = 0; r < w.ngp_repeats; ++r) {
        const std::string suffix = std::to_string(r);
        p.ngp.large.push_back(init::conv(rng, {c, c, 7, 7, 7}, "ngp.large" + suffix));
        p.ngp.small.push_back(init::conv(rng, {c, c, 3, 3, 3}, "ngp.small" + suffix, 0.3));
    }
    const auto [c0, c1, c2] = w.ssi;
    p.ssi.down1 = sparse_weights(rng, 8, c1, c0, "ssi.down1", 1.0);
    p.ssi.block1 = init_block(rng, c1, "ssi.block1");
    p.ssi.down2 = sparse_weights(rng, 8, c2, c1, "ssi.down2", 1.0);
    p.ssi.block2 = init_block(rng, c2, "ssi.block2");
    p.ssi.up2 = sparse_weights(rng, 27, c1, c2, "ssi.up2", 0.5);
    p.ssi.up1 = sparse_weights(rng, 27, c0, c1, "ssi.up1", 0.5);
    p.ssi.rank1 = {sparse_weights(rng, 3, c0, c0, "ssi.rank1_x", 0.5), sparse_weights(rng, 3, c0, c0, "ssi.rank1_y", 0.5),
                   sparse_weights(rng, 3, c0, c0, "ssi.rank1_z", 0.5)};
    p.head.weight = init::conv(rng, {w.classes, c, 1, 1, 1}, "head.weight", 0.5);
    p.head.bias = init::zeros({w.classes}, "head.bias");
    return p;
}

std::vector<Tensor> Params::tensors() const {
    std::vector<Tensor> out;
    for (std::size_t r = 0; r < ngp.large.size(); ++r) out.insert(out.end(), {ngp.large[r], ngp.small[r]});
    out.insert(out.end(), {ssi.down1, ssi.block1.vertical_a, ssi.block1.horizontal_a, ssi.block1.horizontal_b,
                           ssi.block1.vertical_b, ssi.down2, ssi.block2.vertical_a, ssi.block2.horizontal_a,
                           ssi.block2.horizontal_b, ssi.block2.vertical_b, ssi.up2, ssi.up1, ssi.rank1.along_x,
                           ssi.rank1.along_y, ssi.rank1.along_z, head.weight, head.bias});
    return out;
}

Tensor ngp(const Tensor& v, const NgpParams& p) {
    if (v.rank() != 4) throw ShapeError("ngp: input must be [C, X, Y, Z], got " + shape_str(v.shape()));
    Conv3dOptions large, small;
    large.padding = {3, 3, 3};
    small.padding = {1, 1, 1};
    Tensor x = v;
    for (std::size_t r = 0; r < p.large.size(); ++r) {
        if (p.large[r].dim(1) != x.dim(0)) {
            throw ShapeError("ngp: kernel expects " + std::to_string(p.large[r].dim(1)) + " channels, input has " +
                             std::to_string(x.dim(0)));
        }
        x = add(x, relu(conv3d(relu(conv3d(x, p.large[r], large)), p.small[r], small)));
    }
    return x;
}

Tensor ssi(const Tensor& v, const SsiParams& p, double threshold) {
    if (v.rank() != 4) throw ShapeError("ssi: input must be [C, X, Y, Z], got " + shape_str(v.shape()));
    for (int a = 0; a < 3; ++a) {
        if (v.dim(1 + a) % 4 != 0) {
            throw ShapeError("ssi: axis " + std::string(1, "xyz"[a]) + " extent " + std::to_string(v.dim(1 + a)) +
                             " is not divisible by 4");
        }
    }
    using namespace sparse;
    const SparseVoxelTensor s0 = sparsify(v, threshold);
    const SparseVoxelTensor s1 = asymmetric_residual_block(downsample_conv(s0, p.down1), p.block1);
    const SparseVoxelTensor s2 = asymmetric_residual_block(downsample_conv(s1, p.down2), p.block2);
    const auto box = box_offsets(3, 3, 3);
    const SparseVoxelTensor u1 = add(sparse_conv(unpool_nearest(s2, s1), {box, p.up2, ConvMode::submanifold}), s1);
    const SparseVoxelTensor u0 = add(sparse_conv(unpool_nearest(u1, s0), {box, p.up1, ConvMode::submanifold}), s0);
    return densify(rank1_aggregate(u0, p.rank1));
}

Tensor output_head(const Tensor& v, const HeadParams& p) {
    if (v.rank() != 4) throw ShapeError("output_head: input must be [C, X, Y, Z], got " + shape_str(v.shape()));
    // Projecting before the nearest upsampling is the same per-voxel map on
    // identical copies, at an eighth of the cost.
    return upsample_nearest(conv3d(v, p.weight, {}, p.bias), 2);
}

std::size_t param_count(const Widths& w) {
    init::Rng rng(0);
    return numel(Params::init(rng, w).tensors());
}

std::size_t resnet3d_param_count(std::size_t channels) {
    const std::size_t widths[3] = {channels, 2 * channels, 4 * channels};
    std::size_t n = 0;
    for (std::size_t c : widths) n += 2 * 2 * 27 * c * c;
    for (int level = 0; level < 2; ++level) n += 2 * 27 * widths[level] * widths[level + 1];
    return n;
}

}  // namespace vlscene::gssa
