#include <random>

#include "dense_oracle.hpp"
#include "doctest.h"
#include "test_util.hpp"
#include "vlscene/error.hpp"
#include "vlscene/gradcheck.hpp"
#include "vlscene/sparse.hpp"

using namespace vlscene;
using namespace vlscene::testing;
using sparse::Coord;
using sparse::SparseVoxelTensor;

namespace {

Tensor random_weights(std::mt19937_64& rng, std::size_t k, std::size_t co, std::size_t ci, double scale = 0.5) {
    return random_tensor(rng, {k, co, ci}, -scale, scale);
}

sparse::AsymmetricBlockParams random_block(std::mt19937_64& rng, std::size_t c) {
    return {random_weights(rng, 9, c, c), random_weights(rng, 9, c, c), random_weights(rng, 9, c, c),
            random_weights(rng, 9, c, c)};
}

sparse::Rank1Params random_rank1(std::mt19937_64& rng, std::size_t c) {
    return {random_weights(rng, 3, c, c), random_weights(rng, 3, c, c), random_weights(rng, 3, c, c)};
}

void check_canonical(const SparseVoxelTensor& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(sparse::inside(s.coords()[i], s.dims()));
        if (i > 0) CHECK(s.coords()[i - 1] < s.coords()[i]);
    }
    CHECK(s.feats().dim(0) == s.size());
}

}  // namespace

TEST_CASE("sparsify") {
    CHECK(sparse::sparsify(Tensor::zeros({2, 3, 3, 3}), 0.0).size() == 0);

    std::vector<double> v(2 * 4 * 4 * 2, 0.0);
    const std::size_t p = (1 * 4 + 2) * 2 + 0;
    v[p] = 0.5;
    v[32 + p] = -0.3;
    const SparseVoxelTensor s = sparse::sparsify(Tensor::from_vector({2, 4, 4, 2}, v), 0.0);
    REQUIRE(s.size() == 1);
    CHECK(s.coords()[0] == Coord{1, 2, 0});
    CHECK(s.feats().at({0, 0}) == 0.5);
    CHECK(s.feats().at({0, 1}) == -0.3);
    // Threshold compares against the max |channel|.
    CHECK(sparse::sparsify(Tensor::from_vector({2, 4, 4, 2}, v), 0.5).size() == 0);
    CHECK_THROWS_AS(sparse::sparsify(Tensor::zeros({1, 2, 2, 2}), -1.0), ShapeError);
}

TEST_CASE("densify(sparsify(x)) == x on random grids") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = random_sparse_grid(rng, 3, 4, 4, 4, 0.3);
        const SparseVoxelTensor s = sparse::sparsify(x, 0.0);
        check_canonical(s);
        CHECK(bitwise_equal(sparse::densify(s).data(), x.data()));
    }
    CHECK(sparse::densify(sparse::sparsify(Tensor::zeros({2, 2, 3, 4}), 0.0)).shape() == Shape{2, 2, 3, 4});
}

TEST_CASE("sparse tensors reject non-canonical coordinates") {
    CHECK_THROWS_AS(SparseVoxelTensor({4, 4, 4}, {{1, 0, 0}, {0, 0, 0}}, Tensor::zeros({2, 1})), ShapeError);
    CHECK_THROWS_AS(SparseVoxelTensor({4, 4, 4}, {{1, 0, 0}, {1, 0, 0}}, Tensor::zeros({2, 1})), ShapeError);
    CHECK_THROWS_AS(SparseVoxelTensor({4, 4, 4}, {{4, 0, 0}}, Tensor::zeros({1, 1})), ShapeError);
    CHECK_THROWS_AS(SparseVoxelTensor({4, 4, 4}, {{0, 0, 0}}, Tensor::zeros({2, 1})), ShapeError);
}

TEST_CASE("sparse_conv basics") {
    const SparseVoxelTensor single({3, 3, 3}, {{1, 1, 1}}, Tensor::from_vector({1, 2}, {0.7, -1.2}));
    const sparse::SparseKernel identity{{{0, 0, 0}}, Tensor::from_vector({1, 2, 2}, {1, 0, 0, 1}),
                                        sparse::ConvMode::submanifold};
    const SparseVoxelTensor out = sparse::sparse_conv(single, identity);
    CHECK(out.coords() == single.coords());
    CHECK(bitwise_equal(out.feats().data(), single.feats().data()));

    const SparseVoxelTensor empty = sparse::sparsify(Tensor::zeros({2, 3, 3, 3}), 0.0);
    std::mt19937_64 rng(2);
    for (auto mode : {sparse::ConvMode::submanifold, sparse::ConvMode::generative}) {
        const sparse::SparseKernel k{sparse::box_offsets(3, 3, 3), random_weights(rng, 27, 4, 2), mode};
        const SparseVoxelTensor o = sparse::sparse_conv(empty, k);
        CHECK(o.size() == 0);
        CHECK(o.channels() == 4);
    }

    const sparse::SparseKernel wrong{{{0, 0, 0}}, Tensor::zeros({1, 2, 3}), sparse::ConvMode::submanifold};
    CHECK_THROWS_AS(sparse::sparse_conv(single, wrong), ShapeError);
    const sparse::SparseKernel dup{{{0, 0, 0}, {0, 0, 0}}, Tensor::zeros({2, 2, 2}), sparse::ConvMode::submanifold};
    CHECK_THROWS_AS(sparse::sparse_conv(single, dup), ShapeError);
}

TEST_CASE("submanifold sparse_conv equals the masked dense conv") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = random_sparse_grid(rng, 2, 6, 6, 6, 0.3);
        const SparseVoxelTensor s = sparse::sparsify(x, 0.0);
        const Tensor w = random_weights(rng, 27, 3, 2);
        const SparseVoxelTensor out =
            sparse::sparse_conv(s, {sparse::box_offsets(3, 3, 3), w, sparse::ConvMode::submanifold});
        CHECK(out.coords() == s.coords());
        const Tensor ref = dense_submanifold(x, active_mask(s), {3, 3, 3}, w);
        CHECK(max_abs_diff(sparse::densify(out).data(), ref.data()) <= 1e-10);
    }
}

TEST_CASE("generative sparse_conv dilates the active set") {
    std::mt19937_64 rng(4);
    const Tensor x = random_sparse_grid(rng, 2, 5, 6, 4, 0.15);
    const SparseVoxelTensor s = sparse::sparsify(x, 0.0);
    const Tensor w = random_weights(rng, 27, 2, 2);
    const SparseVoxelTensor out = sparse::sparse_conv(s, {sparse::box_offsets(3, 3, 3), w, sparse::ConvMode::generative});
    check_canonical(out);
    // Brute-force dilation of the input mask by the 3x3x3 box, clipped to dims.
    const auto in_mask = active_mask(s);
    std::vector<std::uint8_t> dilated(in_mask.size(), 0);
    for (int px = 0; px < 5; ++px)
        for (int py = 0; py < 6; ++py)
            for (int pz = 0; pz < 4; ++pz)
                for (int dx = -1; dx <= 1; ++dx)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dz = -1; dz <= 1; ++dz) {
                            const int qx = px + dx, qy = py + dy, qz = pz + dz;
                            if (qx < 0 || qy < 0 || qz < 0 || qx >= 5 || qy >= 6 || qz >= 4) continue;
                            if (in_mask[(qx * 6 + qy) * 4 + qz]) dilated[(px * 6 + py) * 4 + pz] = 1;
                        }
    CHECK(active_mask(out) == dilated);
    Conv3dOptions opt;
    opt.padding = {1, 1, 1};
    const Tensor ref = apply_mask(conv3d(x, dense_kernel({3, 3, 3}, w), opt), dilated);
    CHECK(max_abs_diff(sparse::densify(out).data(), ref.data()) <= 1e-10);
}

TEST_CASE("sparse_conv is linear in the kernel over disjoint offset sets") {
    std::mt19937_64 rng(5);
    const SparseVoxelTensor s = sparse::sparsify(random_sparse_grid(rng, 3, 6, 6, 6, 0.4), 0.0);
    const auto vertical = sparse::box_offsets(3, 1, 3);
    // The horizontal pattern minus the shared centre column (dx = dy = 0 overlaps).
    std::vector<Coord> horizontal;
    for (const Coord& c : sparse::box_offsets(1, 3, 3)) {
        if (c.y != 0) horizontal.push_back(c);
    }
    const Tensor wv = random_weights(rng, vertical.size(), 3, 3);
    const Tensor wh = random_weights(rng, horizontal.size(), 3, 3);
    std::vector<Coord> merged = vertical;
    merged.insert(merged.end(), horizontal.begin(), horizontal.end());
    const Tensor wm = concat({wv, wh}, 0);
    const auto mode = sparse::ConvMode::submanifold;
    const SparseVoxelTensor joint = sparse::sparse_conv(s, {merged, wm, mode});
    const SparseVoxelTensor split =
        sparse::add(sparse::sparse_conv(s, {vertical, wv, mode}), sparse::sparse_conv(s, {horizontal, wh, mode}));
    CHECK(max_abs_diff(joint.feats().data(), split.feats().data()) <= 1e-12);
}

TEST_CASE("asymmetric residual block") {
    std::mt19937_64 rng(6);
    const SparseVoxelTensor s = sparse::sparsify(random_sparse_grid(rng, 3, 5, 5, 5, 0.4), 0.0);
    const Tensor z = Tensor::zeros({9, 3, 3});
    const SparseVoxelTensor same = sparse::asymmetric_residual_block(s, {z, z, z, z});
    CHECK(bitwise_equal(same.feats().data(), s.feats().data()));

    // Identity at the centre tap (index 4 of a 9-offset pattern).
    std::vector<double> eye(9 * 2 * 2, 0.0);
    eye[4 * 4 + 0] = 1.0;
    eye[4 * 4 + 3] = 1.0;
    const Tensor id = Tensor::from_vector({9, 2, 2}, eye);
    const SparseVoxelTensor single({3, 3, 3}, {{1, 1, 1}}, Tensor::from_vector({1, 2}, {0.8, -0.4}));
    const SparseVoxelTensor out = sparse::asymmetric_residual_block(single, {id, id, id, id});
    CHECK(out.feats().at({0, 0}) == doctest::Approx(0.8 + 2.0 * 0.8));
    CHECK(out.feats().at({0, 1}) == -0.4);

    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = random_sparse_grid(rng, 2, 6, 5, 4, 0.35);
        const SparseVoxelTensor sx = sparse::sparsify(x, 0.0);
        const auto p = random_block(rng, 2);
        const Tensor ref = dense_asymmetric_block(x, active_mask(sx), p);
        CHECK(max_abs_diff(sparse::densify(sparse::asymmetric_residual_block(sx, p)).data(), ref.data()) <= 1e-10);
    }
}

TEST_CASE("rank-1 aggregation") {
    std::mt19937_64 rng(7);
    const SparseVoxelTensor s = sparse::sparsify(random_sparse_grid(rng, 2, 4, 4, 4, 0.5), 0.0);
    const Tensor z = Tensor::zeros({3, 2, 2});
    const SparseVoxelTensor out = sparse::rank1_aggregate(s, {z, z, z});
    for (std::size_t i = 0; i < s.feats().numel(); ++i) CHECK(out.feats().data()[i] == 1.5 * s.feats().data()[i]);

    const SparseVoxelTensor empty = sparse::sparsify(Tensor::zeros({2, 3, 3, 3}), 0.0);
    CHECK(sparse::rank1_aggregate(empty, {z, z, z}).size() == 0);

    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = random_sparse_grid(rng, 3, 5, 6, 4, 0.4);
        const SparseVoxelTensor sx = sparse::sparsify(x, 0.0);
        const auto p = random_rank1(rng, 3);
        const SparseVoxelTensor r = sparse::rank1_aggregate(sx, p);
        CHECK(r.coords() == sx.coords());
        CHECK(max_abs_diff(sparse::densify(r).data(), dense_rank1(x, active_mask(sx), p).data()) <= 1e-10);
    }
}

TEST_CASE("downsample and unpool against dense loops") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t X = 2 + trial % 5, Y = 3 + trial % 4, Z = 4;
        const Tensor x = random_sparse_grid(rng, 2, X, Y, Z, 0.3);
        const SparseVoxelTensor s = sparse::sparsify(x, 0.0);
        const Tensor w = random_weights(rng, 8, 3, 2);
        const SparseVoxelTensor coarse = sparse::downsample_conv(s, w);
        check_canonical(coarse);
        // Coarse active set = parents of the fine active set.
        std::vector<std::uint8_t> parents(coarse.dims()[0] * coarse.dims()[1] * coarse.dims()[2], 0);
        for (const Coord& c : s.coords()) parents[((c.x / 2) * coarse.dims()[1] + c.y / 2) * coarse.dims()[2] + c.z / 2] = 1;
        CHECK(active_mask(coarse) == parents);
        const Tensor ref = apply_mask(dense_downsample(x, w), parents);
        CHECK(max_abs_diff(sparse::densify(coarse).data(), ref.data()) <= 1e-10);

        const SparseVoxelTensor back = sparse::unpool_nearest(coarse, s);
        CHECK(back.coords() == s.coords());
        const Tensor up_ref = dense_unpool(sparse::densify(coarse), {X, Y, Z}, active_mask(s));
        CHECK(max_abs_diff(sparse::densify(back).data(), up_ref.data()) == 0.0);
    }
}

TEST_CASE("sparse op gradients pass finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 100);
        const Tensor x0 = random_sparse_grid(rng, 2, 4, 4, 3, 0.5);
        Tensor dense = Tensor::parameter(x0.shape(), {x0.data().begin(), x0.data().end()}, "dense");
        Tensor w27 = random_param(rng, {27, 2, 2}, "conv27", -0.5, 0.5);
        Tensor w8 = random_param(rng, {8, 3, 2}, "down", -0.5, 0.5);
        sparse::AsymmetricBlockParams blk{random_param(rng, {9, 2, 2}, "va", -0.5, 0.5),
                                          random_param(rng, {9, 2, 2}, "ha", -0.5, 0.5),
                                          random_param(rng, {9, 2, 2}, "hb", -0.5, 0.5),
                                          random_param(rng, {9, 2, 2}, "vb", -0.5, 0.5)};
        sparse::Rank1Params r1{random_param(rng, {3, 2, 2}, "rx", -0.5, 0.5), random_param(rng, {3, 2, 2}, "ry", -0.5, 0.5),
                               random_param(rng, {3, 2, 2}, "rz", -0.5, 0.5)};
        // A small threshold keeps the active set fixed under the finite-difference step.
        auto loss = [&] {
            const SparseVoxelTensor s = sparse::sparsify(dense, 1e-3);
            const SparseVoxelTensor a = sparse::sparse_conv(s, {sparse::box_offsets(3, 3, 3), w27, sparse::ConvMode::submanifold});
            const SparseVoxelTensor g = sparse::sparse_conv(s, {sparse::box_offsets(3, 3, 3), w27, sparse::ConvMode::generative});
            const SparseVoxelTensor b = sparse::asymmetric_residual_block(a, blk);
            const SparseVoxelTensor c = sparse::rank1_aggregate(b, r1);
            const SparseVoxelTensor d = sparse::unpool_nearest(sparse::downsample_conv(c, w8), s);
            return add(add(project(sparse::densify(c), seed), project(d.feats(), seed + 1)), project(g.feats(), seed + 2));
        };
        const auto report = gradcheck(loss, {dense, w27, w8, blk.vertical_a, blk.horizontal_a, blk.horizontal_b,
                                             blk.vertical_b, r1.along_x, r1.along_y, r1.along_z});
        INFO("seed " << seed << "\n" << report.summary());
        CHECK(report.passed());
    }
}
