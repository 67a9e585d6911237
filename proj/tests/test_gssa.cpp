#include <cmath>
#include <random>

#include "dense_oracle.hpp"
#include "doctest.h"
#include "test_util.hpp"
#include "vlscene/error.hpp"
#include "vlscene/gradcheck.hpp"
#include "vlscene/gssa.hpp"

using namespace vlscene;
using namespace vlscene::testing;

namespace {

gssa::Params random_params(std::uint64_t seed, const gssa::Widths& w) {
    init::Rng r(seed);
    return gssa::Params::init(r, w);
}

gssa::Params zero_params(const gssa::Widths& w) {
    gssa::Params p = random_params(0, w);
    for (Tensor t : p.tensors()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    return p;
}

}  // namespace

TEST_CASE("ngp residual identity at zero kernels") {
    std::mt19937_64 rng(31);
    const gssa::Widths w{3, {3, 4, 5}, 4, 2};
    const auto z = zero_params(w);
    const Tensor v = random_tensor(rng, {3, 6, 5, 4});
    CHECK(bitwise_equal(gssa::ngp(v, z.ngp).data(), v.data()));
}

TEST_CASE("ngp support of a point source is the radius-4 box") {
    const gssa::Widths w{1, {1, 2, 2}, 2, 1};
    gssa::Params p = zero_params(w);
    std::fill(p.ngp.large[0].mutable_data().begin(), p.ngp.large[0].mutable_data().end(), 1.0);
    std::fill(p.ngp.small[0].mutable_data().begin(), p.ngp.small[0].mutable_data().end(), 1.0);
    const std::size_t X = 12, Y = 11, Z = 10;
    for (const std::array<long, 3> src : {std::array<long, 3>{5, 5, 5}, std::array<long, 3>{1, 9, 2}}) {
        std::vector<double> v(X * Y * Z, 0.0);
        v[(src[0] * Y + src[1]) * Z + src[2]] = 1.0;
        const Tensor in = Tensor::from_vector({1, X, Y, Z}, v);
        const Tensor out = gssa::ngp(in, p.ngp);
        for (long x = 0; x < static_cast<long>(X); ++x)
            for (long y = 0; y < static_cast<long>(Y); ++y)
                for (long zz = 0; zz < static_cast<long>(Z); ++zz) {
                    const bool inside = std::abs(x - src[0]) <= 4 && std::abs(y - src[1]) <= 4 && std::abs(zz - src[2]) <= 4;
                    const std::size_t i = (x * Y + y) * Z + zz;
                    CHECK((out.data()[i] - in.data()[i] != 0.0) == inside);
                }
    }
}

TEST_CASE("ngp matches the naive conv composition and confines perturbations") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 5; ++trial) {
        const gssa::Widths w{2, {2, 4, 4}, 3, 1 + static_cast<std::size_t>(trial % 2)};
        const auto p = random_params(trial, w);
        const Tensor v = random_tensor(rng, {2, 9, 8, 6});
        std::vector<double> ref(v.data().begin(), v.data().end());
        for (std::size_t r = 0; r < w.ngp_repeats; ++r) {
            const Tensor x = Tensor::from_vector(v.shape(), ref);
            auto a = naive_conv3d(x, p.ngp.large[r], {1, 1, 1}, {3, 3, 3});
            for (double& t : a) t = std::max(t, 0.0);
            auto b = naive_conv3d(Tensor::from_vector(v.shape(), a), p.ngp.small[r], {1, 1, 1}, {1, 1, 1});
            for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += std::max(b[i], 0.0);
        }
        const Tensor out = gssa::ngp(v, p.ngp);
        CHECK(max_abs_diff(out.data(), ref) <= 1e-10);

        if (w.ngp_repeats != 1) continue;
        std::vector<double> bumped(v.data().begin(), v.data().end());
        const std::size_t sx = 4, sy = 3, sz = 2;
        for (std::size_t c = 0; c < 2; ++c) bumped[((c * 9 + sx) * 8 + sy) * 6 + sz] += 0.5;
        const Tensor diff = sub(gssa::ngp(Tensor::from_vector(v.shape(), bumped), p.ngp), out);
        for (std::size_t c = 0; c < 2; ++c)
            for (long x = 0; x < 9; ++x)
                for (long y = 0; y < 8; ++y)
                    for (long z = 0; z < 6; ++z) {
                        const bool inside = std::abs(x - 4) <= 4 && std::abs(y - 3) <= 4 && std::abs(z - 2) <= 4;
                        if (!inside) CHECK(diff.data()[((c * 9 + x) * 8 + y) * 6 + z] == 0.0);
                    }
    }
}

TEST_CASE("ssi special cases") {
    const gssa::Widths w{2, {2, 3, 4}, 3, 1};
    CHECK_THROWS_AS(gssa::ssi(Tensor::zeros({2, 8, 6, 4}), random_params(1, w).ssi, 0.0), ShapeError);
    for (double v : values(gssa::ssi(Tensor::zeros({2, 4, 4, 4}), random_params(1, w).ssi, 0.0))) CHECK(v == 0.0);

    // Two active voxels, all stage weights zero: rank-1 gates are 1.5 on the skip path.
    std::vector<double> v(2 * 64, 0.0);
    v[0 * 64 + 5] = 0.4;
    v[1 * 64 + 5] = -0.2;
    v[0 * 64 + 42] = 1.1;
    const Tensor in = Tensor::from_vector({2, 4, 4, 4}, v);
    const Tensor out = gssa::ssi(in, zero_params(w).ssi, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(out.data()[i] == 1.5 * v[i]);
}

TEST_CASE("ssi equals the dense-masked oracle") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 6; ++trial) {
        const gssa::Widths w{2, {2, 3, 4}, 3, 1};
        const auto p = random_params(trial + 10, w);
        const Tensor v = random_sparse_grid(rng, 2, 8, 8, 4, 0.3 + 0.1 * trial);
        const Tensor out = gssa::ssi(v, p.ssi, 0.0);
        CHECK(max_abs_diff(out.data(), dense_ssi(v, p.ssi).data()) <= 1e-9);
        const auto m = dense_mask(v);
        const std::size_t vol = m.size();
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < vol; ++i)
                if (!m[i]) CHECK(out.data()[c * vol + i] == 0.0);
    }
}

TEST_CASE("output head") {
    std::mt19937_64 rng(34);
    const gssa::Widths w{3, {3, 4, 4}, 3, 1};
    gssa::Params p = zero_params(w);
    const Tensor v = random_tensor(rng, {3, 2, 3, 2});
    for (double x : values(gssa::output_head(v, p.head))) CHECK(x == 0.0);
    for (std::size_t c = 0; c < 3; ++c) p.head.weight.mutable_data()[c * 3 + c] = 1.0;
    const Tensor out = gssa::output_head(v, p.head);
    CHECK(out.shape() == Shape{3, 4, 6, 4});
    CHECK(bitwise_equal(out.data(), upsample_nearest(v, 2).data()));

    const auto r = random_params(5, w);
    const Tensor a = gssa::output_head(v, r.head);
    const Tensor b = conv3d(upsample_nearest(v, 2), r.head.weight, {}, r.head.bias);
    CHECK(bitwise_equal(a.data(), b.data()));
}

TEST_CASE("parameter budget against a dense 3D ResNet") {
    const gssa::Widths toy{8, {8, 16, 32}, 4, 1};
    const std::size_t g = gssa::param_count(toy), r = gssa::resnet3d_param_count(8);
    MESSAGE("toy GSSA params " << g << ", dense ResNet " << r << ", ratio " << static_cast<double>(g) / r);
    CHECK(g < r);
    const gssa::Widths wide{32, {32, 64, 128}, 20, 1};
    MESSAGE("GSSA params at widths 32/64/128: " << gssa::param_count(wide) << ", dense ResNet "
                                                << gssa::resnet3d_param_count(32));
}

TEST_CASE("gssa gradients pass finite differences") {
    const gssa::Widths w{2, {2, 2, 3}, 3, 1};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 1300);
        auto p = random_params(seed + 40, w);
        // Positive NGP kernels on a positive grid keep every NGP relu away from its kink.
        for (Tensor t : {p.ngp.large[0], p.ngp.small[0]})
            for (double& x : t.mutable_data()) x = std::abs(x);
        Tensor v = Tensor::parameter({2, 4, 4, 4}, uniform_values(rng, 128, 0.2, 1.0), "V");
        auto loss = [&] { return project(gssa::output_head(gssa::ssi(gssa::ngp(v, p.ngp), p.ssi, 0.0), p.head), seed); };
        std::vector<Tensor> leaves = p.tensors();
        leaves.push_back(v);
        const auto report = gradcheck(loss, leaves);
        INFO("seed " << seed << "\n" << report.summary());
        CHECK(report.passed());
    }
}

TEST_CASE("output head gradient on a 3x4x4x2 input") {
    const gssa::Widths w{3, {3, 4, 4}, 4, 1};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 1400);
        const auto p = random_params(seed, w);
        Tensor v = random_param(rng, {3, 4, 4, 2}, "V_fine");
        auto loss = [&] { return project(gssa::output_head(v, p.head), seed); };
        const auto report = gradcheck(loss, {v, p.head.weight, p.head.bias});
        CHECK(report.passed());
    }
}
