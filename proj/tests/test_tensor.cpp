#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "vlscene/error.hpp"
#include "vlscene/gradcheck.hpp"
#include "vlscene/ops.hpp"
#include "vlscene/vlft.hpp"

using namespace vlscene;
using namespace vlscene::testing;

TEST_CASE("conv3d impulse response of a box kernel") {
    std::vector<double> v(125, 0.0);
    v[(2 * 5 + 2) * 5 + 2] = 1.0;
    const Tensor input = Tensor::from_vector({1, 5, 5, 5}, v);
    const Tensor kernel = Tensor::full({1, 1, 3, 3, 3}, 1.0);
    Conv3dOptions opt;
    opt.padding = {1, 1, 1};
    const Tensor out = conv3d(input, kernel, opt);
    REQUIRE(out.shape() == Shape{1, 5, 5, 5});
    for (std::size_t x = 0; x < 5; ++x)
        for (std::size_t y = 0; y < 5; ++y)
            for (std::size_t z = 0; z < 5; ++z) {
                const bool near = x >= 1 && x <= 3 && y >= 1 && y <= 3 && z >= 1 && z <= 3;
                CHECK(out.at({0, x, y, z}) == (near ? 1.0 : 0.0));
            }
}

TEST_CASE("conv3d with a zero kernel is zero") {
    std::mt19937_64 rng(1);
    const Tensor out = conv3d(random_tensor(rng, {2, 4, 4, 4}), Tensor::zeros({3, 2, 3, 3, 3}),
                              Conv3dOptions{{1, 1, 1}, {1, 1, 1}});
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("conv3d matches the direct-summation oracle") {
    std::mt19937_64 rng(2);
    const Tensor input = random_tensor(rng, {2, 4, 4, 4});
    const Tensor kernel = random_tensor(rng, {3, 2, 3, 3, 3});
    const Tensor out = conv3d(input, kernel, Conv3dOptions{{1, 1, 1}, {1, 1, 1}});
    CHECK(max_abs_diff(out.data(), naive_conv3d(input, kernel, {1, 1, 1}, {1, 1, 1})) <= 1e-12);
}

TEST_CASE("conv3d fast path equals the oracle on grids up to 8^3 with strides, padding and bias") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> extent(1, 8), chan(1, 3), kext(0, 2), pick(0, 1);
    for (int trial = 0; trial < 40; ++trial) {
        const Shape in_shape{chan(rng), extent(rng), extent(rng), extent(rng)};
        const std::size_t k[3] = {2 * kext(rng) + 1, 2 * kext(rng) + 1, 2 * kext(rng) + 1};
        Conv3dOptions opt;
        bool valid = true;
        for (int a = 0; a < 3; ++a) {
            opt.stride[a] = 1 + pick(rng);
            opt.padding[a] = pick(rng) ? k[a] / 2 : 0;
            valid = valid && in_shape[a + 1] + 2 * opt.padding[a] >= k[a];
        }
        if (!valid) continue;
        const Tensor input = random_tensor(rng, in_shape);
        const Tensor kernel = random_tensor(rng, {chan(rng), in_shape[0], k[0], k[1], k[2]});
        const Tensor bias = random_tensor(rng, {kernel.dim(0)});
        const Tensor out = conv3d(input, kernel, opt, bias);
        const auto ref = naive_conv3d(input, kernel, opt.stride, opt.padding,
                                      std::vector<double>(bias.data().begin(), bias.data().end()));
        for (int a = 0; a < 3; ++a) {
            CHECK(out.dim(a + 1) == (in_shape[a + 1] + 2 * opt.padding[a] - k[a]) / opt.stride[a] + 1);
        }
        CHECK(max_abs_diff(out.data(), ref) <= 1e-12);
    }
}

TEST_CASE("conv3d shape errors name the axis") {
    const Tensor input = Tensor::zeros({2, 4, 4, 4});
    try {
        conv3d(input, Tensor::zeros({1, 3, 3, 3, 3}));
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("axis 1") != std::string::npos);
    }
    try {
        conv3d(input, Tensor::zeros({1, 2, 3, 2, 3}));
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("axis y") != std::string::npos);
    }
    CHECK_THROWS_AS(conv3d(input, Tensor::zeros({1, 2, 3, 3, 3}), {}, Tensor::zeros({2})), ShapeError);
}

TEST_CASE("non-finite values are rejected with the op name") {
    CHECK_THROWS_AS(Tensor::from_vector({2}, {1.0, NAN}), NonFiniteError);
    const Tensor big = Tensor::from_vector({2}, {1e308, 1.0});
    try {
        scale(big, 10.0);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(std::string(e.what()).find("scale") != std::string::npos);
    }
}

TEST_CASE("matmul") {
    const Tensor eye = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
    const Tensor b = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(max_abs_diff(matmul(eye, b).data(), b.data()) == 0.0);

    const Tensor m = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
    const Tensor ones = Tensor::from_vector({2, 1}, {1, 1});
    const Tensor r = matmul(m, ones);
    CHECK(r.shape() == Shape{2, 1});
    CHECK(r.at({0, 0}) == 3.0);
    CHECK(r.at({1, 0}) == 7.0);

    std::mt19937_64 rng(4);
    const Tensor a = random_tensor(rng, {5, 7});
    const Tensor c = random_tensor(rng, {7, 3});
    std::vector<double> ref(15, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 7; ++k) ref[i * 3 + j] += a.at({i, k}) * c.at({k, j});
    CHECK(max_abs_diff(matmul(a, c).data(), ref) <= 1e-12);

    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax") {
    const Tensor flat = softmax(Tensor::full({4}, 0.3), 0);
    for (double v : flat.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    const Tensor two = softmax(Tensor::from_vector({2}, {0.0, std::log(3.0)}), 0);
    CHECK(two.data()[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(two.data()[1] == doctest::Approx(0.75).epsilon(1e-14));

    std::mt19937_64 rng(5);
    const Tensor x = random_tensor(rng, {3, 5}, -4.0, 4.0);
    const Tensor y = softmax(x, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        double denom = 0.0, row = 0.0;
        for (std::size_t j = 0; j < 5; ++j) denom += std::exp(x.at({i, j}));
        for (std::size_t j = 0; j < 5; ++j) {
            const double v = y.at({i, j});
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            CHECK(std::abs(v - std::exp(x.at({i, j})) / denom) <= 1e-12);
            row += v;
        }
        CHECK(std::abs(row - 1.0) <= 1e-12);
    }
    // Large logits stay finite thanks to max subtraction.
    const Tensor huge = softmax(Tensor::from_vector({3}, {1000.0, 999.0, -1000.0}), 0);
    CHECK(huge.data()[0] + huge.data()[1] + huge.data()[2] == doctest::Approx(1.0));
}

TEST_CASE("pointwise and reduction ops") {
    const Tensor r = relu(Tensor::from_vector({3}, {-1.0, 0.0, 2.0}));
    CHECK(r.data()[0] == 0.0);
    CHECK(r.data()[1] == 0.0);
    CHECK(r.data()[2] == 2.0);

    std::mt19937_64 rng(6);
    const Tensor x = random_tensor(rng, {3, 4});
    CHECK(l1_mean(x, x).item() == 0.0);
    CHECK(sigmoid(Tensor::zeros({1})).item() == 0.5);

    const Tensor gap = global_avg_pool(Tensor::from_vector({2, 2}, {1, 3, -2, 4}));
    CHECK(gap.data()[0] == 2.0);
    CHECK(gap.data()[1] == 1.0);

    const Tensor cat = concat({Tensor::from_vector({1, 2}, {1, 2}), Tensor::from_vector({2, 2}, {3, 4, 5, 6})}, 0);
    CHECK(cat.shape() == Shape{3, 2});
    CHECK(cat.at({2, 1}) == 6.0);
    const Tensor cat1 = concat({Tensor::from_vector({2, 1}, {1, 2}), Tensor::from_vector({2, 1}, {3, 4})}, 1);
    CHECK(cat1.at({0, 1}) == 3.0);
    CHECK(cat1.at({1, 0}) == 2.0);
    CHECK(slice(cat, 0, 1, 3).at({0, 0}) == 3.0);
}

TEST_CASE("soft cross entropy against the direct -sum t log p oracle") {
    std::mt19937_64 rng(7);
    const Tensor pred = random_tensor(rng, {4, 6}, -2.0, 2.0);
    // Target equal to softmax(pred): loss is the mean target entropy.
    const Tensor target = softmax(pred, 1);
    double entropy = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j) entropy -= target.at({i, j}) * std::log(target.at({i, j}));
    CHECK(std::abs(soft_cross_entropy(pred, target, 1).item() - entropy / 4.0) <= 1e-10);

    const Tensor other = softmax(random_tensor(rng, {4, 6}), 1);
    double direct = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < 6; ++j) denom += std::exp(pred.at({i, j}));
        for (std::size_t j = 0; j < 6; ++j) direct -= other.at({i, j}) * std::log(std::exp(pred.at({i, j})) / denom);
    }
    CHECK(std::abs(soft_cross_entropy(pred, other, 1).item() - direct / 4.0) <= 1e-10);
}

TEST_CASE("hard cross entropy averages over non-ignored positions only") {
    const Tensor logits = Tensor::from_vector({2, 3}, {0.0, 1.0, 2.0, 0.5, -1.0, 0.0});  // [classes=2, positions=3]
    const std::vector<std::int32_t> labels{0, 255, 1};
    const double l0 = -std::log(std::exp(0.0) / (std::exp(0.0) + std::exp(0.5)));
    const double l2 = -std::log(std::exp(0.0) / (std::exp(2.0) + std::exp(0.0)));
    CHECK(hard_cross_entropy(logits, labels, 0, 255).item() == doctest::Approx((l0 + l2) / 2.0).epsilon(1e-14));

    const std::vector<std::int32_t> none{255, 255, 255};
    CHECK_THROWS_AS(hard_cross_entropy(logits, none, 0, 255), Error);
    const std::vector<std::int32_t> bad{0, 2, 1};
    CHECK_THROWS_AS(hard_cross_entropy(logits, bad, 0, 255), ShapeError);

    const std::vector<double> weights{1.0, 3.0};
    CHECK(hard_cross_entropy(logits, labels, 0, 255, weights).item() ==
          doctest::Approx((l0 + 3.0 * l2) / 4.0).epsilon(1e-14));
}

TEST_CASE("backward closed forms") {
    Tensor x = Tensor::parameter({2, 3}, {1, 2, 3, 4, 5, 6}, "x");
    sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);

    Tensor y = Tensor::parameter({3}, {1, 2, 3}, "y");
    sum(mul(y, y)).backward();
    CHECK(y.grad()[0] == 2.0);
    CHECK(y.grad()[1] == 4.0);
    CHECK(y.grad()[2] == 6.0);

    // Diamond: z = y*y + y reaches y along two paths.
    Tensor z = Tensor::parameter({2}, {1.5, -2.0}, "z");
    sum(add(mul(z, z), z)).backward();
    CHECK(z.grad()[0] == 4.0);
    CHECK(z.grad()[1] == -3.0);
}

TEST_CASE("backward errors") {
    CHECK_THROWS_AS(sum(Tensor::full({3}, 1.0)).backward(), Error);
    Tensor p = Tensor::parameter({3}, {1, 2, 3}, "p");
    CHECK_THROWS_AS(relu(p).backward(), ShapeError);
    // Detached targets receive no gradient.
    Tensor q = Tensor::parameter({3}, {1, 2, 3}, "q");
    sum(mul(p, q.detach())).backward();
    CHECK_FALSE(q.has_grad());
}

namespace {

// Twenty seeds per primitive, each through the finite-difference harness.
template <typename Build>
void check_primitive(const char* name, Build build) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed * 7919 + 13);
        std::vector<Tensor> leaves;
        std::function<Tensor()> loss = build(rng, leaves, seed);
        const GradcheckReport report = gradcheck(loss, leaves);
        INFO(name << " seed " << seed << "\n" << report.summary());
        CHECK(report.passed());
    }
}

}  // namespace

TEST_CASE("gradients of every primitive pass finite differences") {
    check_primitive("conv3d", [](auto& rng, auto& leaves, std::uint64_t seed) {
        Tensor in = random_param(rng, {2, 3, 4, 3}, "input");
        Tensor k = random_param(rng, {2, 2, 3, 3, 1}, "kernel");
        Tensor b = random_param(rng, {2}, "bias");
        leaves = {in, k, b};
        return std::function<Tensor()>([=] {
            return project(conv3d(in, k, Conv3dOptions{{1, 2, 1}, {1, 1, 0}}, b), seed);
        });
    });
    check_primitive("conv2d", [](auto& rng, auto& leaves, std::uint64_t seed) {
        Tensor in = random_param(rng, {2, 4, 5}, "input");
        Tensor k = random_param(rng, {3, 2, 3, 3}, "kernel");
        leaves = {in, k};
        return std::function<Tensor()>([=] { return project(conv2d(in, k, 1), seed); });
    });
    check_primitive("matmul", [](auto& rng, auto& leaves, std::uint64_t seed) {
        Tensor a = random_param(rng, {3, 4}, "a");
        Tensor b = random_param(rng, {4, 2}, "b");
        leaves = {a, b};
        return std::function<Tensor()>([=] { return project(matmul(a, b), seed); });
    });
    check_primitive("softmax", [](auto& rng, auto& leaves, std::uint64_t seed) {
        Tensor a = random_param(rng, {3, 4, 2}, "a", -2.0, 2.0);
        leaves = {a};
        return std::function<Tensor()>([=] { return project(softmax(a, 1), seed); });
    });
    check_primitive("pointwise", [](auto& rng, auto& leaves, std::uint64_t seed) {
        Tensor a = random_param(rng, {2, 3}, "a");
        Tensor b = random_param(rng, {2, 3}, "b");
        Tensor w = random_param(rng, {2}, "w");
        leaves = {a, b, w};
        return std::function<Tensor()>([=] {
            Tensor h = add(mul(sigmoid(a), relu(b)), sub(a, scale(b, 0.5)));
            h = concat({mul_channels(h, w), slice(h, 1, 1, 3)}, 1);
            return add(project(h, seed), sum(global_avg_pool(mul(h, h))));
        });
    });
    check_primitive("layout", [](auto& rng, auto& leaves, std::uint64_t seed) {
        Tensor a = random_param(rng, {2, 2, 2, 1}, "a");
        Tensor rows = random_param(rng, {4, 3}, "rows");
        leaves = {a, rows};
        const std::vector<std::uint32_t> pick{3, 0, 3, 1};
        return std::function<Tensor()>([=] {
            return add(project(upsample_nearest(a, 2), seed), project(gather_rows(rows, pick), seed + 1));
        });
    });
    check_primitive("l1_mean", [](auto& rng, auto& leaves, std::uint64_t) {
        Tensor a = random_param(rng, {3, 3}, "a");
        Tensor b = random_param(rng, {3, 3}, "b");
        leaves = {a, b};
        return std::function<Tensor()>([=] { return l1_mean(a, b); });
    });
    check_primitive("soft_cross_entropy", [](auto& rng, auto& leaves, std::uint64_t) {
        Tensor p = random_param(rng, {3, 4}, "pred", -2.0, 2.0);
        Tensor t = random_param(rng, {3, 4}, "target", 0.0, 1.0);
        leaves = {p, t};
        return std::function<Tensor()>([=] { return soft_cross_entropy(p, t, 0); });
    });
    check_primitive("hard_cross_entropy", [](auto& rng, auto& leaves, std::uint64_t) {
        Tensor p = random_param(rng, {3, 5}, "pred", -2.0, 2.0);
        leaves = {p};
        std::uniform_int_distribution<int> lab(0, 3);
        std::vector<std::int32_t> labels(5);
        for (auto& l : labels) l = lab(rng) == 3 ? 255 : lab(rng) % 3;
        labels[0] = 1;
        return std::function<Tensor()>([=] { return hard_cross_entropy(p, labels, 0, 255); });
    });
    check_primitive("safe_log", [](auto& rng, auto& leaves, std::uint64_t seed) {
        Tensor a = random_param(rng, {4}, "a", 0.2, 2.0);
        leaves = {a};
        return std::function<Tensor()>([=] { return project(safe_log(a), seed); });
    });
}

TEST_CASE("determinism: identical inputs give bitwise-identical forward values") {
    auto run = [] {
        std::mt19937_64 rng(99);
        const Tensor in = random_tensor(rng, {2, 6, 6, 4});
        const Tensor k = random_tensor(rng, {3, 2, 3, 3, 3});
        const Tensor out = softmax(conv3d(in, k, Conv3dOptions{{1, 1, 1}, {1, 1, 1}}), 0);
        return std::vector<double>(out.data().begin(), out.data().end());
    };
    CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("32-bit storage mode rounds every stored value") {
    PrecisionScope scope(Precision::f32);
    const Tensor t = Tensor::from_vector({1}, {0.1});
    CHECK(t.data()[0] == static_cast<double>(0.1f));
    const Tensor u = scale(t, 3.0);
    CHECK(u.data()[0] == static_cast<double>(static_cast<float>(static_cast<double>(0.1f) * 3.0)));
}

TEST_CASE("VLFT round trip and corruption") {
    std::mt19937_64 rng(8);
    const Tensor t = random_tensor(rng, {3, 2, 5});
    const auto bytes = vlft::encode(t.shape(), t.data(), vlft::DType::f64);
    // magic + version + rank + 3 extents + dtype + payload
    CHECK(bytes.size() == 4 + 4 + 4 + 12 + 1 + 30 * 8);
    CHECK(bytes[0] == 'V');
    CHECK(bytes[8] == 3);
    const vlft::Array back = vlft::decode(bytes);
    CHECK(back.shape == t.shape());
    CHECK(bitwise_equal(back.values, t.data()));

    const auto f32 = vlft::decode(vlft::encode(t.shape(), t.data(), vlft::DType::f32));
    CHECK(f32.dtype == vlft::DType::f32);
    CHECK(f32.values[4] == static_cast<double>(static_cast<float>(t.data()[4])));

    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + 40);
    try {
        vlft::decode(truncated, "fixture.vlft");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("fixture.vlft") != std::string::npos);
        CHECK(msg.find("byte offset 40") != std::string::npos);
    }
    auto bad = bytes;
    bad[1] = 'X';
    CHECK_THROWS_AS(vlft::decode(bad), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(vlft::decode(bad_version), FormatError);

    const auto path = std::filesystem::temp_directory_path() / "vlscene_test_tensor.vlft";
    vlft::write(path, t);
    CHECK(bitwise_equal(vlft::read(path).data(), t.data()));
    std::filesystem::remove(path);
}
