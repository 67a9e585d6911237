#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "vlscene/ops.hpp"
#include "vlscene/simd.hpp"

using namespace vlscene;
using vlscene::testing::max_abs_diff;
using vlscene::testing::random_tensor;
using vlscene::testing::uniform_values;

namespace {

std::vector<simd::Isa> available_variants() {
    std::vector<simd::Isa> out;
    for (auto isa : {simd::Isa::scalar, simd::Isa::avx2, simd::Isa::neon}) {
        if (simd::isa_supported(isa)) out.push_back(isa);
    }
    return out;
}

}  // namespace

TEST_CASE("every variant agrees with the scalar reference kernels") {
    std::mt19937_64 rng(11);
    const auto& ref = simd::kernels_for(simd::Isa::scalar);
    for (auto isa : available_variants()) {
        CAPTURE(simd::isa_name(isa));
        const auto& k = simd::kernels_for(isa);
        for (std::size_t n = 0; n <= 67; ++n) {
            auto a = uniform_values(rng, n);
            auto b = uniform_values(rng, n);
            CHECK(std::abs(k.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= 1e-14 * (n + 1));

            auto y1 = uniform_values(rng, n);
            auto y2 = y1;
            k.axpy(0.37, a.data(), y1.data(), n);
            ref.axpy(0.37, a.data(), y2.data(), n);
            CHECK(max_abs_diff(y1, y2) <= 1e-15);

            auto z1 = b;
            auto z2 = b;
            k.add(a.data(), z1.data(), n);
            ref.add(a.data(), z2.data(), n);
            CHECK(max_abs_diff(z1, z2) == 0.0);
        }
    }
}

TEST_CASE("unsupported variants are rejected") {
    for (auto isa : {simd::Isa::avx2, simd::Isa::neon}) {
        if (!simd::isa_supported(isa)) CHECK_THROWS_AS(simd::force_isa(isa), std::invalid_argument);
    }
    CHECK(simd::isa_supported(simd::Isa::scalar));
}

TEST_CASE("conv3d and matmul are equivalent across variants") {
    std::mt19937_64 rng(5);
    const Tensor input = random_tensor(rng, {3, 6, 5, 7});
    const Tensor kernel = random_tensor(rng, {4, 3, 3, 3, 3});
    const Tensor a = random_tensor(rng, {9, 13});
    const Tensor b = random_tensor(rng, {13, 6});
    Conv3dOptions opt;
    opt.padding = {1, 1, 1};

    std::vector<double> ref_conv, ref_mm;
    {
        simd::IsaScope scope(simd::Isa::scalar);
        const Tensor conv = conv3d(input, kernel, opt);
        ref_conv.assign(conv.data().begin(), conv.data().end());
        const Tensor mm = matmul(a, b);
        ref_mm.assign(mm.data().begin(), mm.data().end());
    }
    for (auto isa : available_variants()) {
        simd::IsaScope scope(isa);
        CAPTURE(simd::isa_name(isa));
        CHECK(max_abs_diff(conv3d(input, kernel, opt).data(), ref_conv) <= 1e-12);
        CHECK(max_abs_diff(matmul(a, b).data(), ref_mm) <= 1e-12);
    }
}

TEST_CASE("the active variant is the best one unless overridden") {
    if (std::getenv("VLSCENE_ISA") == nullptr) CHECK(simd::active_isa() == simd::best_isa());
}
