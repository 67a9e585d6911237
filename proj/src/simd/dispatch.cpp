#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "vlscene/simd.hpp"

namespace vlscene::simd {

namespace {

constexpr KernelTable kScalar{Isa::scalar, &scalar::dot, &scalar::axpy, &scalar::add};
#if defined(VLSCENE_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2, &avx2::dot, &avx2::axpy, &avx2::add};
#endif
#if defined(VLSCENE_HAVE_NEON)
constexpr KernelTable kNeon{Isa::neon, &neon::dot, &neon::axpy, &neon::add};
#endif

Isa isa_from_env(Isa fallback) {
    const char* env = std::getenv("VLSCENE_ISA");
    if (env == nullptr) return fallback;
    const std::string value(env);
    if (value == "scalar") return Isa::scalar;
    if (value == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
    if (value == "neon" && isa_supported(Isa::neon)) return Isa::neon;
    return fallback;
}

std::atomic<const KernelTable*>& active_table() {
    static std::atomic<const KernelTable*> table{&kernels_for(isa_from_env(best_isa()))};
    return table;
}

}  // namespace

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(VLSCENE_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(VLSCENE_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Isa best_isa() {
    if (isa_supported(Isa::avx2)) return Isa::avx2;
    if (isa_supported(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

const KernelTable& kernels_for(Isa isa) {
    if (!isa_supported(isa)) {
        throw std::invalid_argument("SIMD variant '" + std::string(isa_name(isa)) +
                                    "' is not available on this CPU/build");
    }
    switch (isa) {
#if defined(VLSCENE_HAVE_AVX2)
        case Isa::avx2: return kAvx2;
#endif
#if defined(VLSCENE_HAVE_NEON)
        case Isa::neon: return kNeon;
#endif
        default: return kScalar;
    }
}

const KernelTable& kernels() { return *active_table().load(std::memory_order_acquire); }

Isa active_isa() { return kernels().isa; }

void force_isa(Isa isa) { active_table().store(&kernels_for(isa), std::memory_order_release); }

}  // namespace vlscene::simd
