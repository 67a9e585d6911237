#pragma once

// Data-parallel inner loops shared by the dense and sparse convolution paths.
//
// Every kernel has a scalar reference implementation plus optional AVX2 (x86-64)
// and NEON (aarch64) variants. The variant is chosen once at runtime from the
// CPU feature set; VLSCENE_ISA=scalar|avx2|neon overrides the choice, and
// force_isa() switches it in-process for equivalence testing.

#include <cstddef>
#include <span>
#include <string_view>

namespace vlscene::simd {

enum class Isa { scalar, avx2, neon };

/// Function table for one instruction-set variant.
struct KernelTable {
    Isa isa;
    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// y[i] += x[i]
    void (*add)(const double* x, double* y, std::size_t n);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* x, double* y, std::size_t n);
}  // namespace scalar

#if defined(VLSCENE_HAVE_AVX2)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

#if defined(VLSCENE_HAVE_NEON)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* x, double* y, std::size_t n);
}  // namespace neon
#endif

bool isa_supported(Isa isa);
Isa best_isa();
Isa active_isa();
std::string_view isa_name(Isa isa);

/// Throws std::invalid_argument when the CPU (or build) lacks the variant.
void force_isa(Isa isa);

const KernelTable& kernels();
const KernelTable& kernels_for(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return kernels().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    kernels().axpy(alpha, x.data(), y.data(), x.size());
}

/// RAII override of the active variant, restoring the previous one on exit.
class IsaScope {
public:
    explicit IsaScope(Isa isa) : previous_(active_isa()) { force_isa(isa); }
    ~IsaScope() { force_isa(previous_); }
    IsaScope(const IsaScope&) = delete;
    IsaScope& operator=(const IsaScope&) = delete;

private:
    Isa previous_;
};

}  // namespace vlscene::simd
