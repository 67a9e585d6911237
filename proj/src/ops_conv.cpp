// conv3d fast path: for every kernel tap, gather the shifted input once into a
// [C_in, P_out] slab, then accumulate C_out x C_in axpy updates of length P_out.
// The backward pass reuses the same gather/scatter geometry.

#include <algorithm>
#include <string>

#include "vlscene/autograd.hpp"
#include "vlscene/error.hpp"
#include "vlscene/ops.hpp"
#include "vlscene/simd.hpp"

namespace vlscene {

using detail::input_grad;
using detail::make_result;
using detail::Node;

namespace {

struct ConvGeometry {
    std::size_t c_in = 0, c_out = 0;
    std::array<std::size_t, 3> in{}, out{}, k{}, stride{}, pad{};

    std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
    std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
    std::size_t taps() const { return k[0] * k[1] * k[2]; }

    // Input coordinate read by output `o` through tap `t` on `axis`, or -1.
    long source(std::size_t axis, std::size_t o, std::size_t t) const {
        const long i = static_cast<long>(o * stride[axis] + t) - static_cast<long>(pad[axis]);
        return (i >= 0 && i < static_cast<long>(in[axis])) ? i : -1;
    }

    bool tap_reaches_input(std::size_t kx, std::size_t ky, std::size_t kz) const {
        const std::array<std::size_t, 3> tap{kx, ky, kz};
        for (std::size_t axis = 0; axis < 3; ++axis) {
            bool any = false;
            for (std::size_t o = 0; o < out[axis] && !any; ++o) any = source(axis, o, tap[axis]) >= 0;
            if (!any) return false;
        }
        return true;
    }
};

// slab[c, o] = input[c, source(o)] (zero where the tap reads padding).
void gather_tap(const ConvGeometry& g, const double* input, std::size_t kx, std::size_t ky, std::size_t kz,
                double* slab) {
    const std::size_t P = g.out_volume();
    for (std::size_t c = 0; c < g.c_in; ++c) {
        const double* src = input + c * g.in_volume();
        double* dst = slab + c * P;
        for (std::size_t ox = 0; ox < g.out[0]; ++ox) {
            const long ix = g.source(0, ox, kx);
            for (std::size_t oy = 0; oy < g.out[1]; ++oy) {
                const long iy = ix < 0 ? -1 : g.source(1, oy, ky);
                double* row = dst + (ox * g.out[1] + oy) * g.out[2];
                if (iy < 0) {
                    std::fill_n(row, g.out[2], 0.0);
                    continue;
                }
                const double* src_row = src + (static_cast<std::size_t>(ix) * g.in[1] + iy) * g.in[2];
                for (std::size_t oz = 0; oz < g.out[2]; ++oz) {
                    const long iz = g.source(2, oz, kz);
                    row[oz] = iz < 0 ? 0.0 : src_row[iz];
                }
            }
        }
    }
}

// Adjoint of gather_tap: input_grad[c, source(o)] += slab[c, o].
void scatter_tap(const ConvGeometry& g, const double* slab, std::size_t kx, std::size_t ky, std::size_t kz,
                 double* input_grad) {
    const std::size_t P = g.out_volume();
    for (std::size_t c = 0; c < g.c_in; ++c) {
        double* dst = input_grad + c * g.in_volume();
        const double* src = slab + c * P;
        for (std::size_t ox = 0; ox < g.out[0]; ++ox) {
            const long ix = g.source(0, ox, kx);
            if (ix < 0) continue;
            for (std::size_t oy = 0; oy < g.out[1]; ++oy) {
                const long iy = g.source(1, oy, ky);
                if (iy < 0) continue;
                const double* row = src + (ox * g.out[1] + oy) * g.out[2];
                double* dst_row = dst + (static_cast<std::size_t>(ix) * g.in[1] + iy) * g.in[2];
                for (std::size_t oz = 0; oz < g.out[2]; ++oz) {
                    const long iz = g.source(2, oz, kz);
                    if (iz >= 0) dst_row[iz] += row[oz];
                }
            }
        }
    }
}

ConvGeometry make_geometry(const Tensor& input, const Tensor& kernel, const Conv3dOptions& options,
                           const Tensor& bias) {
    if (input.rank() != 4) throw ShapeError("conv3d: input must be [C_in, X, Y, Z], got " + shape_str(input.shape()));
    if (kernel.rank() != 5) {
        throw ShapeError("conv3d: kernel must be [C_out, C_in, kx, ky, kz], got " + shape_str(kernel.shape()));
    }
    ConvGeometry g;
    g.c_in = input.dim(0);
    g.c_out = kernel.dim(0);
    if (kernel.dim(1) != g.c_in) {
        throw ShapeError("conv3d: channel mismatch on axis 1 of kernel (" + std::to_string(kernel.dim(1)) +
                         ") vs axis 0 of input (" + std::to_string(g.c_in) + ")");
    }
    static constexpr const char* kAxis[3] = {"x", "y", "z"};
    for (std::size_t a = 0; a < 3; ++a) {
        g.in[a] = input.dim(a + 1);
        g.k[a] = kernel.dim(a + 2);
        g.stride[a] = options.stride[a];
        g.pad[a] = options.padding[a];
        if (g.k[a] % 2 == 0) {
            throw ShapeError(std::string("conv3d: kernel extent on axis ") + kAxis[a] + " must be odd, got " +
                             std::to_string(g.k[a]));
        }
        if (g.stride[a] == 0) throw ShapeError(std::string("conv3d: zero stride on axis ") + kAxis[a]);
        const long span = static_cast<long>(g.in[a] + 2 * g.pad[a]) - static_cast<long>(g.k[a]);
        if (span < 0) {
            throw ShapeError(std::string("conv3d: kernel extent exceeds padded input on axis ") + kAxis[a]);
        }
        g.out[a] = static_cast<std::size_t>(span) / g.stride[a] + 1;
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.c_out)) {
        throw ShapeError("conv3d: bias must be [" + std::to_string(g.c_out) + "], got " + shape_str(bias.shape()));
    }
    return g;
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Conv3dOptions& options, const Tensor& bias) {
    const ConvGeometry g = make_geometry(input, kernel, options, bias);
    const std::size_t P = g.out_volume();
    const std::size_t taps = g.taps();
    const auto& kt = simd::kernels();
    const double* w = kernel.data().data();

    std::vector<double> out(g.c_out * P, 0.0);
    if (bias.defined()) {
        for (std::size_t co = 0; co < g.c_out; ++co) std::fill_n(out.begin() + co * P, P, bias.data()[co]);
    }
    std::vector<double> slab(g.c_in * P);
    for (std::size_t kx = 0; kx < g.k[0]; ++kx)
        for (std::size_t ky = 0; ky < g.k[1]; ++ky)
            for (std::size_t kz = 0; kz < g.k[2]; ++kz) {
                if (!g.tap_reaches_input(kx, ky, kz)) continue;
                gather_tap(g, input.data().data(), kx, ky, kz, slab.data());
                const std::size_t tap = (kx * g.k[1] + ky) * g.k[2] + kz;
                for (std::size_t co = 0; co < g.c_out; ++co)
                    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
                        const double wv = w[(co * g.c_in + ci) * taps + tap];
                        kt.axpy(wv, slab.data() + ci * P, out.data() + co * P, P);
                    }
            }

    std::vector<Tensor> inputs{input, kernel};
    if (bias.defined()) inputs.push_back(bias);
    const bool has_bias = bias.defined();
    return make_result("conv3d", {g.c_out, g.out[0], g.out[1], g.out[2]}, std::move(out), inputs,
                       [g, has_bias](Node& self) {
                           const std::size_t P = g.out_volume();
                           const std::size_t taps = g.taps();
                           const auto& kt = simd::kernels();
                           const double* in = self.inputs[0]->data.data();
                           const double* w = self.inputs[1]->data.data();
                           const double* go = self.grad.data();
                           double* g_in = input_grad(self, 0);
                           double* g_w = input_grad(self, 1);
                           if (has_bias) {
                               if (double* g_b = input_grad(self, 2)) {
                                   for (std::size_t co = 0; co < g.c_out; ++co) {
                                       double acc = 0.0;
                                       for (std::size_t p = 0; p < P; ++p) acc += go[co * P + p];
                                       g_b[co] += acc;
                                   }
                               }
                           }
                           if (!g_in && !g_w) return;
                           std::vector<double> slab(g.c_in * P);
                           for (std::size_t kx = 0; kx < g.k[0]; ++kx)
                               for (std::size_t ky = 0; ky < g.k[1]; ++ky)
                                   for (std::size_t kz = 0; kz < g.k[2]; ++kz) {
                                       if (!g.tap_reaches_input(kx, ky, kz)) continue;
                                       const std::size_t tap = (kx * g.k[1] + ky) * g.k[2] + kz;
                                       if (g_w) {
                                           gather_tap(g, in, kx, ky, kz, slab.data());
                                           for (std::size_t co = 0; co < g.c_out; ++co)
                                               for (std::size_t ci = 0; ci < g.c_in; ++ci)
                                                   g_w[(co * g.c_in + ci) * taps + tap] +=
                                                       kt.dot(go + co * P, slab.data() + ci * P, P);
                                       }
                                       if (g_in) {
                                           std::fill(slab.begin(), slab.end(), 0.0);
                                           for (std::size_t co = 0; co < g.c_out; ++co)
                                               for (std::size_t ci = 0; ci < g.c_in; ++ci)
                                                   kt.axpy(w[(co * g.c_in + ci) * taps + tap], go + co * P,
                                                           slab.data() + ci * P, P);
                                           scatter_tap(g, slab.data(), kx, ky, kz, g_in);
                                       }
                                   }
                       });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t padding, const Tensor& bias) {
    if (input.rank() != 3) throw ShapeError("conv2d: input must be [C, H, W], got " + shape_str(input.shape()));
    if (kernel.rank() != 4) {
        throw ShapeError("conv2d: kernel must be [C_out, C_in, kh, kw], got " + shape_str(kernel.shape()));
    }
    // Images ride on the last two axes so the contiguous row is the image width.
    const Tensor volume = reshape(input, {input.dim(0), 1, input.dim(1), input.dim(2)});
    const Tensor k5 = reshape(kernel, {kernel.dim(0), kernel.dim(1), 1, kernel.dim(2), kernel.dim(3)});
    Conv3dOptions options;
    options.padding = {0, padding, padding};
    const Tensor out = conv3d(volume, k5, options, bias);
    return reshape(out, {out.dim(0), out.dim(2), out.dim(3)});
}

}  // namespace vlscene
