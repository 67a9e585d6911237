#include <algorithm>
#include <cmath>
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

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return;
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size()) {
        throw ShapeError(std::string(op) + ": rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    }
    for (std::size_t i = 0; i < sa.size(); ++i) {
        if (sa[i] != sb[i]) {
            throw ShapeError(std::string(op) + ": extent mismatch on axis " + std::to_string(i) + " (" +
                             std::to_string(sa[i]) + " vs " + std::to_string(sb[i]) + ")");
        }
    }
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const char* op, const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
    std::vector<double> out(a.numel());
    const auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
    return make_result(op, a.shape(), std::move(out), {a}, [deriv](Node& self) {
        double* g = input_grad(self, 0);
        if (!g) return;
        const auto& x = self.inputs[0]->data;
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * deriv(x[i], self.data[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.data().begin(), a.data().end());
    simd::kernels().add(b.data().data(), out.data(), out.size());
    return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (double* g = input_grad(self, k)) simd::kernels().add(self.grad.data(), g, self.grad.size());
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
        if (double* g = input_grad(self, 0)) simd::kernels().add(self.grad.data(), g, self.grad.size());
        if (double* g = input_grad(self, 1)) simd::kernels().axpy(-1.0, self.grad.data(), g, self.grad.size());
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
        const auto& x = self.inputs[0]->data;
        const auto& y = self.inputs[1]->data;
        if (double* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
        }
        if (double* g = input_grad(self, 1)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
    return make_result("scale", a.shape(), std::move(out), {a}, [factor](Node& self) {
        if (double* g = input_grad(self, 0)) simd::kernels().axpy(factor, self.grad.data(), g, self.grad.size());
    });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor safe_log(const Tensor& a, double floor) {
    return unary(
        "safe_log", a, [floor](double x) { return std::log(std::max(x, floor)); },
        [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor mul_channels(const Tensor& x, const Tensor& w) {
    if (w.rank() != 1 || x.rank() < 1 || x.dim(0) != w.dim(0)) {
        throw ShapeError("mul_channels: weights " + shape_str(w.shape()) + " do not match axis 0 of " +
                         shape_str(x.shape()));
    }
    const std::size_t channels = w.dim(0);
    const std::size_t inner = x.numel() / std::max<std::size_t>(channels, 1);
    std::vector<double> out(x.numel());
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < inner; ++i) out[c * inner + i] = x.data()[c * inner + i] * w.data()[c];
    }
    return make_result("mul_channels", x.shape(), std::move(out), {x, w}, [channels, inner](Node& self) {
        const auto& xv = self.inputs[0]->data;
        const auto& wv = self.inputs[1]->data;
        double* gx = input_grad(self, 0);
        double* gw = input_grad(self, 1);
        for (std::size_t c = 0; c < channels; ++c) {
            const double* go = self.grad.data() + c * inner;
            if (gx) simd::kernels().axpy(wv[c], go, gx + c * inner, inner);
            if (gw) gw[c] += simd::kernels().dot(go, xv.data() + c * inner, inner);
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
        if (double* g = input_grad(self, 0)) simd::kernels().add(self.grad.data(), g, self.grad.size());
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape shape = parts.front().shape();
    if (axis >= shape.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range");
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != shape.size()) throw ShapeError("concat: rank mismatch " + shape_str(s));
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != shape[i]) {
                throw ShapeError("concat: extent mismatch on axis " + std::to_string(i) + " (" +
                                 std::to_string(s[i]) + " vs " + std::to_string(shape[i]) + ")");
            }
        }
        total += s[axis];
    }
    shape[axis] = total;
    const AxisSplit whole = split_at("concat", shape, axis);
    std::vector<double> out(shape_numel(shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t ext = p.dim(axis);
        const std::size_t block = ext * whole.inner;
        for (std::size_t o = 0; o < whole.outer; ++o) {
            std::copy_n(p.data().begin() + o * block, block,
                        out.begin() + o * whole.extent * whole.inner + offset * whole.inner);
        }
        offsets.push_back(offset);
        offset += ext;
    }
    return make_result("concat", shape, std::move(out), parts, [whole, offsets](Node& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            double* g = input_grad(self, k);
            if (!g) continue;
            const std::size_t block = self.inputs[k]->data.size() / whole.outer;
            for (std::size_t o = 0; o < whole.outer; ++o) {
                simd::kernels().add(self.grad.data() + o * whole.extent * whole.inner + offsets[k] * whole.inner,
                                    g + o * block, block);
            }
        }
    });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    const AxisSplit s = split_at("slice", a.shape(), axis);
    if (begin >= end || end > s.extent) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for extent " + std::to_string(s.extent) + " on axis " + std::to_string(axis));
    }
    Shape shape = a.shape();
    shape[axis] = end - begin;
    const std::size_t block = (end - begin) * s.inner;
    std::vector<double> out(s.outer * block);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(a.data().begin() + (o * s.extent + begin) * s.inner, block, out.begin() + o * block);
    }
    return make_result("slice", std::move(shape), std::move(out), {a}, [s, begin, block](Node& self) {
        double* g = input_grad(self, 0);
        if (!g) return;
        for (std::size_t o = 0; o < s.outer; ++o) {
            simd::kernels().add(self.grad.data() + o * block, g + (o * s.extent + begin) * s.inner, block);
        }
    });
}

Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> rows) {
    if (a.rank() != 2) throw ShapeError("gather_rows: expected [N, C], got " + shape_str(a.shape()));
    const std::size_t n = a.dim(0);
    const std::size_t c = a.dim(1);
    std::vector<double> out(rows.size() * c);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= n) throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range on axis 0");
        std::copy_n(a.data().begin() + rows[i] * c, c, out.begin() + i * c);
    }
    std::vector<std::uint32_t> saved(rows.begin(), rows.end());
    return make_result("gather_rows", {rows.size(), c}, std::move(out), {a}, [saved, c](Node& self) {
        double* g = input_grad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < saved.size(); ++i) {
            simd::kernels().add(self.grad.data() + i * c, g + saved[i] * c, c);
        }
    });
}

Tensor upsample_nearest(const Tensor& a, std::size_t factor) {
    if (a.rank() != 4) throw ShapeError("upsample_nearest: expected [C, X, Y, Z], got " + shape_str(a.shape()));
    if (factor == 0) throw ShapeError("upsample_nearest: factor must be positive");
    const std::size_t C = a.dim(0), X = a.dim(1), Y = a.dim(2), Z = a.dim(3);
    const std::size_t X2 = X * factor, Y2 = Y * factor, Z2 = Z * factor;
    std::vector<double> out(C * X2 * Y2 * Z2);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t x = 0; x < X2; ++x)
            for (std::size_t y = 0; y < Y2; ++y)
                for (std::size_t z = 0; z < Z2; ++z)
                    out[((c * X2 + x) * Y2 + y) * Z2 + z] =
                        a.data()[((c * X + x / factor) * Y + y / factor) * Z + z / factor];
    return make_result("upsample_nearest", {C, X2, Y2, Z2}, std::move(out), {a},
                       [C, X, Y, Z, factor](Node& self) {
                           double* g = input_grad(self, 0);
                           if (!g) return;
                           const std::size_t X2 = X * factor, Y2 = Y * factor, Z2 = Z * factor;
                           for (std::size_t c = 0; c < C; ++c)
                               for (std::size_t x = 0; x < X2; ++x)
                                   for (std::size_t y = 0; y < Y2; ++y)
                                       for (std::size_t z = 0; z < Z2; ++z)
                                           g[((c * X + x / factor) * Y + y / factor) * Z + z / factor] +=
                                               self.grad[((c * X2 + x) * Y2 + y) * Z2 + z];
                       });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    return make_result("sum", {}, {acc}, {a}, [](Node& self) {
        double* g = input_grad(self, 0);
        if (!g) return;
        const double go = self.grad[0];
        for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) g[i] += go;
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean: empty reduction");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor global_avg_pool(const Tensor& a) {
    if (a.rank() < 2) throw ShapeError("global_avg_pool: expected [C, ...], got " + shape_str(a.shape()));
    const std::size_t channels = a.dim(0);
    const std::size_t inner = a.numel() / channels;
    if (inner == 0) throw ShapeError("global_avg_pool: empty spatial extent");
    std::vector<double> out(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i) acc += a.data()[c * inner + i];
        out[c] = acc / static_cast<double>(inner);
    }
    return make_result("global_avg_pool", {channels}, std::move(out), {a}, [channels, inner](Node& self) {
        double* g = input_grad(self, 0);
        if (!g) return;
        for (std::size_t c = 0; c < channels; ++c) {
            const double go = self.grad[c] / static_cast<double>(inner);
            for (std::size_t i = 0; i < inner; ++i) g[c * inner + i] += go;
        }
    });
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
    require_same_shape("l1_mean", a, b);
    if (a.numel() == 0) throw ShapeError("l1_mean: empty reduction");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += std::abs(a.data()[i] - b.data()[i]);
    const double n = static_cast<double>(a.numel());
    return make_result("l1_mean", {}, {acc / n}, {a, b}, [n](Node& self) {
        const auto& x = self.inputs[0]->data;
        const auto& y = self.inputs[1]->data;
        const double go = self.grad[0] / n;
        double* ga = input_grad(self, 0);
        double* gb = input_grad(self, 1);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - y[i];
            const double s = d > 0.0 ? go : (d < 0.0 ? -go : 0.0);
            if (ga) ga[i] += s;
            if (gb) gb[i] -= s;
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    if (b.dim(0) != K) {
        throw ShapeError("matmul: inner extents differ (axis 1 of lhs is " + std::to_string(K) +
                         ", axis 0 of rhs is " + std::to_string(b.dim(0)) + ")");
    }
    std::vector<double> out(M * N, 0.0);
    const auto& kt = simd::kernels();
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) kt.axpy(a.data()[i * K + k], b.data().data() + k * N, out.data() + i * N, N);
    return make_result("matmul", {M, N}, std::move(out), {a, b}, [M, K, N](Node& self) {
        const auto& av = self.inputs[0]->data;
        const auto& bv = self.inputs[1]->data;
        const auto& kt = simd::kernels();
        if (double* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) ga[i * K + k] += kt.dot(self.grad.data() + i * N, bv.data() + k * N, N);
        }
        if (double* gb = input_grad(self, 1)) {
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) kt.axpy(av[i * K + k], self.grad.data() + i * N, gb + k * N, N);
        }
    });
}

namespace {

// Stabilized softmax of each slice along the split axis, written into `out`.
void softmax_slices(std::span<const double> in, const AxisSplit& s, std::span<double> out) {
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double peak = in[base];
            for (std::size_t k = 1; k < s.extent; ++k) peak = std::max(peak, in[base + k * s.inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < s.extent; ++k) {
                const double e = std::exp(in[base + k * s.inner] - peak);
                out[base + k * s.inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
        }
    }
}

}  // namespace

Tensor softmax(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_at("softmax", a.shape(), axis);
    std::vector<double> out(a.numel());
    softmax_slices(a.data(), s, out);
    return make_result("softmax", a.shape(), std::move(out), {a}, [s](Node& self) {
        double* g = input_grad(self, 0);
        if (!g) return;
        const auto& y = self.data;
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double inner_product = 0.0;
                for (std::size_t k = 0; k < s.extent; ++k) {
                    inner_product += self.grad[base + k * s.inner] * y[base + k * s.inner];
                }
                for (std::size_t k = 0; k < s.extent; ++k) {
                    const std::size_t idx = base + k * s.inner;
                    g[idx] += y[idx] * (self.grad[idx] - inner_product);
                }
            }
        }
    });
}

Tensor soft_cross_entropy(const Tensor& pred_logits, const Tensor& target_probs, std::size_t axis) {
    require_same_shape("soft_cross_entropy", pred_logits, target_probs);
    const AxisSplit s = split_at("soft_cross_entropy", pred_logits.shape(), axis);
    const std::size_t positions = s.outer * s.inner;
    if (positions == 0) throw ShapeError("soft_cross_entropy: empty reduction");
    std::vector<double> probs(pred_logits.numel());
    softmax_slices(pred_logits.data(), s, probs);
    const auto t = target_probs.data();
    double acc = 0.0;
    for (std::size_t idx = 0; idx < probs.size(); ++idx) {
        if (t[idx] != 0.0) acc -= t[idx] * std::log(probs[idx]);
    }
    const double n = static_cast<double>(positions);
    return make_result(
        "soft_cross_entropy", {}, {acc / n}, {pred_logits, target_probs},
        [s, n, probs = std::move(probs)](Node& self) {
            const double go = self.grad[0] / n;
            const auto& tv = self.inputs[1]->data;
            if (double* gp = input_grad(self, 0)) {
                for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t i = 0; i < s.inner; ++i) {
                        const std::size_t base = o * s.extent * s.inner + i;
                        double mass = 0.0;
                        for (std::size_t k = 0; k < s.extent; ++k) mass += tv[base + k * s.inner];
                        for (std::size_t k = 0; k < s.extent; ++k) {
                            const std::size_t idx = base + k * s.inner;
                            gp[idx] += go * (mass * probs[idx] - tv[idx]);
                        }
                    }
                }
            }
            if (double* gt = input_grad(self, 1)) {
                for (std::size_t idx = 0; idx < probs.size(); ++idx) gt[idx] -= go * std::log(probs[idx]);
            }
        });
}

Tensor hard_cross_entropy(const Tensor& pred_logits, std::span<const std::int32_t> labels, std::size_t axis,
                          std::int32_t ignore_label, std::span<const double> class_weights) {
    const AxisSplit s = split_at("hard_cross_entropy", pred_logits.shape(), axis);
    if (labels.size() != s.outer * s.inner) {
        throw ShapeError("hard_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(s.outer * s.inner) + " positions");
    }
    if (!class_weights.empty() && class_weights.size() != s.extent) {
        throw ShapeError("hard_cross_entropy: " + std::to_string(class_weights.size()) + " class weights for " +
                         std::to_string(s.extent) + " classes");
    }
    std::vector<double> probs(pred_logits.numel());
    softmax_slices(pred_logits.data(), s, probs);
    double acc = 0.0;
    double total_weight = 0.0;
    for (std::size_t p = 0; p < labels.size(); ++p) {
        const std::int32_t label = labels[p];
        if (label == ignore_label) continue;
        if (label < 0 || static_cast<std::size_t>(label) >= s.extent) {
            throw ShapeError("hard_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                             std::to_string(s.extent - 1) + "] at position " + std::to_string(p));
        }
        const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(label)];
        const std::size_t o = p / s.inner, i = p % s.inner;
        acc -= w * std::log(probs[(o * s.extent + static_cast<std::size_t>(label)) * s.inner + i]);
        total_weight += w;
    }
    if (total_weight <= 0.0) throw Error("hard_cross_entropy: every position is ignored (empty reduction)");
    std::vector<std::int32_t> saved_labels(labels.begin(), labels.end());
    std::vector<double> saved_weights(class_weights.begin(), class_weights.end());
    return make_result(
        "hard_cross_entropy", {}, {acc / total_weight}, {pred_logits},
        [s, ignore_label, total_weight, probs = std::move(probs), saved_labels = std::move(saved_labels),
         saved_weights = std::move(saved_weights)](Node& self) {
            double* g = input_grad(self, 0);
            if (!g) return;
            const double go = self.grad[0] / total_weight;
            for (std::size_t p = 0; p < saved_labels.size(); ++p) {
                const std::int32_t label = saved_labels[p];
                if (label == ignore_label) continue;
                const double w = saved_weights.empty() ? 1.0 : saved_weights[static_cast<std::size_t>(label)];
                const std::size_t o = p / s.inner, i = p % s.inner;
                for (std::size_t k = 0; k < s.extent; ++k) {
                    const std::size_t idx = (o * s.extent + k) * s.inner + i;
                    g[idx] += go * w * (probs[idx] - (k == static_cast<std::size_t>(label) ? 1.0 : 0.0));
                }
            }
        });
}

}  // namespace vlscene
