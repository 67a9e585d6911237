#include "vlscene/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vlscene/autograd.hpp"
#include "vlscene/error.hpp"
#include "vlscene/ops.hpp"
#include "vlscene/simd.hpp"

namespace vlscene::sparse {

using detail::input_grad;
using detail::make_result;
using detail::Node;

namespace {

std::string coord_str(const Coord& c) {
    return "(" + std::to_string(c.x) + ", " + std::to_string(c.y) + ", " + std::to_string(c.z) + ")";
}

struct Rule {
    std::uint32_t in;
    std::uint32_t out;
};

// rules[k] lists the (input row, output row) pairs linked by weight matrix k.
using Rulebook = std::vector<std::vector<Rule>>;

// out[o] += W_k * in[i] for every rule; differentiable in features and weights.
Tensor rulebook_conv(const char* op, const Tensor& feats, const Tensor& weights, std::shared_ptr<const Rulebook> rules,
                     std::size_t n_out) {
    const std::size_t c_in = feats.dim(1);
    const std::size_t c_out = weights.dim(1);
    const auto& kt = simd::kernels();
    std::vector<double> out(n_out * c_out, 0.0);
    const double* in = feats.data().data();
    const double* w = weights.data().data();
    for (std::size_t k = 0; k < rules->size(); ++k) {
        const double* wk = w + k * c_out * c_in;
        for (const Rule& r : (*rules)[k]) {
            const double* x = in + r.in * c_in;
            double* y = out.data() + r.out * c_out;
            for (std::size_t co = 0; co < c_out; ++co) y[co] += kt.dot(wk + co * c_in, x, c_in);
        }
    }
    return make_result(op, {n_out, c_out}, std::move(out), {feats, weights}, [rules, c_in, c_out](Node& self) {
        const auto& kt = simd::kernels();
        const double* in = self.inputs[0]->data.data();
        const double* w = self.inputs[1]->data.data();
        double* g_in = input_grad(self, 0);
        double* g_w = input_grad(self, 1);
        for (std::size_t k = 0; k < rules->size(); ++k) {
            const double* wk = w + k * c_out * c_in;
            for (const Rule& r : (*rules)[k]) {
                const double* go = self.grad.data() + r.out * c_out;
                for (std::size_t co = 0; co < c_out; ++co) {
                    if (go[co] == 0.0) continue;
                    if (g_in) kt.axpy(go[co], wk + co * c_in, g_in + r.in * c_in, c_in);
                    if (g_w) kt.axpy(go[co], in + r.in * c_in, g_w + (k * c_out + co) * c_in, c_in);
                }
            }
        }
    });
}

void check_weights(const char* op, const Tensor& weights, std::size_t taps, std::size_t c_in) {
    if (weights.rank() != 3 || weights.dim(0) != taps) {
        throw ShapeError(std::string(op) + ": weights must be [" + std::to_string(taps) + ", C_out, C_in], got " +
                         shape_str(weights.shape()));
    }
    if (weights.dim(2) != c_in) {
        throw ShapeError(std::string(op) + ": channel mismatch on axis 2 of weights (" +
                         std::to_string(weights.dim(2)) + ") vs input channels (" + std::to_string(c_in) + ")");
    }
}

SparseKernel pattern_kernel(const std::array<int, 3>& pattern, const Tensor& weights) {
    return SparseKernel{box_offsets(pattern[0], pattern[1], pattern[2]), weights, ConvMode::submanifold};
}

}  // namespace

SparseVoxelTensor::SparseVoxelTensor(Dims dims, std::vector<Coord> coords, Tensor feats)
    : dims_(dims), feats_(std::move(feats)) {
    for (int a = 0; a < 3; ++a) {
        if (dims_[a] <= 0) throw ShapeError("sparse tensor: non-positive extent on axis " + std::to_string(a));
    }
    if (feats_.rank() != 2 || feats_.dim(0) != coords.size()) {
        throw ShapeError("sparse tensor: features " + shape_str(feats_.shape()) + " do not match " +
                         std::to_string(coords.size()) + " coordinates on axis 0");
    }
    auto index = std::make_shared<Index>();
    index->reserve(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        if (!inside(coords[i], dims_)) throw ShapeError("sparse tensor: coordinate " + coord_str(coords[i]) + " outside dims");
        if (i > 0 && !(coords[i - 1] < coords[i])) {
            throw ShapeError("sparse tensor: coordinates not sorted and unique at row " + std::to_string(i));
        }
        index->emplace(key(coords[i]), static_cast<std::uint32_t>(i));
    }
    coords_ = std::make_shared<const std::vector<Coord>>(std::move(coords));
    index_ = std::move(index);
}

std::optional<std::uint32_t> SparseVoxelTensor::find(const Coord& c) const {
    if (!inside(c, dims_)) return std::nullopt;
    auto it = index_->find(key(c));
    if (it == index_->end()) return std::nullopt;
    return it->second;
}

SparseVoxelTensor SparseVoxelTensor::with_feats(Tensor feats) const {
    if (feats.rank() != 2 || feats.dim(0) != size()) {
        throw ShapeError("sparse tensor: replacement features " + shape_str(feats.shape()) + " do not match " +
                         std::to_string(size()) + " voxels");
    }
    SparseVoxelTensor out = *this;
    out.feats_ = std::move(feats);
    return out;
}

bool SparseVoxelTensor::same_layout(const SparseVoxelTensor& other) const {
    return dims_ == other.dims_ && (coords_ == other.coords_ || *coords_ == *other.coords_);
}

std::vector<Coord> box_offsets(int ex, int ey, int ez) {
    if (ex % 2 == 0 || ey % 2 == 0 || ez % 2 == 0 || ex < 1 || ey < 1 || ez < 1) {
        throw ShapeError("box_offsets: extents must be odd and positive");
    }
    std::vector<Coord> out;
    for (int x = -ex / 2; x <= ex / 2; ++x)
        for (int y = -ey / 2; y <= ey / 2; ++y)
            for (int z = -ez / 2; z <= ez / 2; ++z) out.push_back({x, y, z});
    return out;
}

SparseVoxelTensor sparsify(const Tensor& dense, double threshold) {
    if (dense.rank() != 4) throw ShapeError("sparsify: expected [C, X, Y, Z], got " + shape_str(dense.shape()));
    if (threshold < 0.0) throw ShapeError("sparsify: threshold must be >= 0");
    const std::size_t C = dense.dim(0);
    const Dims dims{static_cast<std::int32_t>(dense.dim(1)), static_cast<std::int32_t>(dense.dim(2)),
                    static_cast<std::int32_t>(dense.dim(3))};
    const std::size_t volume = dense.dim(1) * dense.dim(2) * dense.dim(3);
    std::vector<Coord> coords;
    std::vector<std::uint32_t> voxels;
    const auto v = dense.data();
    for (std::size_t p = 0; p < volume; ++p) {
        double peak = 0.0;
        for (std::size_t c = 0; c < C; ++c) peak = std::max(peak, std::abs(v[c * volume + p]));
        if (peak > threshold) {
            const auto yz = static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
            coords.push_back({static_cast<std::int32_t>(p / yz), static_cast<std::int32_t>((p / dims[2]) % dims[1]),
                              static_cast<std::int32_t>(p % dims[2])});
            voxels.push_back(static_cast<std::uint32_t>(p));
        }
    }
    std::vector<double> feats(voxels.size() * C);
    for (std::size_t i = 0; i < voxels.size(); ++i)
        for (std::size_t c = 0; c < C; ++c) feats[i * C + c] = v[c * volume + voxels[i]];
    Tensor f = make_result("sparsify", {voxels.size(), C}, std::move(feats), {dense},
                           [voxels, C, volume](Node& self) {
                               double* g = input_grad(self, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < voxels.size(); ++i)
                                   for (std::size_t c = 0; c < C; ++c)
                                       g[c * volume + voxels[i]] += self.grad[i * C + c];
                           });
    return SparseVoxelTensor(dims, std::move(coords), std::move(f));
}

Tensor densify(const SparseVoxelTensor& s) {
    const std::size_t C = s.channels();
    const Dims& d = s.dims();
    const std::size_t volume = static_cast<std::size_t>(d[0]) * d[1] * d[2];
    std::vector<std::uint32_t> voxels(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Coord& c = s.coords()[i];
        voxels[i] = static_cast<std::uint32_t>((static_cast<std::size_t>(c.x) * d[1] + c.y) * d[2] + c.z);
    }
    std::vector<double> out(C * volume, 0.0);
    const auto f = s.feats().data();
    for (std::size_t i = 0; i < voxels.size(); ++i)
        for (std::size_t c = 0; c < C; ++c) out[c * volume + voxels[i]] = f[i * C + c];
    return make_result("densify",
                       {C, static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[1]), static_cast<std::size_t>(d[2])},
                       std::move(out), {s.feats()}, [voxels, C, volume](Node& self) {
                           double* g = input_grad(self, 0);
                           if (!g) return;
                           for (std::size_t i = 0; i < voxels.size(); ++i)
                               for (std::size_t c = 0; c < C; ++c) g[i * C + c] += self.grad[c * volume + voxels[i]];
                       });
}

SparseVoxelTensor sparse_conv(const SparseVoxelTensor& s, const SparseKernel& k) {
    check_weights("sparse_conv", k.weights, k.offsets.size(), s.channels());
    {
        std::vector<Coord> sorted = k.offsets;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw ShapeError("sparse_conv: duplicate kernel offsets");
        }
    }
    auto rules = std::make_shared<Rulebook>(k.offsets.size());
    if (k.mode == ConvMode::submanifold) {
        for (std::size_t o = 0; o < s.size(); ++o) {
            for (std::size_t t = 0; t < k.offsets.size(); ++t) {
                if (auto i = s.find(s.coords()[o] + k.offsets[t])) {
                    (*rules)[t].push_back({*i, static_cast<std::uint32_t>(o)});
                }
            }
        }
        Tensor f = rulebook_conv("sparse_conv", s.feats(), k.weights, rules, s.size());
        return s.with_feats(std::move(f));
    }
    // Generative: every output reachable from an active input through some offset.
    std::vector<Coord> out_coords;
    for (const Coord& c : s.coords()) {
        for (const Coord& off : k.offsets) {
            const Coord q = c - off;
            if (inside(q, s.dims())) out_coords.push_back(q);
        }
    }
    std::sort(out_coords.begin(), out_coords.end());
    out_coords.erase(std::unique(out_coords.begin(), out_coords.end()), out_coords.end());
    SparseVoxelTensor layout(s.dims(), out_coords, Tensor::zeros({out_coords.size(), 0}));
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t t = 0; t < k.offsets.size(); ++t) {
            if (auto o = layout.find(s.coords()[i] - k.offsets[t])) {
                (*rules)[t].push_back({static_cast<std::uint32_t>(i), *o});
            }
        }
    }
    Tensor f = rulebook_conv("sparse_conv", s.feats(), k.weights, rules, out_coords.size());
    return SparseVoxelTensor(s.dims(), std::move(out_coords), std::move(f));
}

SparseVoxelTensor downsample_conv(const SparseVoxelTensor& s, const Tensor& weights) {
    check_weights("downsample_conv", weights, 8, s.channels());
    const Dims coarse{(s.dims()[0] + 1) / 2, (s.dims()[1] + 1) / 2, (s.dims()[2] + 1) / 2};
    std::vector<Coord> out_coords;
    out_coords.reserve(s.size());
    for (const Coord& c : s.coords()) out_coords.push_back({c.x / 2, c.y / 2, c.z / 2});
    // Sorted fine coordinates map to sorted parents, so unique() suffices.
    out_coords.erase(std::unique(out_coords.begin(), out_coords.end()), out_coords.end());
    std::sort(out_coords.begin(), out_coords.end());
    out_coords.erase(std::unique(out_coords.begin(), out_coords.end()), out_coords.end());
    SparseVoxelTensor layout(coarse, out_coords, Tensor::zeros({out_coords.size(), 0}));
    auto rules = std::make_shared<Rulebook>(8);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Coord& c = s.coords()[i];
        const std::size_t tap = static_cast<std::size_t>((c.x % 2) * 4 + (c.y % 2) * 2 + c.z % 2);
        (*rules)[tap].push_back({static_cast<std::uint32_t>(i), *layout.find({c.x / 2, c.y / 2, c.z / 2})});
    }
    Tensor f = rulebook_conv("downsample_conv", s.feats(), weights, rules, out_coords.size());
    return SparseVoxelTensor(coarse, std::move(out_coords), std::move(f));
}

SparseVoxelTensor unpool_nearest(const SparseVoxelTensor& coarse, const SparseVoxelTensor& fine_layout) {
    const Dims& fd = fine_layout.dims();
    if (coarse.dims() != Dims{(fd[0] + 1) / 2, (fd[1] + 1) / 2, (fd[2] + 1) / 2}) {
        throw ShapeError("unpool_nearest: coarse dims are not ceil(fine dims / 2)");
    }
    std::vector<std::uint32_t> parents(fine_layout.size());
    for (std::size_t i = 0; i < fine_layout.size(); ++i) {
        const Coord& c = fine_layout.coords()[i];
        auto p = coarse.find({c.x / 2, c.y / 2, c.z / 2});
        if (!p) throw ShapeError("unpool_nearest: voxel " + coord_str(c) + " has no active parent");
        parents[i] = *p;
    }
    return fine_layout.with_feats(gather_rows(coarse.feats(), parents));
}

SparseVoxelTensor add(const SparseVoxelTensor& a, const SparseVoxelTensor& b) {
    if (!a.same_layout(b)) throw ShapeError("sparse add: operands have different active sets");
    return a.with_feats(vlscene::add(a.feats(), b.feats()));
}

SparseVoxelTensor relu(const SparseVoxelTensor& s) { return s.with_feats(vlscene::relu(s.feats())); }

SparseVoxelTensor asymmetric_residual_block(const SparseVoxelTensor& s, const AsymmetricBlockParams& p) {
    auto conv = [](const SparseVoxelTensor& in, const std::array<int, 3>& pattern, const Tensor& w) {
        return sparse_conv(in, pattern_kernel(pattern, w));
    };
    const SparseVoxelTensor branch_a =
        relu(conv(relu(conv(s, kVerticalPattern, p.vertical_a)), kHorizontalPattern, p.horizontal_a));
    const SparseVoxelTensor branch_b =
        relu(conv(relu(conv(s, kHorizontalPattern, p.horizontal_b)), kVerticalPattern, p.vertical_b));
    if (branch_a.channels() != s.channels() || branch_b.channels() != s.channels()) {
        throw ShapeError("asymmetric_residual_block: branch output channels differ from input channels");
    }
    return add(add(s, branch_a), branch_b);
}

SparseVoxelTensor rank1_aggregate(const SparseVoxelTensor& s, const Rank1Params& p) {
    const Tensor* weights[3] = {&p.along_x, &p.along_y, &p.along_z};
    Tensor gate;
    for (int axis = 0; axis < 3; ++axis) {
        const SparseVoxelTensor branch = sparse_conv(s, pattern_kernel(kRank1Patterns[axis], *weights[axis]));
        if (branch.channels() != s.channels()) {
            throw ShapeError("rank1_aggregate: branch output channels differ from input channels");
        }
        const Tensor g = sigmoid(branch.feats());
        gate = gate.defined() ? vlscene::add(gate, g) : g;
    }
    return s.with_feats(mul(s.feats(), gate));
}

}  // namespace vlscene::sparse
