#pragma once

// Coordinate-list sparse voxel tensors and rulebook-based sparse convolution.

#include <array>
#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "vlscene/tensor.hpp"

namespace vlscene::sparse {

struct Coord {
    std::int32_t x = 0, y = 0, z = 0;
    auto operator<=>(const Coord&) const = default;
    Coord operator+(const Coord& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Coord operator-(const Coord& o) const { return {x - o.x, y - o.y, z - o.z}; }
};

using Dims = std::array<std::int32_t, 3>;

inline bool inside(const Coord& c, const Dims& d) {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < d[0] && c.y < d[1] && c.z < d[2];
}

/// Active voxels P (sorted, unique, in bounds) with features F [N, C].
class SparseVoxelTensor {
public:
    SparseVoxelTensor(Dims dims, std::vector<Coord> coords, Tensor feats);

    const Dims& dims() const { return dims_; }
    const std::vector<Coord>& coords() const { return *coords_; }
    const Tensor& feats() const { return feats_; }
    std::size_t size() const { return coords_->size(); }
    std::size_t channels() const { return feats_.dim(1); }

    /// Row of `c` in coords(), if active.
    std::optional<std::uint32_t> find(const Coord& c) const;
    /// Same active set, new features [N, C'].
    SparseVoxelTensor with_feats(Tensor feats) const;
    bool same_layout(const SparseVoxelTensor& other) const;

private:
    using Index = std::unordered_map<std::int64_t, std::uint32_t>;

    Dims dims_;
    std::shared_ptr<const std::vector<Coord>> coords_;
    std::shared_ptr<const Index> index_;
    Tensor feats_;

    std::int64_t key(const Coord& c) const {
        return (static_cast<std::int64_t>(c.x) * dims_[1] + c.y) * dims_[2] + c.z;
    }
};

enum class ConvMode { submanifold, generative };

struct SparseKernel {
    std::vector<Coord> offsets;
    /// [K, C_out, C_in], one matrix per offset.
    Tensor weights;
    ConvMode mode = ConvMode::submanifold;
};

/// Offsets of a centred ex x ey x ez box (odd extents), x-major order.
std::vector<Coord> box_offsets(int ex, int ey, int ez);

// Branch patterns of the asymmetric block and the rank-1 aggregator.
inline constexpr std::array<int, 3> kVerticalPattern{3, 1, 3};
inline constexpr std::array<int, 3> kHorizontalPattern{1, 3, 3};
inline constexpr std::array<std::array<int, 3>, 3> kRank1Patterns{{{3, 1, 1}, {1, 3, 1}, {1, 1, 3}}};

/// Dense [C, X, Y, Z] -> active voxels whose max |feature| exceeds `threshold`.
SparseVoxelTensor sparsify(const Tensor& dense, double threshold);
/// Inverse scatter; inactive voxels are exactly zero.
Tensor densify(const SparseVoxelTensor& s);

/// out(p) = sum_k W_k * in(p + offset_k), over active inputs only.
SparseVoxelTensor sparse_conv(const SparseVoxelTensor& s, const SparseKernel& k);

/// Stride-2 generative conv with a 2x2x2 kernel: the output voxel q collects the
/// active inputs p with floor(p / 2) == q. `weights` is [8, C_out, C_in], tap
/// index (p.x % 2) * 4 + (p.y % 2) * 2 + p.z % 2. Output dims are ceil(dims / 2).
SparseVoxelTensor downsample_conv(const SparseVoxelTensor& s, const Tensor& weights);

/// Copies each coarse voxel's features to its children in `fine_layout`'s active set.
SparseVoxelTensor unpool_nearest(const SparseVoxelTensor& coarse, const SparseVoxelTensor& fine_layout);

SparseVoxelTensor add(const SparseVoxelTensor& a, const SparseVoxelTensor& b);
SparseVoxelTensor relu(const SparseVoxelTensor& s);

struct AsymmetricBlockParams {
    // Branch A: vertical then horizontal. Branch B: horizontal then vertical.
    Tensor vertical_a, horizontal_a;
    Tensor horizontal_b, vertical_b;
};

/// s + relu(h_a(relu(v_a(s)))) + relu(v_b(relu(h_b(s)))), submanifold convs.
SparseVoxelTensor asymmetric_residual_block(const SparseVoxelTensor& s, const AsymmetricBlockParams& p);

struct Rank1Params {
    Tensor along_x, along_y, along_z;  // [3, C, C] each
};

/// s * (sigmoid(conv_x(s)) + sigmoid(conv_y(s)) + sigmoid(conv_z(s))).
SparseVoxelTensor rank1_aggregate(const SparseVoxelTensor& s, const Rank1Params& p);

}  // namespace vlscene::sparse
