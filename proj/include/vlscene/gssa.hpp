#pragma once

// Geometric-semantic sparse awareness: neighbourhood propagation (dense, bias
// free), sparse semantic interaction and the upsampling output head.

#include <array>
#include <vector>

#include "vlscene/init.hpp"
#include "vlscene/sparse.hpp"
#include "vlscene/tensor.hpp"

namespace vlscene::gssa {

struct NgpParams {
    // One (7^3, 3^3) pair per repeat, [C, C, k, k, k], no bias.
    std::vector<Tensor> large, small;
};

struct SsiParams {
    Tensor down1, down2;  // [8, C1, C0], [8, C2, C1]
    sparse::AsymmetricBlockParams block1, block2;
    Tensor up2, up1;  // [27, C1, C2], [27, C0, C1]
    sparse::Rank1Params rank1;  // at C0
};

struct HeadParams {
    Tensor weight;  // [M + 1, C, 1, 1, 1]
    Tensor bias;    // [M + 1]
};

/// Channel widths: ssi[0] is the voxel feature width C.
struct Widths {
    std::size_t channels = 8;
    std::array<std::size_t, 3> ssi{8, 16, 32};
    std::size_t classes = 4;  // M + 1
    std::size_t ngp_repeats = 1;
};

struct Params {
    NgpParams ngp;
    SsiParams ssi;
    HeadParams head;

    static Params init(init::Rng& rng, const Widths& w);
    std::vector<Tensor> tensors() const;
};

/// V + relu(conv3(relu(conv7(V)))) per repeat; "same" padding, stride 1, no bias.
Tensor ngp(const Tensor& v, const NgpParams& p);

/// sparsify -> (down + asymmetric block) x2 -> (unpool + 3^3 submanifold conv +
/// skip add) x2 -> rank-1 aggregation -> densify. Spatial extents must be
/// divisible by 4; the result is zero outside the initial active set.
Tensor ssi(const Tensor& v, const SsiParams& p, double threshold);

/// Nearest 2x upsampling per axis and a per-voxel linear projection to M + 1 logits.
Tensor output_head(const Tensor& v, const HeadParams& p);

/// Parameter count of GSSA at the given widths.
std::size_t param_count(const Widths& w);
/// Dense 3D ResNet reference at widths C, 2C, 4C: per level two basic blocks of
/// two 3^3 convs, joined by 3^3 down and up convs.
std::size_t resnet3d_param_count(std::size_t channels);

}  // namespace vlscene::gssa
