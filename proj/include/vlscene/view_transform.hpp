#pragma once

// Camera geometry, the 2D depth/context heads and the lift-splat projection of
// image features into a voxel volume.

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "vlscene/init.hpp"
#include "vlscene/tensor.hpp"

namespace vlscene::view {

using Vec3 = std::array<double, 3>;
/// Row-major 4x4 homogeneous transform.
using Mat4 = std::array<double, 16>;

/// Pinhole camera. Camera frame: x right, y down, z forward; depth is the
/// camera-frame z. Pixel (u, v) has its centre at (u + 0.5, v + 0.5).
struct CameraModel {
    double fx = 16.0, fy = 16.0, cx = 16.0, cy = 16.0;
    Mat4 pose{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};  // camera -> scene
    std::size_t height = 32, width = 32;
    std::vector<double> depth_bins;  // bin-centre depths

    /// Throws ConfigError unless intrinsics are positive, the pose is rigid
    /// (orthonormal rotation within 1e-9, det +1) and bins strictly increase.
    /// Scene cameras carry no bins; the splat table requires them.
    void validate() const;
    /// Scene point seen at pixel centre (u, v) at camera depth `depth`.
    Vec3 back_project(double u, double v, double depth) const;
    /// Camera-frame coordinates of a scene point.
    Vec3 to_camera(const Vec3& p) const;
};

/// `count` bin centres evenly covering [near, far].
std::vector<double> uniform_depth_bins(std::size_t count, double near, double far);

/// Camera at `position` looking along +x (scene z up), pitched down by `pitch` radians.
Mat4 forward_looking_pose(const Vec3& position, double pitch);

struct VoxelGridSpec {
    Vec3 origin{0, 0, 0};
    double voxel_size = 1.0;
    std::array<std::size_t, 3> extents{1, 1, 1};

    void validate() const;
    std::size_t volume() const { return extents[0] * extents[1] * extents[2]; }
    /// Linear index of the voxel containing `p` (floor), or -1 outside.
    std::int64_t locate(const Vec3& p) const;
};

/// Frustum point (bin, pixel) -> voxel index, fixed for a camera/grid pair.
struct SplatTable {
    std::size_t bins = 0, height = 0, width = 0;
    std::size_t volume = 0;
    std::vector<std::int64_t> voxel;  // [bins * H * W], -1 when outside the grid

    static SplatTable build(const CameraModel& cam, const VoxelGridSpec& grid);
    std::size_t in_bounds() const;
};

/// V[:, voxel(d, v, u)] += D[d, v, u] * F[:, v, u]; output [C, X, Y, Z].
Tensor lift_splat(const Tensor& features, const Tensor& depth, const SplatTable& table,
                  const std::array<std::size_t, 3>& extents);
Tensor lift_splat(const Tensor& features, const Tensor& depth, const CameraModel& cam, const VoxelGridSpec& grid);

struct ContextHeadParams {
    Tensor w1, b1, w2, b2;  // [C_s, C, 3, 3], [C_s, C_s, 1, 1]
    static ContextHeadParams init(init::Rng& rng, std::size_t c_in, std::size_t c_out);
    std::vector<Tensor> tensors() const { return {w1, b1, w2, b2}; }
};

struct DepthHeadParams {
    Tensor w1, b1, w2, b2;  // [C_h, C, 3, 3], [D_bins, C_h, 1, 1]
    static DepthHeadParams init(init::Rng& rng, std::size_t c_in, std::size_t hidden, std::size_t bins);
    std::vector<Tensor> tensors() const { return {w1, b1, w2, b2}; }
};

/// conv3x3 -> relu -> conv1x1.
Tensor context_head(const Tensor& image, const ContextHeadParams& p);
/// conv3x3 -> relu -> conv1x1 -> softmax over bins.
Tensor depth_head(const Tensor& image, const DepthHeadParams& p);

}  // namespace vlscene::view
