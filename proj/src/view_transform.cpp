#include "vlscene/view_transform.hpp"

#include <cmath>

#include "vlscene/autograd.hpp"
#include "vlscene/error.hpp"
#include "vlscene/ops.hpp"

namespace vlscene::view {

using detail::input_grad;
using detail::make_result;
using detail::Node;

void CameraModel::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera: focal lengths must be positive");
    if (height == 0 || width == 0) throw ConfigError("camera: empty image extents");
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double d = 0.0;
            for (int k = 0; k < 3; ++k) d += pose[i * 4 + k] * pose[j * 4 + k];
            if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-9) throw ConfigError("camera: pose rotation is not orthonormal");
        }
    }
    const double det = pose[0] * (pose[5] * pose[10] - pose[6] * pose[9]) -
                       pose[1] * (pose[4] * pose[10] - pose[6] * pose[8]) +
                       pose[2] * (pose[4] * pose[9] - pose[5] * pose[8]);
    if (std::abs(det - 1.0) > 1e-9) throw ConfigError("camera: pose rotation has det " + std::to_string(det));
    if (pose[12] != 0.0 || pose[13] != 0.0 || pose[14] != 0.0 || pose[15] != 1.0) {
        throw ConfigError("camera: pose last row must be 0 0 0 1");
    }
    for (std::size_t i = 0; i < depth_bins.size(); ++i) {
        if (!(depth_bins[i] > 0.0) || (i > 0 && !(depth_bins[i] > depth_bins[i - 1]))) {
            throw ConfigError("camera: depth bins must be positive and strictly increasing");
        }
    }
}

Vec3 CameraModel::back_project(double u, double v, double depth) const {
    const Vec3 c{(u + 0.5 - cx) / fx * depth, (v + 0.5 - cy) / fy * depth, depth};
    Vec3 p;
    for (int i = 0; i < 3; ++i) p[i] = pose[i * 4] * c[0] + pose[i * 4 + 1] * c[1] + pose[i * 4 + 2] * c[2] + pose[i * 4 + 3];
    return p;
}

Vec3 CameraModel::to_camera(const Vec3& p) const {
    const Vec3 d{p[0] - pose[3], p[1] - pose[7], p[2] - pose[11]};
    Vec3 c;
    for (int i = 0; i < 3; ++i) c[i] = pose[i] * d[0] + pose[4 + i] * d[1] + pose[8 + i] * d[2];
    return c;
}

std::vector<double> uniform_depth_bins(std::size_t count, double near, double far) {
    if (count == 0 || !(far > near)) throw ConfigError("depth bins: need count > 0 and far > near");
    std::vector<double> bins(count);
    const double step = (far - near) / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) bins[i] = near + (static_cast<double>(i) + 0.5) * step;
    return bins;
}

Mat4 forward_looking_pose(const Vec3& position, double pitch) {
    const double c = std::cos(pitch), s = std::sin(pitch);
    // Columns: camera right, down, forward expressed in scene axes.
    return {0, -s, c, position[0], -1, 0, 0, position[1], 0, -c, -s, position[2], 0, 0, 0, 1};
}

void VoxelGridSpec::validate() const {
    if (!(voxel_size > 0.0)) throw ConfigError("grid: voxel size must be positive");
    for (std::size_t e : extents) {
        if (e == 0) throw ConfigError("grid: extents must be >= 1");
    }
}

std::int64_t VoxelGridSpec::locate(const Vec3& p) const {
    std::int64_t idx[3];
    for (int a = 0; a < 3; ++a) {
        const double f = std::floor((p[a] - origin[a]) / voxel_size);
        if (!(f >= 0.0) || f >= static_cast<double>(extents[a])) return -1;
        idx[a] = static_cast<std::int64_t>(f);
    }
    return (idx[0] * static_cast<std::int64_t>(extents[1]) + idx[1]) * static_cast<std::int64_t>(extents[2]) + idx[2];
}

SplatTable SplatTable::build(const CameraModel& cam, const VoxelGridSpec& grid) {
    cam.validate();
    if (cam.depth_bins.empty()) throw ConfigError("camera: no depth bins");
    grid.validate();
    SplatTable t;
    t.bins = cam.depth_bins.size();
    t.height = cam.height;
    t.width = cam.width;
    t.volume = grid.volume();
    t.voxel.resize(t.bins * t.height * t.width);
    for (std::size_t d = 0; d < t.bins; ++d)
        for (std::size_t v = 0; v < t.height; ++v)
            for (std::size_t u = 0; u < t.width; ++u)
                t.voxel[(d * t.height + v) * t.width + u] = grid.locate(
                    cam.back_project(static_cast<double>(u), static_cast<double>(v), cam.depth_bins[d]));
    return t;
}

std::size_t SplatTable::in_bounds() const {
    std::size_t n = 0;
    for (auto v : voxel) n += v >= 0;
    return n;
}

Tensor lift_splat(const Tensor& features, const Tensor& depth, const SplatTable& table,
                  const std::array<std::size_t, 3>& extents) {
    if (features.rank() != 3) throw ShapeError("lift_splat: features must be [C, H, W], got " + shape_str(features.shape()));
    if (depth.shape() != Shape{table.bins, table.height, table.width}) {
        throw ShapeError("lift_splat: depth " + shape_str(depth.shape()) + " does not match the camera table " +
                         shape_str({table.bins, table.height, table.width}));
    }
    if (features.dim(1) != table.height) throw ShapeError("lift_splat: features height mismatch");
    if (features.dim(2) != table.width) throw ShapeError("lift_splat: features width mismatch");
    if (extents[0] * extents[1] * extents[2] != table.volume) throw ShapeError("lift_splat: grid extents mismatch");
    const std::size_t C = features.dim(0), hw = table.height * table.width, vol = table.volume;
    const auto f = features.data();
    const auto dd = depth.data();
    std::vector<double> out(C * vol, 0.0);
    for (std::size_t d = 0; d < table.bins; ++d) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::int64_t vox = table.voxel[d * hw + p];
            if (vox < 0) continue;
            const double w = dd[d * hw + p];
            for (std::size_t c = 0; c < C; ++c) out[c * vol + static_cast<std::size_t>(vox)] += w * f[c * hw + p];
        }
    }
    // The table is shared by value so cached geometry survives the caller.
    auto voxel = std::make_shared<const std::vector<std::int64_t>>(table.voxel);
    const std::size_t bins = table.bins;
    return make_result("lift_splat", {C, extents[0], extents[1], extents[2]}, std::move(out), {features, depth},
                       [voxel, bins, C, hw, vol](Node& self) {
                           const auto& fv = self.inputs[0]->data;
                           const auto& dv = self.inputs[1]->data;
                           double* gf = input_grad(self, 0);
                           double* gd = input_grad(self, 1);
                           const auto& g = self.grad;
                           for (std::size_t d = 0; d < bins; ++d) {
                               for (std::size_t p = 0; p < hw; ++p) {
                                   const std::int64_t vox = (*voxel)[d * hw + p];
                                   if (vox < 0) continue;
                                   const std::size_t o = static_cast<std::size_t>(vox);
                                   const double w = dv[d * hw + p];
                                   double acc = 0.0;
                                   for (std::size_t c = 0; c < C; ++c) {
                                       const double go = g[c * vol + o];
                                       if (gf) gf[c * hw + p] += w * go;
                                       acc += fv[c * hw + p] * go;
                                   }
                                   if (gd) gd[d * hw + p] += acc;
                               }
                           }
                       });
}

Tensor lift_splat(const Tensor& features, const Tensor& depth, const CameraModel& cam, const VoxelGridSpec& grid) {
    return lift_splat(features, depth, SplatTable::build(cam, grid), grid.extents);
}

ContextHeadParams ContextHeadParams::init(init::Rng& rng, std::size_t c_in, std::size_t c_out) {
    return {init::conv(rng, {c_out, c_in, 3, 3}, "context.w1"), init::zeros({c_out}, "context.b1"),
            init::conv(rng, {c_out, c_out, 1, 1}, "context.w2", 0.5), init::zeros({c_out}, "context.b2")};
}

DepthHeadParams DepthHeadParams::init(init::Rng& rng, std::size_t c_in, std::size_t hidden, std::size_t bins) {
    return {init::conv(rng, {hidden, c_in, 3, 3}, "depth.w1"), init::zeros({hidden}, "depth.b1"),
            init::conv(rng, {bins, hidden, 1, 1}, "depth.w2", 0.5), init::zeros({bins}, "depth.b2")};
}

Tensor context_head(const Tensor& image, const ContextHeadParams& p) {
    return conv2d(relu(conv2d(image, p.w1, 1, p.b1)), p.w2, 0, p.b2);
}

Tensor depth_head(const Tensor& image, const DepthHeadParams& p) {
    return softmax(conv2d(relu(conv2d(image, p.w1, 1, p.b1)), p.w2, 0, p.b2), 0);
}

}  // namespace vlscene::view
