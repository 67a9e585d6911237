#pragma once

// Procedural toy scenes: a ground slab, boxes and poles in a label grid, seen
// by one forward-looking camera. Each sample carries a flat-shaded feature
// image, ray-cast depth and a synthetic vision-language teacher bundle.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vlscene/labels.hpp"
#include "vlscene/tensor.hpp"
#include "vlscene/view_transform.hpp"
#include "vlscene/vlgd.hpp"

namespace vlscene::scene {

inline constexpr std::uint8_t kEmpty = 0, kGround = 1, kBox = 2, kPole = 3;

/// Axis-aligned block of label voxels: [min, min + size).
struct ObjectSpec {
    std::uint8_t label = kBox;
    std::array<std::size_t, 3> min{0, 0, 0};
    std::array<std::size_t, 3> size{1, 1, 1};
};

struct SceneSpec {
    view::VoxelGridSpec grid{{1.0, -4.0, -1.0}, 0.25, {32, 32, 8}};
    std::vector<std::string> class_names{"empty", "ground", "box", "pole"};

    // Camera: forward-looking pinhole.
    view::Vec3 camera_position{0.0, 0.0, 1.0};
    double camera_pitch = 0.25;
    double focal = 16.0;
    std::size_t image_height = 32, image_width = 32;

    bool ground = true;
    /// Target share of label voxels per class, met greedily with random objects.
    double box_fraction = 0.04, pole_fraction = 0.01;
    /// When non-empty, these objects replace the random ones.
    std::vector<ObjectSpec> objects;
    /// Random objects snap to blocks of this many label voxels; the ground is one block thick.
    std::size_t block = 2;
    std::size_t max_attempts = 400;

    bool ignore_outside_frustum = true;
    double image_noise = 0.05;
    std::size_t teacher_channels = 8, teacher_height = 16, teacher_width = 16;
    double teacher_noise = 0.3;
    /// Seed of the class text embeddings; shared by every scene.
    std::uint64_t text_seed = 1234;

    std::size_t num_classes() const { return class_names.size(); }
    /// Throws ConfigError on inconsistent settings.
    void validate() const;
    view::CameraModel camera() const;
    /// Stable key=value rendering; the dataset hash is taken over it.
    std::string canonical() const;
};

struct SceneSample {
    std::string id;
    Tensor image;      // [4, H, W]: class colour (3) and fog
    Tensor gt_depth;   // [H, W], metres of camera depth; 0 where no surface is hit
    LabelGrid labels;  // [X, Y, Z]
    vlgd::TeacherBundle teacher;
    view::CameraModel camera;
};

/// Deterministic for (spec, seed). Throws Error when the requested objects do not fit.
SceneSample generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Occupancy without ignore marks (objects and ground only).
LabelGrid build_labels(const SceneSpec& spec, std::uint64_t seed);

struct RayHit {
    double depth = 0.0;  // ray parameter of the first occupied voxel; 0 when missed
    std::uint8_t label = kEmpty;
};

/// First occupied voxel along p(t) = origin + t * dir, t >= 0, by grid traversal.
RayHit cast_ray(const LabelGrid& labels, const view::VoxelGridSpec& grid, const view::Vec3& origin,
                const view::Vec3& dir);

/// Orthonormal class embeddings [Q, C_t] from a fixed seed.
Tensor text_embeddings(std::size_t classes, std::size_t channels, std::uint64_t seed);

/// Per-sample seed used by `generate_dataset`.
std::uint64_t sample_seed(std::uint64_t dataset_seed, std::size_t index);
std::vector<SceneSample> generate_dataset(const SceneSpec& spec, std::size_t count, std::uint64_t seed);
/// Hash binding a dataset to the spec, count and seed that produced it.
std::uint64_t dataset_hash(const SceneSpec& spec, std::size_t count, std::uint64_t seed);

// VLSC label grids: "VLSC" | version u32 | extents 3 x u32 | dtype u8 (1 = u8, 2 = u16) | payload.
inline constexpr std::uint32_t kVlscVersion = 1;
std::vector<std::uint8_t> encode_labels(const LabelGrid& labels, std::uint8_t dtype = 1);
LabelGrid decode_labels(const std::vector<std::uint8_t>& bytes, const std::string& source = "VLSC");
void write_labels(const std::filesystem::path& path, const LabelGrid& labels);
LabelGrid read_labels(const std::filesystem::path& path);

struct Dataset {
    std::uint64_t scene_hash = 0;
    std::vector<SceneSample> samples;
};

/// Writes manifest.json plus one VLFT/VLSC/teacher set per sample.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace vlscene::scene
