#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "test_util.hpp"
#include "vlscene/binary_io.hpp"
#include "vlscene/error.hpp"
#include "vlscene/scene_sim.hpp"
#include "vlscene/vlgd.hpp"

using namespace vlscene;
using namespace vlscene::testing;
using scene::SceneSpec;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("vlscene_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

view::Vec3 pixel_ray(const view::CameraModel& cam, double u, double v) {
    const auto p = cam.back_project(u, v, 1.0);
    return {p[0] - cam.pose[3], p[1] - cam.pose[7], p[2] - cam.pose[11]};
}

/// Slab test against one axis-aligned box; entry parameter or NaN on a miss.
double slab_entry(const view::Vec3& o, const view::Vec3& d, const view::Vec3& lo, const view::Vec3& hi) {
    double t0 = 0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t0 < t1 ? t0 : std::nan("");
}

/// First occupied voxel by fixed-step marching.
double march(const LabelGrid& g, const view::VoxelGridSpec& grid, const view::Vec3& o, const view::Vec3& d, double step) {
    for (double t = 0; t < 30; t += step) {
        const std::int64_t i = grid.locate({o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]});
        if (i >= 0 && g.labels[static_cast<std::size_t>(i)] != 0) return t;
    }
    return 0.0;
}

void check_same(const scene::SceneSample& a, const scene::SceneSample& b) {
    CHECK(a.id == b.id);
    CHECK(bitwise_equal(a.image.data(), b.image.data()));
    CHECK(a.image.shape() == b.image.shape());
    CHECK(bitwise_equal(a.gt_depth.data(), b.gt_depth.data()));
    CHECK(a.labels.extents == b.labels.extents);
    CHECK(a.labels.labels == b.labels.labels);
    CHECK(bitwise_equal(a.teacher.vision.data(), b.teacher.vision.data()));
    CHECK(bitwise_equal(a.teacher.text.data(), b.teacher.text.data()));
    CHECK(a.teacher.class_names == b.teacher.class_names);
    CHECK(a.camera.pose == b.camera.pose);
    CHECK(a.camera.fx == b.camera.fx);
}

}  // namespace

TEST_CASE("empty scene spec") {
    SceneSpec spec;
    spec.ground = false;
    spec.box_fraction = spec.pole_fraction = 0;
    const auto s = scene::generate_scene(spec, 3);
    for (std::uint8_t l : s.labels.labels) CHECK((l == 0 || l == kIgnoreLabel));
    for (double d : values(s.gt_depth)) CHECK(d == 0.0);
    spec.ignore_outside_frustum = false;
    for (std::uint8_t l : scene::generate_scene(spec, 3).labels.labels) CHECK(l == 0);
}

TEST_CASE("single box: ray-cast depth and teacher argmax") {
    SceneSpec spec;
    spec.ground = false;
    spec.image_noise = 0;
    spec.teacher_noise = 0.1;
    const view::CameraModel cam = spec.camera();
    // Put a one-voxel box on the ray through teacher pixel (9, 6) at depth 3.
    view::CameraModel tcam = cam;
    tcam.fx = tcam.fy = cam.fx * 0.5;
    tcam.cx = tcam.cy = 8.0;
    tcam.height = tcam.width = 16;
    const auto p = tcam.back_project(9, 6, 3.0);
    const std::int64_t idx = spec.grid.locate(p);
    REQUIRE(idx >= 0);
    const auto& e = spec.grid.extents;
    const std::size_t x = idx / (e[1] * e[2]), y = (idx / e[2]) % e[1], z = idx % e[2];
    spec.objects = {{scene::kBox, {x, y, z}, {1, 1, 1}}};
    const auto s = scene::generate_scene(spec, 11);

    const double vs = spec.grid.voxel_size;
    const view::Vec3 lo{spec.grid.origin[0] + x * vs, spec.grid.origin[1] + y * vs, spec.grid.origin[2] + z * vs};
    const view::Vec3 hi{lo[0] + vs, lo[1] + vs, lo[2] + vs};
    const view::Vec3 eye{cam.pose[3], cam.pose[7], cam.pose[11]};
    std::size_t hits = 0;
    for (std::size_t v = 0; v < cam.height; ++v)
        for (std::size_t u = 0; u < cam.width; ++u) {
            const std::size_t i = v * cam.width + u;
            const double t = slab_entry(eye, pixel_ray(cam, u, v), lo, hi);
            if (std::isnan(t)) {
                CHECK(s.gt_depth.data()[i] == 0.0);
                CHECK(s.image.data()[i] == 0.0);
                CHECK(s.image.data()[3 * 1024 + i] == 1.0);
            } else {
                ++hits;
                CHECK(std::abs(s.gt_depth.data()[i] - t) <= 1e-9);
                CHECK(s.image.data()[i] == 0.8);
            }
        }
    CHECK(hits > 0);
    CHECK(s.labels.at(x, y, z) == scene::kBox);

    const Tensor logits = vlgd::compute_logits_map(s.teacher.vision, s.teacher.text);
    std::size_t teacher_hits = 0;
    for (std::size_t v = 0; v < 16; ++v)
        for (std::size_t u = 0; u < 16; ++u) {
            const bool seen = !std::isnan(slab_entry(eye, pixel_ray(tcam, u, v), lo, hi));
            teacher_hits += seen;
            std::size_t best = 0;
            for (std::size_t q = 1; q < 4; ++q)
                if (logits.data()[q * 256 + v * 16 + u] > logits.data()[best * 256 + v * 16 + u]) best = q;
            CHECK(best == (seen ? scene::kBox : scene::kEmpty));
        }
    CHECK(teacher_hits >= 1);
}

TEST_CASE("generation is deterministic") {
    const SceneSpec spec;
    for (std::uint64_t seed : {0ULL, 7ULL, 123456789ULL}) check_same(scene::generate_scene(spec, seed), scene::generate_scene(spec, seed));
    const auto a = scene::generate_scene(spec, 1), b = scene::generate_scene(spec, 2);
    CHECK(a.labels.labels != b.labels.labels);
}

TEST_CASE("recorded depth is the first occupied voxel along each ray") {
    const SceneSpec spec;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto s = scene::generate_scene(spec, seed);
        const LabelGrid occ = scene::build_labels(spec, seed);
        const view::Vec3 eye{s.camera.pose[3], s.camera.pose[7], s.camera.pose[11]};
        for (std::size_t v = 0; v < s.camera.height; ++v)
            for (std::size_t u = 0; u < s.camera.width; ++u) {
                const view::Vec3 d = pixel_ray(s.camera, u, v);
                const double oracle = march(occ, spec.grid, eye, d, 1e-3);
                const double got = s.gt_depth.data()[v * s.camera.width + u];
                CHECK((oracle > 0) == (got > 0));
                CHECK(std::abs(oracle - got) <= spec.grid.voxel_size);
            }
    }
}

TEST_CASE("class frequencies track the spec targets") {
    SceneSpec spec;
    spec.box_fraction = 0.05;
    spec.pole_fraction = 0.015;
    double box = 0, pole = 0, ground = 0;
    const std::size_t scenes = 32;
    for (std::size_t i = 0; i < scenes; ++i) {
        const LabelGrid g = scene::build_labels(spec, scene::sample_seed(99, i));
        for (std::uint8_t l : g.labels) {
            box += l == scene::kBox;
            pole += l == scene::kPole;
            ground += l == scene::kGround;
        }
    }
    const double total = static_cast<double>(scenes * spec.grid.volume());
    MESSAGE("box " << box / total << " pole " << pole / total << " ground " << ground / total);
    CHECK(std::abs(box / total - spec.box_fraction) <= 0.2 * spec.box_fraction);
    CHECK(std::abs(pole / total - spec.pole_fraction) <= 0.2 * spec.pole_fraction);
    CHECK(ground / total == doctest::Approx(2.0 / 8));
}

TEST_CASE("infeasible specs are rejected") {
    SceneSpec spec;
    spec.box_fraction = 0.95;
    CHECK_THROWS_AS(scene::generate_scene(spec, 1), Error);
    spec.box_fraction = 0.6;  // fits by volume, not by placement
    CHECK_THROWS_AS(scene::generate_scene(spec, 1), Error);
    SceneSpec overlap;
    overlap.objects = {{scene::kBox, {2, 2, 2}, {4, 4, 2}}, {scene::kPole, {4, 4, 2}, {2, 2, 5}}};
    CHECK_THROWS_AS(scene::generate_scene(overlap, 1), Error);
    SceneSpec outside;
    outside.objects = {{scene::kBox, {30, 0, 2}, {4, 4, 2}}};
    CHECK_THROWS_AS(scene::generate_scene(outside, 1), Error);
}

TEST_CASE("text embeddings are orthonormal") {
    const Tensor t = scene::text_embeddings(4, 8, 5);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
            double d = 0;
            for (std::size_t c = 0; c < 8; ++c) d += t.data()[a * 8 + c] * t.data()[b * 8 + c];
            CHECK(std::abs(d - (a == b ? 1.0 : 0.0)) <= 1e-12);
        }
    CHECK_FALSE(vlgd::text_rows_degenerate(t));
}

TEST_CASE("label grid encoding") {
    LabelGrid g({3, 2, 4});
    for (std::size_t i = 0; i < g.size(); ++i) g.labels[i] = static_cast<std::uint8_t>(i % 3 == 0 ? 255 : i % 4);
    CHECK(scene::decode_labels(scene::encode_labels(g)).labels == g.labels);
    CHECK(scene::decode_labels(scene::encode_labels(g, 2)).labels == g.labels);
    auto bytes = scene::encode_labels(g);
    CHECK(bytes.size() == 4 + 4 + 12 + 1 + 24);
    bytes[0] = 'X';
    CHECK_THROWS_AS(scene::decode_labels(bytes), FormatError);
    bytes = scene::encode_labels(g);
    bytes.pop_back();
    CHECK_THROWS_AS(scene::decode_labels(bytes), FormatError);
    bytes = scene::encode_labels(g);
    bytes[4] = 9;
    CHECK_THROWS_AS(scene::decode_labels(bytes), FormatError);
}

TEST_CASE("dataset round trip and corruption") {
    const SceneSpec spec;
    scene::Dataset data{scene::dataset_hash(spec, 3, 5), scene::generate_dataset(spec, 3, 5)};
    const auto dir = temp_dir("dataset");
    scene::write_dataset(data, dir);
    const auto back = scene::read_dataset(dir);
    CHECK(back.scene_hash == data.scene_hash);
    REQUIRE(back.samples.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) check_same(back.samples[i], data.samples[i]);

    {
        auto bytes = io::read_file(dir / "scene_0001.labels.vlsc");
        bytes[1] = 'Z';
        io::write_file(dir / "scene_0001.labels.vlsc", bytes);
        CHECK_THROWS_AS(scene::read_dataset(dir), FormatError);
    }
    scene::write_dataset(data, dir);
    std::filesystem::remove(dir / "scene_0002.depth.vlft");
    try {
        scene::read_dataset(dir);
        FAIL("missing file accepted");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("scene_0002.depth.vlft") != std::string::npos);
    }
    CHECK(scene::dataset_hash(spec, 3, 5) != scene::dataset_hash(spec, 3, 6));
    CHECK(scene::dataset_hash(spec, 3, 5) != scene::dataset_hash(spec, 4, 5));
}
