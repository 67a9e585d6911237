#include "vlscene/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"
#include "vlscene/binary_io.hpp"
#include "vlscene/error.hpp"
#include "vlscene/vlft.hpp"

namespace vlscene::scene {

namespace {

using Ext = std::array<std::size_t, 3>;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Flat class colours; unknown classes fall back to grey.
std::array<double, 3> class_colour(std::uint8_t label) {
    switch (label) {
        case kEmpty: return {0.0, 0.0, 0.0};
        case kGround: return {0.2, 0.6, 0.2};
        case kBox: return {0.8, 0.3, 0.2};
        case kPole: return {0.2, 0.3, 0.9};
        default: return {0.5, 0.5, 0.5};
    }
}

constexpr double kFogScale = 10.0;

bool fits(const LabelGrid& g, const ObjectSpec& o) {
    for (int a = 0; a < 3; ++a) {
        if (o.size[a] == 0 || o.min[a] + o.size[a] > g.extents[a]) return false;
    }
    return true;
}

bool is_free(const LabelGrid& g, const ObjectSpec& o) {
    for (std::size_t x = o.min[0]; x < o.min[0] + o.size[0]; ++x)
        for (std::size_t y = o.min[1]; y < o.min[1] + o.size[1]; ++y)
            for (std::size_t z = o.min[2]; z < o.min[2] + o.size[2]; ++z)
                if (g.at(x, y, z) != kEmpty) return false;
    return true;
}

void stamp(LabelGrid& g, const ObjectSpec& o) {
    for (std::size_t x = o.min[0]; x < o.min[0] + o.size[0]; ++x)
        for (std::size_t y = o.min[1]; y < o.min[1] + o.size[1]; ++y)
            for (std::size_t z = o.min[2]; z < o.min[2] + o.size[2]; ++z) g.at(x, y, z) = o.label;
}

std::size_t volume(const ObjectSpec& o) { return o.size[0] * o.size[1] * o.size[2]; }

struct Shape3 {
    std::size_t foot_lo, foot_hi, height_lo, height_hi;  // in blocks
};

void place_random(const SceneSpec& spec, LabelGrid& g, std::mt19937_64& rng) {
    const Ext e = g.extents;
    const std::size_t b = spec.block;
    const std::size_t base = spec.ground ? b : 0;
    const std::size_t room = (e[2] - base) / b;
    const std::size_t bx = e[0] / b, by = e[1] / b;
    const std::uint8_t kinds[2] = {kBox, kPole};
    const Shape3 shapes[2] = {{2, 3, 1, std::min<std::size_t>(2, room)}, {1, 1, room > 1 ? room - 1 : room, room}};
    const double targets[2] = {spec.box_fraction * static_cast<double>(g.size()),
                               spec.pole_fraction * static_cast<double>(g.size())};
    double placed[2] = {0.0, 0.0};
    double smallest[2];
    for (int k = 0; k < 2; ++k) {
        const double f = static_cast<double>(shapes[k].foot_lo * b);
        smallest[k] = f * f * static_cast<double>(shapes[k].height_lo * b);
    }
    const double above = static_cast<double>(e[0] * e[1] * room * b);
    if (targets[0] + targets[1] > above) {
        throw Error("generate_scene: requested object volume " + std::to_string(targets[0] + targets[1]) +
                    " voxels exceeds the " + std::to_string(above) + " free voxels above the ground");
    }
    auto wanted = [&](int k) { return targets[k] - placed[k] >= 0.5 * smallest[k]; };

    for (std::size_t attempt = 0; attempt < spec.max_attempts && (wanted(0) || wanted(1)); ++attempt) {
        const int k = !wanted(0) ? 1 : (!wanted(1) ? 0 : ((targets[0] - placed[0]) / smallest[0] >=
                                                                  (targets[1] - placed[1]) / smallest[1]
                                                              ? 0
                                                              : 1));
        const Shape3& s = shapes[k];
        std::uniform_int_distribution<std::size_t> foot(s.foot_lo, s.foot_hi), height(s.height_lo, s.height_hi);
        ObjectSpec o;
        o.label = kinds[k];
        const std::size_t fx = foot(rng), fy = foot(rng);
        o.size = {fx * b, fy * b, height(rng) * b};
        if (fx > bx || fy > by) continue;
        o.min = {std::uniform_int_distribution<std::size_t>(0, bx - fx)(rng) * b,
                 std::uniform_int_distribution<std::size_t>(0, by - fy)(rng) * b, base};
        if (!fits(g, o) || !is_free(g, o)) continue;
        const double v = static_cast<double>(volume(o));
        if (std::abs(placed[k] + v - targets[k]) >= std::abs(placed[k] - targets[k])) continue;
        stamp(g, o);
        placed[k] += v;
    }
    for (int k = 0; k < 2; ++k) {
        if (wanted(k)) {
            throw Error("generate_scene: requested more objects than fit (class " + std::to_string(kinds[k]) +
                        " target " + std::to_string(targets[k]) + " voxels, placed " + std::to_string(placed[k]) +
                        " after " + std::to_string(spec.max_attempts) + " attempts)");
        }
    }
}

view::CameraModel scaled_camera(const SceneSpec& spec, std::size_t h, std::size_t w) {
    view::CameraModel cam = spec.camera();
    const double sx = static_cast<double>(w) / static_cast<double>(spec.image_width);
    const double sy = static_cast<double>(h) / static_cast<double>(spec.image_height);
    cam.fx *= sx;
    cam.cx *= sx;
    cam.fy *= sy;
    cam.cy *= sy;
    cam.height = h;
    cam.width = w;
    return cam;
}

view::Vec3 ray_direction(const view::CameraModel& cam, std::size_t u, std::size_t v) {
    const auto p = cam.back_project(static_cast<double>(u), static_cast<double>(v), 1.0);
    return {p[0] - cam.pose[3], p[1] - cam.pose[7], p[2] - cam.pose[11]};
}

view::Vec3 camera_origin(const view::CameraModel& cam) { return {cam.pose[3], cam.pose[7], cam.pose[11]}; }

void mark_outside_frustum(LabelGrid& g, const view::VoxelGridSpec& grid, const view::CameraModel& cam) {
    const Ext e = g.extents;
    for (std::size_t x = 0; x < e[0]; ++x)
        for (std::size_t y = 0; y < e[1]; ++y)
            for (std::size_t z = 0; z < e[2]; ++z) {
                const view::Vec3 c{grid.origin[0] + (static_cast<double>(x) + 0.5) * grid.voxel_size,
                                   grid.origin[1] + (static_cast<double>(y) + 0.5) * grid.voxel_size,
                                   grid.origin[2] + (static_cast<double>(z) + 0.5) * grid.voxel_size};
                const auto q = cam.to_camera(c);
                bool seen = q[2] > 0.0;
                if (seen) {
                    const double u = cam.fx * q[0] / q[2] + cam.cx, v = cam.fy * q[1] / q[2] + cam.cy;
                    seen = u >= 0.0 && v >= 0.0 && u < static_cast<double>(cam.width) &&
                           v < static_cast<double>(cam.height);
                }
                if (!seen) g.at(x, y, z) = kIgnoreLabel;
            }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void SceneSpec::validate() const {
    grid.validate();
    if (class_names.size() < 4) throw ConfigError("scene: the toy class set needs empty, ground, box and pole");
    if (class_names.size() >= kIgnoreLabel) throw ConfigError("scene: too many classes");
    if (block == 0 || grid.extents[0] % block || grid.extents[1] % block || grid.extents[2] % block) {
        throw ConfigError("scene: grid extents must be multiples of the placement block");
    }
    if (box_fraction < 0 || pole_fraction < 0) throw ConfigError("scene: object fractions must be >= 0");
    if (image_height == 0 || image_width == 0 || teacher_height == 0 || teacher_width == 0) {
        throw ConfigError("scene: image and teacher extents must be >= 1");
    }
    if (!(focal > 0)) throw ConfigError("scene: focal length must be positive");
    if (teacher_channels < num_classes()) {
        throw ConfigError("scene: teacher channels must be >= the class count for orthogonal embeddings");
    }
    if (image_noise < 0 || teacher_noise < 0) throw ConfigError("scene: noise levels must be >= 0");
    for (const auto& o : objects) {
        if (o.label == kEmpty || o.label >= num_classes()) {
            throw ConfigError("scene: object label " + std::to_string(o.label) + " is not an object class");
        }
    }
}

view::CameraModel SceneSpec::camera() const {
    view::CameraModel cam;
    cam.fx = cam.fy = focal;
    cam.cx = static_cast<double>(image_width) / 2;
    cam.cy = static_cast<double>(image_height) / 2;
    cam.height = image_height;
    cam.width = image_width;
    cam.pose = view::forward_looking_pose(camera_position, camera_pitch);
    return cam;
}

std::string SceneSpec::canonical() const {
    std::ostringstream s;
    s.precision(17);
    s << "grid.origin=" << grid.origin[0] << ',' << grid.origin[1] << ',' << grid.origin[2] << '\n'
      << "grid.voxel=" << grid.voxel_size << '\n'
      << "grid.extents=" << grid.extents[0] << ',' << grid.extents[1] << ',' << grid.extents[2] << '\n'
      << "classes=";
    for (const auto& n : class_names) s << n << ';';
    s << "\ncamera=" << camera_position[0] << ',' << camera_position[1] << ',' << camera_position[2] << ','
      << camera_pitch << ',' << focal << ',' << image_height << ',' << image_width << '\n'
      << "ground=" << ground << "\nbox=" << box_fraction << "\npole=" << pole_fraction << "\nblock=" << block
      << "\nattempts=" << max_attempts << "\nobjects=";
    for (const auto& o : objects) {
        s << int(o.label) << ':' << o.min[0] << ',' << o.min[1] << ',' << o.min[2] << ':' << o.size[0] << ','
          << o.size[1] << ',' << o.size[2] << ';';
    }
    s << "\nignore_outside=" << ignore_outside_frustum << "\nimage_noise=" << image_noise
      << "\nteacher=" << teacher_channels << ',' << teacher_height << ',' << teacher_width << ',' << teacher_noise
      << ',' << text_seed << '\n';
    return s.str();
}

LabelGrid build_labels(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    LabelGrid g(spec.grid.extents, kEmpty);
    const Ext e = g.extents;
    if (spec.ground) {
        for (std::size_t x = 0; x < e[0]; ++x)
            for (std::size_t y = 0; y < e[1]; ++y)
                for (std::size_t z = 0; z < std::min(spec.block, e[2]); ++z) g.at(x, y, z) = kGround;
    }
    if (!spec.objects.empty()) {
        for (std::size_t i = 0; i < spec.objects.size(); ++i) {
            const auto& o = spec.objects[i];
            if (!fits(g, o)) throw Error("generate_scene: object " + std::to_string(i) + " does not fit in the grid");
            if (!is_free(g, o)) throw Error("generate_scene: object " + std::to_string(i) + " overlaps occupied voxels");
            stamp(g, o);
        }
        return g;
    }
    std::mt19937_64 rng(splitmix(seed));
    place_random(spec, g, rng);
    return g;
}

RayHit cast_ray(const LabelGrid& labels, const view::VoxelGridSpec& grid, const view::Vec3& origin,
                const view::Vec3& dir) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double vs = grid.voxel_size;
    double t0 = 0.0, t1 = inf;
    for (int a = 0; a < 3; ++a) {
        const double lo = grid.origin[a], hi = lo + static_cast<double>(grid.extents[a]) * vs;
        if (dir[a] == 0.0) {
            if (origin[a] < lo || origin[a] >= hi) return {};
            continue;
        }
        double ta = (lo - origin[a]) / dir[a], tb = (hi - origin[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t0 < t1)) return {};

    long idx[3], step[3];
    double tmax[3], tdelta[3];
    for (int a = 0; a < 3; ++a) {
        const double p = origin[a] + t0 * dir[a];
        const long n = static_cast<long>(grid.extents[a]);
        idx[a] = std::clamp(static_cast<long>(std::floor((p - grid.origin[a]) / vs)), 0L, n - 1);
        if (dir[a] > 0) {
            step[a] = 1;
            tmax[a] = (grid.origin[a] + static_cast<double>(idx[a] + 1) * vs - origin[a]) / dir[a];
            tdelta[a] = vs / dir[a];
        } else if (dir[a] < 0) {
            step[a] = -1;
            tmax[a] = (grid.origin[a] + static_cast<double>(idx[a]) * vs - origin[a]) / dir[a];
            tdelta[a] = -vs / dir[a];
        } else {
            step[a] = 0;
            tmax[a] = inf;
            tdelta[a] = inf;
        }
    }
    double t = t0;
    for (;;) {
        const std::uint8_t l = labels.at(static_cast<std::size_t>(idx[0]), static_cast<std::size_t>(idx[1]),
                                         static_cast<std::size_t>(idx[2]));
        if (l != kEmpty && l != kIgnoreLabel) return {t, l};
        const int a = tmax[0] <= tmax[1] ? (tmax[0] <= tmax[2] ? 0 : 2) : (tmax[1] <= tmax[2] ? 1 : 2);
        t = tmax[a];
        if (t >= t1) return {};
        idx[a] += step[a];
        if (idx[a] < 0 || idx[a] >= static_cast<long>(grid.extents[a])) return {};
        tmax[a] += tdelta[a];
    }
}

Tensor text_embeddings(std::size_t classes, std::size_t channels, std::uint64_t seed) {
    if (classes > channels) throw ConfigError("text_embeddings: more classes than channels");
    std::mt19937_64 rng(splitmix(seed));
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> rows(classes * channels);
    for (std::size_t q = 0; q < classes; ++q) {
        double* r = rows.data() + q * channels;
        for (;;) {
            for (std::size_t c = 0; c < channels; ++c) r[c] = n(rng);
            for (std::size_t p = 0; p < q; ++p) {
                const double* o = rows.data() + p * channels;
                double d = 0;
                for (std::size_t c = 0; c < channels; ++c) d += r[c] * o[c];
                for (std::size_t c = 0; c < channels; ++c) r[c] -= d * o[c];
            }
            double norm = 0;
            for (std::size_t c = 0; c < channels; ++c) norm += r[c] * r[c];
            norm = std::sqrt(norm);
            if (norm < 1e-6) continue;
            for (std::size_t c = 0; c < channels; ++c) r[c] /= norm;
            break;
        }
    }
    return Tensor::from_vector({classes, channels}, std::move(rows));
}

SceneSample generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    SceneSample s;
    s.labels = build_labels(spec, seed);
    s.camera = spec.camera();
    s.camera.validate();
    const LabelGrid& occ = s.labels;

    const std::size_t H = spec.image_height, W = spec.image_width, hw = H * W;
    std::vector<double> image(4 * hw), depth(hw, 0.0);
    std::mt19937_64 image_rng(splitmix(seed ^ 0x1111111111111111ULL));
    std::normal_distribution<double> image_noise(0.0, 1.0);
    const view::Vec3 eye = camera_origin(s.camera);
    for (std::size_t v = 0; v < H; ++v)
        for (std::size_t u = 0; u < W; ++u) {
            const std::size_t p = v * W + u;
            const RayHit hit = cast_ray(occ, spec.grid, eye, ray_direction(s.camera, u, v));
            depth[p] = hit.depth;
            const auto colour = class_colour(hit.label);
            for (int c = 0; c < 3; ++c) image[c * hw + p] = colour[c];
            image[3 * hw + p] = hit.label == kEmpty ? 1.0 : hit.depth / kFogScale;
        }
    if (spec.image_noise > 0) {
        for (double& x : image) x += spec.image_noise * image_noise(image_rng);
    }
    s.image = Tensor::from_vector({4, H, W}, std::move(image));
    s.gt_depth = Tensor::from_vector({H, W}, std::move(depth));

    const std::size_t th = spec.teacher_height, tw = spec.teacher_width, ct = spec.teacher_channels;
    const Tensor text = text_embeddings(spec.num_classes(), ct, spec.text_seed);
    const view::CameraModel tcam = scaled_camera(spec, th, tw);
    std::vector<double> vision(ct * th * tw);
    std::mt19937_64 teacher_rng(splitmix(seed ^ 0x2222222222222222ULL));
    std::normal_distribution<double> teacher_noise(0.0, 1.0);
    for (std::size_t v = 0; v < th; ++v)
        for (std::size_t u = 0; u < tw; ++u) {
            const std::uint8_t l = cast_ray(occ, spec.grid, eye, ray_direction(tcam, u, v)).label;
            for (std::size_t c = 0; c < ct; ++c) {
                double x = text.data()[l * ct + c];
                if (spec.teacher_noise > 0) x += spec.teacher_noise * teacher_noise(teacher_rng);
                vision[(c * th + v) * tw + u] = x;
            }
        }
    s.teacher.vision = Tensor::from_vector({ct, th, tw}, std::move(vision));
    s.teacher.text = text;
    s.teacher.class_names = spec.class_names;

    if (spec.ignore_outside_frustum) mark_outside_frustum(s.labels, spec.grid, s.camera);
    return s;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, std::size_t index) {
    return splitmix(splitmix(dataset_seed) + index);
}

std::vector<SceneSample> generate_dataset(const SceneSpec& spec, std::size_t count, std::uint64_t seed) {
    std::vector<SceneSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        SceneSample s = generate_scene(spec, sample_seed(seed, i));
        char id[32];
        std::snprintf(id, sizeof id, "scene_%04zu", i);
        s.id = id;
        out.push_back(std::move(s));
    }
    return out;
}

std::uint64_t dataset_hash(const SceneSpec& spec, std::size_t count, std::uint64_t seed) {
    return io::fnv1a64(spec.canonical() + "count=" + std::to_string(count) + "\nseed=" + std::to_string(seed) + "\n");
}

std::vector<std::uint8_t> encode_labels(const LabelGrid& labels, std::uint8_t dtype) {
    if (dtype != 1 && dtype != 2) throw FormatError("VLSC: unknown dtype tag " + std::to_string(dtype));
    io::ByteWriter w;
    w.magic("VLSC");
    w.u32(kVlscVersion);
    for (std::size_t e : labels.extents) w.u32(static_cast<std::uint32_t>(e));
    w.u8(dtype);
    for (std::uint8_t l : labels.labels) {
        if (dtype == 1) {
            w.u8(l);
        } else {
            w.u8(l);
            w.u8(0);
        }
    }
    return w.take();
}

LabelGrid decode_labels(const std::vector<std::uint8_t>& bytes, const std::string& source) {
    io::ByteReader r(bytes, source);
    r.expect_magic("VLSC");
    const std::uint32_t version = r.u32("version");
    if (version != kVlscVersion) r.fail("unsupported version " + std::to_string(version));
    Ext e;
    for (int a = 0; a < 3; ++a) e[a] = r.u32("extent");
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != 1 && dtype != 2) r.fail("unknown dtype tag " + std::to_string(dtype));
    LabelGrid g(e);
    for (auto& l : g.labels) {
        if (dtype == 1) {
            l = r.u8("label");
        } else {
            const std::uint32_t lo = r.u8("label"), hi = r.u8("label");
            const std::uint32_t v = lo | (hi << 8);
            if (v > kIgnoreLabel) r.fail("label " + std::to_string(v) + " outside the supported range");
            l = static_cast<std::uint8_t>(v);
        }
    }
    r.expect_end();
    return g;
}

void write_labels(const std::filesystem::path& path, const LabelGrid& labels) {
    io::write_file(path, encode_labels(labels));
}

LabelGrid read_labels(const std::filesystem::path& path) { return decode_labels(io::read_file(path), path.string()); }

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format"] = "vlscene-dataset";
    j["version"] = 1;
    j["scene_hash"] = hex64(data.scene_hash);
    j["samples"] = nlohmann::json::array();
    for (const auto& s : data.samples) {
        const std::string image = s.id + ".image.vlft", depth = s.id + ".depth.vlft", labels = s.id + ".labels.vlsc",
                          teacher = s.id + ".teacher.json";
        vlft::write(dir / image, s.image);
        vlft::write(dir / depth, s.gt_depth);
        write_labels(dir / labels, s.labels);
        vlgd::save_teacher(s.teacher, dir / teacher);
        nlohmann::json cam;
        cam["fx"] = s.camera.fx;
        cam["fy"] = s.camera.fy;
        cam["cx"] = s.camera.cx;
        cam["cy"] = s.camera.cy;
        cam["height"] = s.camera.height;
        cam["width"] = s.camera.width;
        cam["pose"] = s.camera.pose;
        j["samples"].push_back(
            {{"id", s.id}, {"image", image}, {"depth", depth}, {"labels", labels}, {"teacher", teacher}, {"camera", cam}});
    }
    const std::string text = j.dump(2) + "\n";
    io::write_file(dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset read_dataset(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    const auto bytes = io::read_file(path);
    const std::string where = path.string();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + ": " + e.what());
    }
    if (j.value("format", "") != "vlscene-dataset") throw FormatError(where + ": not a dataset manifest");
    if (j.value("version", 0) != 1) throw FormatError(where + ": unsupported manifest version");
    Dataset d;
    try {
        d.scene_hash = std::stoull(j.at("scene_hash").get<std::string>(), nullptr, 16);
        for (const auto& e : j.at("samples")) {
            SceneSample s;
            s.id = e.at("id").get<std::string>();
            auto file = [&](const char* key) {
                const auto p = dir / e.at(key).get<std::string>();
                if (!std::filesystem::exists(p)) {
                    throw FormatError(where + ": sample '" + s.id + "' references missing file '" + p.string() + "'");
                }
                return p;
            };
            s.image = vlft::read(file("image"));
            s.gt_depth = vlft::read(file("depth"));
            s.labels = read_labels(file("labels"));
            s.teacher = vlgd::load_teacher(file("teacher"));
            const auto& c = e.at("camera");
            s.camera.fx = c.at("fx").get<double>();
            s.camera.fy = c.at("fy").get<double>();
            s.camera.cx = c.at("cx").get<double>();
            s.camera.cy = c.at("cy").get<double>();
            s.camera.height = c.at("height").get<std::size_t>();
            s.camera.width = c.at("width").get<std::size_t>();
            s.camera.pose = c.at("pose").get<view::Mat4>();
            s.camera.validate();
            if (s.image.rank() != 3 || s.image.dim(1) != s.camera.height || s.image.dim(2) != s.camera.width) {
                throw FormatError(where + ": sample '" + s.id + "' image shape " + shape_str(s.image.shape()) +
                                  " does not match the camera");
            }
            if (s.gt_depth.shape() != Shape{s.camera.height, s.camera.width}) {
                throw FormatError(where + ": sample '" + s.id + "' depth shape " + shape_str(s.gt_depth.shape()) +
                                  " does not match the camera");
            }
            if (!d.samples.empty() && s.labels.extents != d.samples.front().labels.extents) {
                throw FormatError(where + ": sample '" + s.id + "' label extents differ from the first sample");
            }
            d.samples.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + ": " + e.what());
    } catch (const std::invalid_argument&) {
        throw FormatError(where + ": malformed scene_hash");
    }
    return d;
}

}  // namespace vlscene::scene
