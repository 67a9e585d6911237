#include "vlscene/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "vlscene/binary_io.hpp"
#include "vlscene/error.hpp"

namespace vlscene {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream in(s);
    std::string part;
    while (std::getline(in, part, ',')) out.push_back(trim(part));
    return out;
}

double to_double(const std::string& v) {
    const std::string t = trim(v);
    double d = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
    if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(d)) throw ConfigError("expected a number, got '" + v + "'");
    return d;
}

std::uint64_t to_u64(const std::string& v) {
    const std::string t = trim(v);
    std::uint64_t u = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), u);
    if (ec != std::errc() || p != t.data() + t.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
    return u;
}

bool to_bool(const std::string& v) {
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("expected true/false, got '" + v + "'");
}

std::string fmt(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}
std::string fmt(bool b) { return b ? "true" : "false"; }
std::string fmt(std::uint64_t u) { return std::to_string(u); }

template <class T, std::size_t N>
std::string fmt_list(const std::array<T, N>& a) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + fmt(a[i]);
    return s;
}
template <class T>
std::string fmt_list(const std::vector<T>& a) {
    std::string s;
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + fmt(a[i]);
    return s;
}

template <std::size_t N>
std::array<double, N> doubles(const std::string& v) {
    const auto parts = split(v);
    if (parts.size() != N) throw ConfigError("expected " + std::to_string(N) + " comma-separated numbers, got '" + v + "'");
    std::array<double, N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = to_double(parts[i]);
    return out;
}
template <std::size_t N>
std::array<std::size_t, N> sizes(const std::string& v) {
    const auto parts = split(v);
    if (parts.size() != N) throw ConfigError("expected " + std::to_string(N) + " comma-separated integers, got '" + v + "'");
    std::array<std::size_t, N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = to_u64(parts[i]);
    return out;
}

struct Field {
    std::string section, key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
    bool hashed = true;
};

#define VL_FIELD(SEC, KEY, EXPR, PARSE) \
    Field { SEC, KEY, [](ExperimentConfig& c, const std::string& v) { c.EXPR = PARSE(v); }, [](const ExperimentConfig& c) { return fmt(c.EXPR); } }
#define VL_LIST(SEC, KEY, EXPR, PARSE) \
    Field { SEC, KEY, [](ExperimentConfig& c, const std::string& v) { c.EXPR = PARSE(v); }, [](const ExperimentConfig& c) { return fmt_list(c.EXPR); } }

std::vector<std::size_t> size_list(const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& p : split(v)) out.push_back(to_u64(p));
    return out;
}
std::vector<std::uint64_t> u64_list(const std::string& v) {
    std::vector<std::uint64_t> out;
    for (const auto& p : split(v)) out.push_back(to_u64(p));
    return out;
}
std::vector<double> double_list(const std::string& v) {
    std::vector<double> out;
    for (const auto& p : split(v)) out.push_back(to_double(p));
    return out;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f{
            VL_FIELD("run", "seed", run.seed, to_u64),
            VL_FIELD("run", "deterministic", run.deterministic, to_bool),
            Field{"run", "precision",
                  [](ExperimentConfig& c, const std::string& v) {
                      const std::string t = trim(v);
                      if (t == "f32") c.run.precision = Precision::f32;
                      else if (t == "f64") c.run.precision = Precision::f64;
                      else throw ConfigError("expected f32 or f64, got '" + v + "'");
                  },
                  [](const ExperimentConfig& c) { return std::string(c.run.precision == Precision::f32 ? "f32" : "f64"); }},
            Field{"run", "out_dir", [](ExperimentConfig& c, const std::string& v) { c.run.out_dir = trim(v); },
                  [](const ExperimentConfig& c) { return c.run.out_dir.string(); }, false},
            Field{"run", "dataset", [](ExperimentConfig& c, const std::string& v) { c.run.dataset = trim(v); },
                  [](const ExperimentConfig& c) { return c.run.dataset.string(); }, false},

            VL_FIELD("scene", "count", scene.count, to_u64),
            VL_FIELD("scene", "seed", scene.seed, to_u64),
            VL_LIST("scene", "extents", scene.spec.grid.extents, sizes<3>),
            VL_FIELD("scene", "voxel_size", scene.spec.grid.voxel_size, to_double),
            VL_LIST("scene", "origin", scene.spec.grid.origin, doubles<3>),
            VL_FIELD("scene", "ground", scene.spec.ground, to_bool),
            VL_FIELD("scene", "box_fraction", scene.spec.box_fraction, to_double),
            VL_FIELD("scene", "pole_fraction", scene.spec.pole_fraction, to_double),
            VL_FIELD("scene", "block", scene.spec.block, to_u64),
            VL_FIELD("scene", "max_attempts", scene.spec.max_attempts, to_u64),
            VL_LIST("scene", "camera_position", scene.spec.camera_position, doubles<3>),
            VL_FIELD("scene", "camera_pitch", scene.spec.camera_pitch, to_double),
            VL_FIELD("scene", "focal", scene.spec.focal, to_double),
            VL_FIELD("scene", "image_height", scene.spec.image_height, to_u64),
            VL_FIELD("scene", "image_width", scene.spec.image_width, to_u64),
            VL_FIELD("scene", "image_noise", scene.spec.image_noise, to_double),
            VL_FIELD("scene", "ignore_outside_frustum", scene.spec.ignore_outside_frustum, to_bool),
            VL_FIELD("scene", "teacher_channels", scene.spec.teacher_channels, to_u64),
            VL_FIELD("scene", "teacher_height", scene.spec.teacher_height, to_u64),
            VL_FIELD("scene", "teacher_width", scene.spec.teacher_width, to_u64),
            VL_FIELD("scene", "teacher_noise", scene.spec.teacher_noise, to_double),
            VL_FIELD("scene", "text_seed", scene.spec.text_seed, to_u64),

            VL_FIELD("model", "channels", model.channels, to_u64),
            VL_LIST("model", "ssi_widths", model.ssi_widths, sizes<3>),
            VL_FIELD("model", "ngp_repeats", model.ngp_repeats, to_u64),
            VL_FIELD("model", "depth_hidden", model.depth_hidden, to_u64),
            VL_FIELD("model", "depth_bins", model.depth_bins, to_u64),
            VL_FIELD("model", "depth_near", model.depth_near, to_double),
            VL_FIELD("model", "depth_far", model.depth_far, to_double),
            VL_FIELD("model", "sparsity_threshold", model.sparsity_threshold, to_double),
            VL_FIELD("model", "enable_vlgd", model.enable_vlgd, to_bool),
            VL_FIELD("model", "enable_ngp", model.enable_ngp, to_bool),
            VL_FIELD("model", "enable_ssi", model.enable_ssi, to_bool),

            VL_FIELD("loss", "lambda_ssc", loss.weights.lambda_ssc, to_double),
            VL_FIELD("loss", "lambda_kd", loss.weights.lambda_kd, to_double),
            VL_FIELD("loss", "sem_scal", loss.weights.sem_scal, to_double),
            VL_FIELD("loss", "geo_scal", loss.weights.geo_scal, to_double),
            VL_FIELD("loss", "ce", loss.weights.ce, to_double),
            VL_FIELD("loss", "depth", loss.weights.depth, to_double),
            VL_FIELD("loss", "kd_feat", loss.weights.kd_feat, to_double),
            VL_FIELD("loss", "kd_logits", loss.weights.kd_logits, to_double),
            VL_FIELD("loss", "class_weights", loss.class_weights, to_bool),
            VL_FIELD("loss", "depth_soft", loss.depth_soft, to_bool),
            VL_FIELD("loss", "kd_logits_hard", loss.kd_logits_hard, to_bool),
            VL_FIELD("loss", "detach_fusion_target", loss.detach_fusion_target, to_bool),

            VL_FIELD("optim", "lr", optim.lr, to_double),
            VL_FIELD("optim", "weight_decay", optim.weight_decay, to_double),
            VL_FIELD("optim", "beta1", optim.beta1, to_double),
            VL_FIELD("optim", "beta2", optim.beta2, to_double),
            VL_FIELD("optim", "eps", optim.eps, to_double),
            VL_FIELD("optim", "steps", optim.steps, to_u64),
            VL_FIELD("optim", "batch", optim.batch, to_u64),
            VL_LIST("optim", "milestones", optim.milestones, size_list),
            VL_FIELD("optim", "gamma", optim.gamma, to_double),

            VL_LIST("eval", "ranges", eval.ranges, double_list),
            VL_FIELD("eval", "absent_as_zero", eval.absent_as_zero, to_bool),

            VL_LIST("ablate", "seeds", ablate.seeds, u64_list),
        };
        for (auto& x : f) {
            // Neither the step budget nor evaluation/ablation settings shape the weights of a given step.
            if ((x.section == "optim" && x.key == "steps") || x.section == "eval" || x.section == "ablate" ||
                (x.section == "run" && x.key == "deterministic")) {
                x.hashed = false;
            }
        }
        return f;
    }();
    return table;
}

#undef VL_FIELD
#undef VL_LIST

const Field& find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields()) {
        if (f.section == section && f.key == key) return f;
    }
    std::set<std::string> sections;
    for (const auto& f : fields()) sections.insert(f.section);
    if (!sections.count(section)) {
        std::string known;
        for (const auto& n : sections) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown section [" + section + "] (known: " + known + ")");
    }
    std::string known;
    for (const auto& f : fields())
        if (f.section == section) known += (known.empty() ? "" : ", ") + f.key;
    throw ConfigError("unknown key '" + key + "' in [" + section + "] (known: " + known + ")");
}

void set_field(ExperimentConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
    const Field& f = find_field(section, key);
    try {
        f.set(cfg, value);
    } catch (const ConfigError& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    scene.spec.validate();
    loss.weights.validate();
    const auto& e = scene.spec.grid.extents;
    for (std::size_t a = 0; a < 3; ++a) {
        if (e[a] % 8 != 0) {
            throw ConfigError("scene.extents: label extents must be multiples of 8 (the feature grid is halved and SSI "
                              "downsamples it twice), got " + std::to_string(e[a]) + " on axis " + std::to_string(a));
        }
    }
    if (scene.count == 0) throw ConfigError("scene.count: must be >= 1");
    if (model.channels == 0) throw ConfigError("model.channels: must be >= 1");
    if (model.ssi_widths[0] != model.channels) {
        throw ConfigError("model.ssi_widths: the first width must equal model.channels");
    }
    if (model.ssi_widths[1] == 0 || model.ssi_widths[2] == 0) throw ConfigError("model.ssi_widths: widths must be >= 1");
    if (model.ngp_repeats == 0) throw ConfigError("model.ngp_repeats: must be >= 1");
    if (model.depth_bins < 2) throw ConfigError("model.depth_bins: need at least 2 bins");
    if (!(model.depth_near > 0) || !(model.depth_far > model.depth_near)) {
        throw ConfigError("model.depth_near/depth_far: need 0 < near < far");
    }
    if (model.sparsity_threshold < 0) throw ConfigError("model.sparsity_threshold: must be >= 0");
    if (!(optim.lr > 0)) throw ConfigError("optim.lr: must be positive");
    if (optim.weight_decay < 0) throw ConfigError("optim.weight_decay: must be >= 0");
    if (!(optim.beta1 >= 0 && optim.beta1 < 1) || !(optim.beta2 >= 0 && optim.beta2 < 1)) {
        throw ConfigError("optim.beta1/beta2: must lie in [0, 1)");
    }
    if (!(optim.eps > 0)) throw ConfigError("optim.eps: must be positive");
    if (optim.batch == 0) throw ConfigError("optim.batch: must be >= 1");
    if (!(optim.gamma > 0)) throw ConfigError("optim.gamma: must be positive");
    for (std::size_t i = 1; i < optim.milestones.size(); ++i) {
        if (optim.milestones[i] <= optim.milestones[i - 1]) throw ConfigError("optim.milestones: must increase");
    }
    if (eval.ranges.empty()) throw ConfigError("eval.ranges: need at least one range");
    for (double r : eval.ranges) {
        if (!(r > 0 && r <= 1)) throw ConfigError("eval.ranges: fractions must lie in (0, 1]");
    }
    if (ablate.seeds.empty()) throw ConfigError("ablate.seeds: need at least one seed");
}

std::filesystem::path ExperimentConfig::dataset_dir() const {
    return run.dataset.empty() ? run.out_dir / "dataset" : run.dataset;
}

gssa::Widths ExperimentConfig::widths() const {
    gssa::Widths w;
    w.channels = model.channels;
    w.ssi = model.ssi_widths;
    w.classes = scene.spec.num_classes();
    w.ngp_repeats = model.ngp_repeats;
    return w;
}

view::VoxelGridSpec ExperimentConfig::feature_grid() const {
    view::VoxelGridSpec g = scene.spec.grid;
    g.voxel_size *= 2;
    for (auto& e : g.extents) e /= 2;
    return g;
}

view::CameraModel ExperimentConfig::camera() const {
    view::CameraModel cam = scene.spec.camera();
    cam.depth_bins = view::uniform_depth_bins(model.depth_bins, model.depth_near, model.depth_far);
    return cam;
}

std::uint64_t ExperimentConfig::scene_hash() const { return scene::dataset_hash(scene.spec, scene.count, scene.seed); }

std::uint64_t ExperimentConfig::hash() const {
    std::string text;
    for (const auto& f : fields()) {
        if (f.hashed) text += f.section + "." + f.key + "=" + f.get(*this) + "\n";
    }
    return io::fnv1a64(text);
}

std::string ExperimentConfig::to_ini() const {
    std::string out, section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            out += (section.empty() ? "" : "\n") + ("[" + f.section + "]\n");
            section = f.section;
        }
        out += f.key + " = " + f.get(*this) + "\n";
    }
    return out;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(source + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
    ExperimentConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(source + ": key '" + section + "' appears outside any section");
        }
        for (const auto& [key, value] : body) {
            try {
                set_field(cfg, section, key, value.data());
            } catch (const ConfigError& e) {
                throw ConfigError(source + ": " + e.what());
            }
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return parse_config(std::string(bytes.begin(), bytes.end()), path.string());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("override '" + assignment + "': expected section.key=value");
    }
    set_field(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
              assignment.substr(eq + 1));
}

}  // namespace vlscene
