#pragma once

// Experiment configuration: an INI file with sections [run], [scene], [model],
// [loss], [optim], [eval] and [ablate]. Unknown sections or keys are errors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlscene/gssa.hpp"
#include "vlscene/losses.hpp"
#include "vlscene/scene_sim.hpp"
#include "vlscene/tensor.hpp"

namespace vlscene {

struct RunConfig {
    std::uint64_t seed = 7;
    bool deterministic = true;
    Precision precision = Precision::f32;
    std::filesystem::path out_dir = "runs";
    /// Empty means <out_dir>/dataset.
    std::filesystem::path dataset;
};

struct DatasetConfig {
    std::size_t count = 16;
    std::uint64_t seed = 7;
    scene::SceneSpec spec;
};

struct ModelConfig {
    std::size_t channels = 8;
    std::array<std::size_t, 3> ssi_widths{8, 16, 32};
    std::size_t ngp_repeats = 1;
    std::size_t depth_hidden = 16;
    std::size_t depth_bins = 8;
    double depth_near = 1.0, depth_far = 9.0;
    double sparsity_threshold = 0.0;
    bool enable_vlgd = true, enable_ngp = true, enable_ssi = true;
};

struct LossConfig {
    losses::LossWeights weights;
    bool class_weights = true;
    bool depth_soft = false;
    bool kd_logits_hard = false;
    bool detach_fusion_target = false;
};

struct OptimConfig {
    double lr = 3e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t steps = 200;
    std::size_t batch = 2;
    std::vector<std::size_t> milestones{150};
    double gamma = 0.1;
};

struct EvalConfig {
    /// Fractions of the grid depth (x extent) evaluated as separate ranges.
    std::vector<double> ranges{0.5, 1.0};
    bool absent_as_zero = false;
};

struct AblateConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct ExperimentConfig {
    RunConfig run;
    DatasetConfig scene;
    ModelConfig model;
    LossConfig loss;
    OptimConfig optim;
    EvalConfig eval;
    AblateConfig ablate;

    /// Throws ConfigError naming the offending key.
    void validate() const;
    std::filesystem::path dataset_dir() const;
    gssa::Widths widths() const;
    /// Feature grid: the label grid halved (the output head upsamples by 2).
    view::VoxelGridSpec feature_grid() const;
    /// Scene camera with the model's depth bins attached.
    view::CameraModel camera() const;
    /// Hash of the dataset this config trains on.
    std::uint64_t scene_hash() const;
    /// Hash over everything that shapes the trained weights except run paths
    /// and the step count (so a resumed run keeps its hash).
    std::uint64_t hash() const;
    /// Round-trippable INI text.
    std::string to_ini() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one "section.key=value" override. Coupled fields may be set in any
/// order, so callers validate once all overrides are in.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

}  // namespace vlscene
