#pragma once

// Training loop, optimizer, checkpoints, evaluation runs and ablation presets.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vlscene/config.hpp"
#include "vlscene/metrics.hpp"
#include "vlscene/model.hpp"
#include "vlscene/scene_sim.hpp"

namespace vlscene::train {

/// Adam moments with decoupled weight decay; the step size is multiplied by
/// `gamma` at each milestone step.
class AdamW {
public:
    explicit AdamW(const OptimConfig& cfg) : cfg_(cfg) {}

    double learning_rate(std::size_t step) const;
    /// Updates every tensor in `params` from its accumulated gradient.
    void step(const std::vector<Tensor>& params, Precision precision);

    std::size_t steps_taken() const { return t_; }
    /// Moments keyed by parameter name.
    struct Moments {
        std::vector<double> m, v;
    };
    const std::vector<std::pair<std::string, Moments>>& state() const { return state_; }
    void restore(std::size_t steps, std::vector<std::pair<std::string, Moments>> state);

private:
    Moments& moments(const Tensor& p);

    OptimConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::pair<std::string, Moments>> state_;
};

/// Epoch-wise shuffled sample order driven by one mt19937_64.
class Sampler {
public:
    Sampler(std::size_t count, std::uint64_t seed);
    std::vector<std::size_t> next(std::size_t batch);

    std::string serialize() const;
    void deserialize(const std::string& text);

private:
    void reshuffle();
    std::size_t count_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::uint64_t scene_hash = 0;
    std::uint64_t step = 0;
    std::vector<Tensor> params;  // named
    std::vector<std::pair<std::string, AdamW::Moments>> moments;
    std::string sampler_state;
};

// VLCK: "VLCK" | version u32 | config hash u64 | scene hash u64 | step u64 |
// sampler state (u32 length + text) | tensor count u32 |
// per tensor: name (u32 length + text), VLFT block (u64 length + bytes),
// moment flag u8, and when set two more VLFT blocks (m, v).
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source = "VLCK");
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct StepLog {
    std::size_t step = 0;
    double sem_scal = 0, geo_scal = 0, ce = 0, depth = 0, kd_feat = 0, kd_logits = 0, total = 0;
};
std::string to_json_line(const StepLog& s);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<StepLog> log;
};

/// Trains from `resume` (or a fresh initialisation) until cfg.optim.steps.
/// `on_step` receives each log entry as it is produced.
TrainResult train(const ExperimentConfig& cfg, const std::vector<scene::SceneSample>& data,
                  const std::optional<Checkpoint>& resume = std::nullopt,
                  const std::function<void(const StepLog&)>& on_step = {});

/// Loads a checkpoint's tensors into freshly shaped parameters.
model::Params restore_params(const ExperimentConfig& cfg, const Checkpoint& c);

struct EvalResult {
    std::vector<metrics::Report> per_scene;
    metrics::Report pooled;
};

/// Throws unless the checkpoint's scene hash matches `scene_hash`.
EvalResult evaluate_run(const ExperimentConfig& cfg, const Checkpoint& c, const std::vector<scene::SceneSample>& data,
                        std::uint64_t scene_hash);
/// JSON lines (one per scene plus a pooled line) and the pooled CSV.
void write_eval(const EvalResult& r, const std::vector<scene::SceneSample>& data, const std::filesystem::path& dir);

/// Mean IoU over the largest evaluation range of a pooled report.
double headline_miou(const metrics::Report& r);

struct AblationRow {
    std::string variant;  // preset name or "baseline"
    std::uint64_t seed = 0;
    double miou = 0, occ_iou = 0, final_loss = 0;
};

const std::vector<std::string>& ablation_presets();
/// Config for `preset` (or "baseline") derived from `cfg`.
ExperimentConfig preset_config(const ExperimentConfig& cfg, const std::string& preset);
std::vector<AblationRow> ablate(const ExperimentConfig& cfg, const std::string& preset,
                                const std::vector<scene::SceneSample>& data,
                                const std::function<void(const AblationRow&)>& on_row = {});
/// Side-by-side table: one row per run, then mean and standard deviation per variant.
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace vlscene::train
