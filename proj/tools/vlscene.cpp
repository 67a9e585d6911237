#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vlscene/config.hpp"
#include "vlscene/error.hpp"
#include "vlscene/gradcheck_targets.hpp"
#include "vlscene/scene_sim.hpp"
#include "vlscene/train.hpp"

namespace fs = std::filesystem;
using namespace vlscene;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<bool> deterministic;
    std::string out_dir;
    std::vector<std::string> overrides;
};

ExperimentConfig resolve(const Globals& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
    for (const auto& o : g.overrides) apply_override(cfg, o);
    if (g.seed) cfg.run.seed = *g.seed;
    if (g.deterministic) cfg.run.deterministic = *g.deterministic;
    if (!g.out_dir.empty()) cfg.run.out_dir = g.out_dir;
    cfg.validate();
    return cfg;
}

std::string hex(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

/// Loads the dataset and refuses one generated from a different scene spec.
scene::Dataset load_matching_dataset(const ExperimentConfig& cfg) {
    const fs::path dir = cfg.dataset_dir();
    if (!fs::exists(dir / "manifest.json")) {
        throw Error("no dataset at " + dir.string() + " (run `vlscene generate` first)");
    }
    scene::Dataset d = scene::read_dataset(dir);
    if (d.scene_hash != cfg.scene_hash()) {
        throw ConfigError("dataset at " + dir.string() + " has scene hash " + hex(d.scene_hash) +
                          " but the config expects " + hex(cfg.scene_hash()));
    }
    return d;
}

int cmd_generate(const ExperimentConfig& cfg) {
    scene::Dataset d;
    d.scene_hash = cfg.scene_hash();
    d.samples = scene::generate_dataset(cfg.scene.spec, cfg.scene.count, cfg.scene.seed);
    scene::write_dataset(d, cfg.dataset_dir());
    std::cout << "wrote " << d.samples.size() << " scenes to " << cfg.dataset_dir().string() << " (scene hash "
              << hex(d.scene_hash) << ")\n";
    return 0;
}

int cmd_train(ExperimentConfig cfg, const std::string& resume_path, std::optional<std::size_t> steps) {
    if (steps) cfg.optim.steps = *steps;
    const scene::Dataset d = load_matching_dataset(cfg);
    const fs::path out = cfg.run.out_dir;
    fs::create_directories(out);

    std::optional<train::Checkpoint> resume;
    if (!resume_path.empty()) resume = train::load_checkpoint(resume_path);
    // A resumed run appends to the log it continues.
    std::ofstream log(out / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
    if (!log) throw Error("cannot write " + (out / "train_log.jsonl").string());
    const train::TrainResult r = train::train(cfg, d.samples, resume, [&](const train::StepLog& s) {
        log << train::to_json_line(s) << '\n';
        log.flush();
    });
    train::save_checkpoint(r.checkpoint, out / "checkpoint.vlck");
    write_text(out / "config.ini", cfg.to_ini());
    if (!r.log.empty()) {
        std::cout << "step " << r.log.back().step << " l_total " << r.log.back().total << '\n';
    }
    std::cout << "checkpoint " << (out / "checkpoint.vlck").string() << " (config hash " << hex(r.checkpoint.config_hash)
              << ")\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, std::string checkpoint) {
    const scene::Dataset d = load_matching_dataset(cfg);
    if (checkpoint.empty()) checkpoint = (cfg.run.out_dir / "checkpoint.vlck").string();
    const train::Checkpoint c = train::load_checkpoint(checkpoint);
    const train::EvalResult r = train::evaluate_run(cfg, c, d.samples, d.scene_hash);
    const fs::path dir = cfg.run.out_dir / "eval";
    train::write_eval(r, d.samples, dir);
    std::cout << read_text(dir / "metrics.csv");
    return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& preset) {
    const scene::Dataset d = load_matching_dataset(cfg);
    const auto rows = train::ablate(cfg, preset, d.samples, [](const train::AblationRow& r) {
        std::cout << r.variant << " seed " << r.seed << " mIoU " << r.miou << '\n' << std::flush;
    });
    const std::string table = train::ablation_table(rows);
    const fs::path path = cfg.run.out_dir / ("ablate_" + preset + ".csv");
    write_text(path, table);
    std::cout << table << "wrote " << path.string() << '\n';
    return 0;
}

int cmd_gradcheck(const std::string& target, std::uint64_t seed, std::size_t seeds) {
    std::vector<std::string> targets;
    if (target == "all") {
        targets = gradcheck_targets::names();
    } else {
        targets.push_back(target);
    }
    bool ok = true;
    for (const auto& t : targets) {
        for (std::uint64_t s = seed; s < seed + seeds; ++s) {
            const GradcheckReport r = gradcheck_targets::run(t, s);
            std::cout << (r.passed() ? "PASS " : "FAIL ") << t << " seed " << s << '\n';
            if (!r.passed() || targets.size() == 1) std::cout << r.summary();
            ok = ok && r.passed();
        }
    }
    return ok ? 0 : 1;
}

/// Markdown summary of whatever a run directory holds.
int cmd_report(const ExperimentConfig& cfg) {
    const fs::path out = cfg.run.out_dir;
    std::ostringstream md;
    md << "# Run report: " << out.string() << "\n\n";
    md << "config hash `" << hex(cfg.hash()) << "`, scene hash `" << hex(cfg.scene_hash()) << "`\n\n";

    const fs::path log = out / "train_log.jsonl";
    if (fs::exists(log)) {
        std::istringstream lines(read_text(log));
        std::string line, first, last;
        std::size_t n = 0;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            if (first.empty()) first = line;
            last = line;
            ++n;
        }
        if (n) {
            const auto a = nlohmann::json::parse(first), b = nlohmann::json::parse(last);
            md << "## Training\n\n" << n << " logged steps\n\n| component | first | last |\n|---|---|---|\n";
            for (const char* k : {"l_total", "l_sem_scal", "l_geo_scal", "l_ce", "l_depth", "l_kd_feat", "l_kd_logits"}) {
                md << "| " << k << " | " << a.at(k).get<double>() << " | " << b.at(k).get<double>() << " |\n";
            }
            md << '\n';
        }
    }
    const fs::path metrics = out / "eval" / "metrics.csv";
    if (fs::exists(metrics)) md << "## Evaluation (pooled)\n\n```\n" << read_text(metrics) << "```\n\n";
    for (const auto& preset : train::ablation_presets()) {
        const fs::path p = out / ("ablate_" + preset + ".csv");
        if (fs::exists(p)) md << "## Ablation: " << preset << "\n\n```\n" << read_text(p) << "```\n\n";
    }
    write_text(out / "report.md", md.str());
    std::cout << md.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Toy camera-based semantic scene completion: data, training, evaluation and checks"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "INI experiment config")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Overrides run.seed");
    app.add_option("--deterministic", g.deterministic, "Overrides run.deterministic");
    app.add_option("--out-dir", g.out_dir, "Overrides run.out_dir");
    app.add_option("--set", g.overrides, "section.key=value override (repeatable)");

    auto* gen = app.add_subcommand("generate", "Write the synthetic dataset");
    auto* tr = app.add_subcommand("train", "Train and write checkpoint.vlck, train_log.jsonl and config.ini");
    std::string resume;
    std::optional<std::size_t> steps;
    tr->add_option("--resume", resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
    tr->add_option("--steps", steps, "Overrides optim.steps");
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint into <out-dir>/eval");
    std::string checkpoint;
    ev->add_option("--checkpoint", checkpoint, "Defaults to <out-dir>/checkpoint.vlck");
    auto* ab = app.add_subcommand("ablate", "Train a preset and the baseline over the ablation seeds");
    std::string preset = "full";
    ab->add_option("--preset", preset, "vlgd, ngp, ssi, kd-feature-only, kd-logits-only or full");
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of one target (or all)");
    std::string target;
    std::uint64_t gc_seed = 0;
    std::size_t gc_seeds = 1;
    gc->add_option("--target", target, "Target name, or all")->required();
    gc->add_option("--seed", gc_seed, "First seed");
    gc->add_option("--seeds", gc_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
    auto* rep = app.add_subcommand("report", "Summarise a run directory into report.md");

    CLI11_PARSE(app, argc, argv);
    try {
        if (gc->parsed()) return cmd_gradcheck(target, gc_seed, gc_seeds);
        const ExperimentConfig cfg = resolve(g);
        if (gen->parsed()) return cmd_generate(cfg);
        if (tr->parsed()) return cmd_train(cfg, resume, steps);
        if (ev->parsed()) return cmd_eval(cfg, checkpoint);
        if (ab->parsed()) return cmd_ablate(cfg, preset);
        if (rep->parsed()) return cmd_report(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
