#include "vlscene/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vlscene/binary_io.hpp"
#include "vlscene/error.hpp"
#include "vlscene/ops.hpp"
#include "vlscene/vlft.hpp"

namespace vlscene::train {

namespace {

double round_to(Precision p, double x) { return p == Precision::f32 ? static_cast<double>(static_cast<float>(x)) : x; }

double value_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

void write_text(const std::filesystem::path& path, const std::string& text) {
    io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

double AdamW::learning_rate(std::size_t step) const {
    double lr = cfg_.lr;
    for (std::size_t m : cfg_.milestones)
        if (step >= m) lr *= cfg_.gamma;
    return lr;
}

AdamW::Moments& AdamW::moments(const Tensor& p) {
    for (auto& [name, m] : state_)
        if (name == p.name()) return m;
    state_.emplace_back(p.name(), Moments{std::vector<double>(p.numel(), 0.0), std::vector<double>(p.numel(), 0.0)});
    return state_.back().second;
}

void AdamW::step(const std::vector<Tensor>& params, Precision precision) {
    const double lr = learning_rate(t_);
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_)), c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (Tensor p : params) {
        Moments& s = moments(p);
        if (s.m.size() != p.numel()) throw ShapeError("AdamW: moment size mismatch for '" + p.name() + "'");
        auto x = p.mutable_data();
        const auto g = p.mutable_grad();
        for (std::size_t i = 0; i < x.size(); ++i) {
            s.m[i] = b1 * s.m[i] + (1.0 - b1) * g[i];
            s.v[i] = b2 * s.v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = s.m[i] / c1, vhat = s.v[i] / c2;
            x[i] = round_to(precision, x[i] - lr * cfg_.weight_decay * x[i] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        p.zero_grad();
    }
}

void AdamW::restore(std::size_t steps, std::vector<std::pair<std::string, Moments>> state) {
    t_ = steps;
    state_ = std::move(state);
}

Sampler::Sampler(std::size_t count, std::uint64_t seed) : count_(count), rng_(seed ^ 0x5a5a5a5a5a5a5a5aULL) {
    if (count == 0) throw Error("Sampler: empty dataset");
    reshuffle();
}

void Sampler::reshuffle() {
    order_.resize(count_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

std::vector<std::size_t> Sampler::next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        if (cursor_ == count_) reshuffle();
        out.push_back(order_[cursor_++]);
    }
    return out;
}

std::string Sampler::serialize() const {
    std::ostringstream s;
    s << count_ << ' ' << cursor_;
    for (std::size_t i : order_) s << ' ' << i;
    s << ' ' << rng_;
    return s.str();
}

void Sampler::deserialize(const std::string& text) {
    std::istringstream s(text);
    std::size_t count = 0;
    s >> count >> cursor_;
    if (!s || count != count_) throw FormatError("sampler state was saved for a dataset of a different size");
    order_.assign(count, 0);
    for (auto& i : order_) s >> i;
    s >> rng_;
    if (!s || cursor_ > count_) throw FormatError("malformed sampler state");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    io::ByteWriter w;
    w.magic("VLCK");
    w.u32(kCheckpointVersion);
    w.u64(c.config_hash);
    w.u64(c.scene_hash);
    w.u64(c.step);
    w.str(c.sampler_state);
    w.u32(static_cast<std::uint32_t>(c.params.size()));
    auto block = [&](const Shape& shape, std::span<const double> v) {
        const auto bytes = vlft::encode(shape, v, vlft::DType::f64);
        w.u64(bytes.size());
        w.bytes(bytes);
    };
    for (const Tensor& t : c.params) {
        w.str(t.name());
        block(t.shape(), t.data());
        const auto it = std::find_if(c.moments.begin(), c.moments.end(), [&](const auto& m) { return m.first == t.name(); });
        w.u8(it != c.moments.end());
        if (it != c.moments.end()) {
            block(t.shape(), it->second.m);
            block(t.shape(), it->second.v);
        }
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source) {
    io::ByteReader r(bytes, source);
    r.expect_magic("VLCK");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config_hash = r.u64("config hash");
    c.scene_hash = r.u64("scene hash");
    c.step = r.u64("step");
    c.sampler_state = r.str("sampler state");
    const std::uint32_t n = r.u32("tensor count");
    auto block = [&](const std::string& name) {
        const std::uint64_t len = r.u64("block length");
        const auto span = r.bytes(static_cast<std::size_t>(len), "tensor block");
        return vlft::decode(span, source + ": " + name);
    };
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = r.str("tensor name");
        vlft::Array a = block(name);
        const Shape shape = a.shape;
        c.params.push_back(Tensor::parameter(a.shape, std::move(a.values), name));
        if (r.u8("moment flag")) {
            vlft::Array m = block(name), v = block(name);
            if (m.shape != shape || v.shape != shape) r.fail("moment shape mismatch for '" + name + "'");
            c.moments.emplace_back(name, AdamW::Moments{std::move(m.values), std::move(v.values)});
        }
    }
    r.expect_end();
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) { io::write_file(path, encode_checkpoint(c)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path), path.string());
}

std::string to_json_line(const StepLog& s) {
    nlohmann::json j;
    j["step"] = s.step;
    j["l_sem_scal"] = s.sem_scal;
    j["l_geo_scal"] = s.geo_scal;
    j["l_ce"] = s.ce;
    j["l_depth"] = s.depth;
    j["l_kd_feat"] = s.kd_feat;
    j["l_kd_logits"] = s.kd_logits;
    j["l_total"] = s.total;
    return j.dump();
}

model::Params restore_params(const ExperimentConfig& cfg, const Checkpoint& c) {
    model::Params p = model::Params::init(cfg, 0);
    for (Tensor t : p.tensors()) {
        const auto it = std::find_if(c.params.begin(), c.params.end(), [&](const Tensor& s) { return s.name() == t.name(); });
        if (it == c.params.end()) throw FormatError("checkpoint has no tensor named '" + t.name() + "'");
        if (it->shape() != t.shape()) {
            throw ShapeError("checkpoint tensor '" + t.name() + "' has shape " + shape_str(it->shape()) + ", the config expects " +
                             shape_str(t.shape()));
        }
        std::copy(it->data().begin(), it->data().end(), t.mutable_data().begin());
    }
    return p;
}

TrainResult train(const ExperimentConfig& cfg, const std::vector<scene::SceneSample>& data,
                  const std::optional<Checkpoint>& resume, const std::function<void(const StepLog&)>& on_step) {
    cfg.validate();
    if (data.empty()) throw Error("train: empty dataset");
    const PrecisionScope precision(cfg.run.precision);
    model::Params p = model::Params::init(cfg, cfg.run.seed);
    AdamW opt(cfg.optim);
    Sampler sampler(data.size(), cfg.run.seed);
    std::size_t start = 0;
    if (resume) {
        if (resume->config_hash != cfg.hash()) {
            throw ConfigError("train: checkpoint config hash does not match the current config");
        }
        p = restore_params(cfg, *resume);
        opt.restore(resume->step, resume->moments);
        sampler.deserialize(resume->sampler_state);
        start = resume->step;
        if (start > cfg.optim.steps) throw ConfigError("train: checkpoint is already past optim.steps");
    }
    const std::vector<Tensor> trainable = p.trainable(cfg);
    std::set<std::string> names;
    for (const Tensor& t : p.tensors()) {
        if (!names.insert(t.name()).second) throw Error("train: duplicate parameter name '" + t.name() + "'");
    }

    std::vector<model::Prepared> prepared;
    prepared.reserve(data.size());
    for (const auto& s : data) prepared.push_back(model::prepare(cfg, s));

    TrainResult result;
    const double inv_batch = 1.0 / static_cast<double>(cfg.optim.batch);
    for (std::size_t step = start; step < cfg.optim.steps; ++step) {
        StepLog log;
        log.step = step;
        for (std::size_t i : sampler.next(cfg.optim.batch)) {
            model::Output out;
            try {
                out = model::forward(p, cfg, data[i], prepared[i]);
            } catch (const NonFiniteError& e) {
                throw NonFiniteError("step " + std::to_string(step) + ", scene " + data[i].id + ": " + e.what());
            }
            const std::pair<const char*, double> parts[] = {
                {"l_sem_scal", value_or_zero(out.parts.sem_scal)}, {"l_geo_scal", value_or_zero(out.parts.geo_scal)},
                {"l_ce", value_or_zero(out.parts.ce)},             {"l_depth", value_or_zero(out.parts.depth)},
                {"l_kd_feat", value_or_zero(out.parts.kd_feat)},   {"l_kd_logits", value_or_zero(out.parts.kd_logits)},
                {"l_total", out.total.item()}};
            for (const auto& [name, v] : parts) {
                if (!std::isfinite(v)) {
                    throw NonFiniteError("step " + std::to_string(step) + ": loss component " + name + " is non-finite");
                }
            }
            log.sem_scal += parts[0].second * inv_batch;
            log.geo_scal += parts[1].second * inv_batch;
            log.ce += parts[2].second * inv_batch;
            log.depth += parts[3].second * inv_batch;
            log.kd_feat += parts[4].second * inv_batch;
            log.kd_logits += parts[5].second * inv_batch;
            log.total += parts[6].second * inv_batch;
            scale(out.total, inv_batch).backward();
        }
        opt.step(trainable, cfg.run.precision);
        result.log.push_back(log);
        if (on_step) on_step(log);
    }

    Checkpoint& c = result.checkpoint;
    c.config_hash = cfg.hash();
    c.scene_hash = cfg.scene_hash();
    c.step = std::max<std::size_t>(start, cfg.optim.steps);
    c.params = p.tensors();
    c.moments = opt.state();
    c.sampler_state = sampler.serialize();
    return result;
}

EvalResult evaluate_run(const ExperimentConfig& cfg, const Checkpoint& c, const std::vector<scene::SceneSample>& data,
                        std::uint64_t scene_hash) {
    if (c.scene_hash != scene_hash) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "evaluate: checkpoint scene hash %016llx does not match dataset %016llx",
                      static_cast<unsigned long long>(c.scene_hash), static_cast<unsigned long long>(scene_hash));
        throw ConfigError(buf);
    }
    if (data.empty()) throw Error("evaluate: empty dataset");
    const PrecisionScope precision(cfg.run.precision);
    const model::Params p = restore_params(cfg, c);
    EvalResult r;
    for (const auto& s : data) {
        const model::Prepared prep = model::prepare(cfg, s);
        const model::Output out = model::forward(p, cfg, s, prep, false);
        r.per_scene.push_back(metrics::evaluate(model::predict(out.logits), s.labels, cfg.eval.ranges,
                                                cfg.scene.spec.class_names, cfg.eval.absent_as_zero));
    }
    r.pooled = metrics::pool(r.per_scene, cfg.eval.absent_as_zero);
    return r;
}

void write_eval(const EvalResult& r, const std::vector<scene::SceneSample>& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string lines;
    for (std::size_t i = 0; i < r.per_scene.size(); ++i) {
        nlohmann::json j = metrics::to_json(r.per_scene[i]);
        j["scene"] = i < data.size() ? data[i].id : std::to_string(i);
        lines += j.dump() + "\n";
    }
    nlohmann::json pooled = metrics::to_json(r.pooled);
    pooled["scene"] = "pooled";
    lines += pooled.dump() + "\n";
    write_text(dir / "metrics.jsonl", lines);
    write_text(dir / "metrics.csv", metrics::to_csv(r.pooled));
}

double headline_miou(const metrics::Report& r) {
    if (r.scores.empty()) return 0.0;
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.scores.size(); ++i)
        if (r.scores[i].range > r.scores[best].range) best = i;
    return r.scores[best].miou.value_or(0.0);
}

const std::vector<std::string>& ablation_presets() {
    static const std::vector<std::string> p{"vlgd", "ngp", "ssi", "kd-feature-only", "kd-logits-only", "full"};
    return p;
}

ExperimentConfig preset_config(const ExperimentConfig& cfg, const std::string& preset) {
    ExperimentConfig c = cfg;
    auto toggles = [&](bool v, bool n, bool s) {
        c.model.enable_vlgd = v;
        c.model.enable_ngp = n;
        c.model.enable_ssi = s;
    };
    if (preset == "baseline") {
        toggles(false, false, false);
    } else if (preset == "vlgd") {
        toggles(true, false, false);
    } else if (preset == "ngp") {
        toggles(false, true, false);
    } else if (preset == "ssi") {
        toggles(false, false, true);
    } else if (preset == "kd-feature-only") {
        toggles(true, false, false);
        c.loss.weights.kd_logits = 0.0;
    } else if (preset == "kd-logits-only") {
        toggles(true, false, false);
        c.loss.weights.kd_feat = 0.0;
    } else if (preset == "full") {
        toggles(true, true, true);
    } else {
        std::string known = "baseline";
        for (const auto& n : ablation_presets()) known += ", " + n;
        throw ConfigError("unknown ablation preset '" + preset + "' (known: " + known + ")");
    }
    return c;
}

std::vector<AblationRow> ablate(const ExperimentConfig& cfg, const std::string& preset,
                                const std::vector<scene::SceneSample>& data,
                                const std::function<void(const AblationRow&)>& on_row) {
    preset_config(cfg, preset);
    std::vector<AblationRow> rows;
    const std::uint64_t hash = cfg.scene_hash();
    for (const std::string& variant : {preset, std::string("baseline")}) {
        for (std::uint64_t seed : cfg.ablate.seeds) {
            ExperimentConfig c = preset_config(cfg, variant);
            c.run.seed = seed;
            const TrainResult t = train(c, data);
            const EvalResult e = evaluate_run(c, t.checkpoint, data, hash);
            AblationRow row;
            row.variant = variant;
            row.seed = seed;
            row.miou = headline_miou(e.pooled);
            const auto& s = e.pooled.scores.back();
            row.occ_iou = s.occ_iou.value_or(0.0);
            row.final_loss = t.log.empty() ? 0.0 : t.log.back().total;
            rows.push_back(row);
            if (on_row) on_row(row);
        }
    }
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(6);
    s << "variant,seed,mIoU,occupancy_IoU,final_loss\n";
    std::vector<std::string> variants;
    for (const auto& r : rows) {
        s << r.variant << ',' << r.seed << ',' << r.miou << ',' << r.occ_iou << ',' << r.final_loss << '\n';
        if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
    }
    for (const auto& v : variants) {
        double n = 0, m[3] = {0, 0, 0}, q[3] = {0, 0, 0};
        for (const auto& r : rows) {
            if (r.variant != v) continue;
            const double x[3] = {r.miou, r.occ_iou, r.final_loss};
            n += 1;
            for (int k = 0; k < 3; ++k) {
                m[k] += x[k];
                q[k] += x[k] * x[k];
            }
        }
        s << v << ",mean";
        for (int k = 0; k < 3; ++k) s << ',' << m[k] / n;
        s << '\n' << v << ",std";
        for (int k = 0; k < 3; ++k) s << ',' << std::sqrt(std::max(0.0, q[k] / n - (m[k] / n) * (m[k] / n)));
        s << '\n';
    }
    return s.str();
}

}  // namespace vlscene::train
