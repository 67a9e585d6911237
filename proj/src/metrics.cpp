#include "vlscene/metrics.hpp"

#include <cmath>
#include <sstream>

#include "vlscene/error.hpp"

namespace vlscene::metrics {

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string fmt(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << *v;
    return os.str();
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    if (o.num_classes() != num_classes()) throw ShapeError("confusion counts: class count mismatch");
    for (std::size_t c = 0; c < tp.size(); ++c) {
        tp[c] += o.tp[c];
        fp[c] += o.fp[c];
        fn[c] += o.fn[c];
    }
    occ_tp += o.occ_tp;
    occ_fp += o.occ_fp;
    occ_fn += o.occ_fn;
    occ_tn += o.occ_tn;
    evaluated += o.evaluated;
    return *this;
}

ConfusionCounts count(const LabelGrid& pred, const LabelGrid& gt, std::size_t num_classes, double range) {
    if (pred.extents != gt.extents) throw ShapeError("evaluate: prediction and ground-truth extents differ");
    if (!(range > 0.0) || range > 1.0) throw ShapeError("evaluate: range must be in (0, 1]");
    gt.validate(num_classes);
    pred.validate(num_classes);
    const auto [X, Y, Z] = gt.extents;
    const std::size_t limit = static_cast<std::size_t>(std::ceil(range * static_cast<double>(X) - 1e-9));
    ConfusionCounts c(num_classes);
    for (std::size_t x = 0; x < limit; ++x) {
        for (std::size_t i = x * Y * Z; i < (x + 1) * Y * Z; ++i) {
            const std::uint8_t g = gt.labels[i];
            if (g == kIgnoreLabel) continue;
            const std::uint8_t p = pred.labels[i];
            if (p == kIgnoreLabel) throw FormatError("evaluate: prediction contains the ignore label");
            ++c.evaluated;
            if (p == g) {
                ++c.tp[g];
            } else {
                ++c.fp[p];
                ++c.fn[g];
            }
            const bool po = p != 0, go = g != 0;
            if (po && go) ++c.occ_tp;
            else if (po) ++c.occ_fp;
            else if (go) ++c.occ_fn;
            else ++c.occ_tn;
        }
    }
    return c;
}

Scores score(const ConfusionCounts& c, double range, bool absent_as_zero) {
    Scores s;
    s.range = range;
    s.evaluated = c.evaluated;
    s.iou.resize(c.num_classes());
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 1; k < c.num_classes(); ++k) {
        s.iou[k] = ratio(c.tp[k], c.tp[k] + c.fp[k] + c.fn[k]);
        if (!s.iou[k] && absent_as_zero) s.iou[k] = 0.0;
        if (s.iou[k]) {
            total += *s.iou[k];
            ++n;
        }
    }
    if (n > 0) s.miou = total / static_cast<double>(n);
    s.occ_iou = ratio(c.occ_tp, c.occ_tp + c.occ_fp + c.occ_fn);
    s.precision = ratio(c.occ_tp, c.occ_tp + c.occ_fp);
    s.recall = ratio(c.occ_tp, c.occ_tp + c.occ_fn);
    return s;
}

Report evaluate(const LabelGrid& pred, const LabelGrid& gt, const std::vector<double>& ranges,
                const std::vector<std::string>& class_names, bool absent_as_zero) {
    const std::size_t k = class_names.size();
    if (k < 2) throw ShapeError("evaluate: need at least two classes");
    const ConfusionCounts full = count(pred, gt, k, 1.0);
    if (full.evaluated == 0) throw Error("evaluate: no evaluable voxels");
    Report r;
    r.class_names = class_names;
    r.ranges = ranges;
    for (double range : ranges) {
        r.counts.push_back(range == 1.0 ? full : count(pred, gt, k, range));
        r.scores.push_back(score(r.counts.back(), range, absent_as_zero));
    }
    return r;
}

Report pool(const std::vector<Report>& reports, bool absent_as_zero) {
    if (reports.empty()) throw Error("pool: no reports");
    Report out;
    out.class_names = reports.front().class_names;
    out.ranges = reports.front().ranges;
    out.counts = reports.front().counts;
    for (std::size_t i = 1; i < reports.size(); ++i) {
        if (reports[i].ranges != out.ranges) throw ShapeError("pool: range lists differ");
        for (std::size_t r = 0; r < out.counts.size(); ++r) out.counts[r] += reports[i].counts[r];
    }
    for (std::size_t r = 0; r < out.ranges.size(); ++r) out.scores.push_back(score(out.counts[r], out.ranges[r], absent_as_zero));
    return out;
}

nlohmann::json to_json(const Report& r) {
    nlohmann::json j;
    j["classes"] = r.class_names;
    j["ranges"] = nlohmann::json::array();
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
        const Scores& s = r.scores[i];
        const ConfusionCounts& c = r.counts[i];
        nlohmann::json e;
        e["range"] = s.range;
        e["evaluated"] = s.evaluated;
        nlohmann::json iou = nlohmann::json::object();
        for (std::size_t k = 1; k < s.iou.size(); ++k) iou[r.class_names[k]] = opt(s.iou[k]);
        e["iou"] = iou;
        e["miou"] = opt(s.miou);
        e["occupancy_iou"] = opt(s.occ_iou);
        e["precision"] = opt(s.precision);
        e["recall"] = opt(s.recall);
        e["counts"] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn},
                       {"occ", {c.occ_tp, c.occ_fp, c.occ_fn, c.occ_tn}}};
        j["ranges"].push_back(e);
    }
    return j;
}

std::string to_csv(const Report& r) {
    std::ostringstream os;
    os << "range,class,IoU\n";
    for (const Scores& s : r.scores) {
        const std::string range = fmt(s.range);
        for (std::size_t k = 1; k < s.iou.size(); ++k) os << range << ',' << r.class_names[k] << ',' << fmt(s.iou[k]) << '\n';
        os << range << ",mIoU," << fmt(s.miou) << '\n';
        os << range << ",occupancy_IoU," << fmt(s.occ_iou) << '\n';
        os << range << ",precision," << fmt(s.precision) << '\n';
        os << range << ",recall," << fmt(s.recall) << '\n';
    }
    return os.str();
}

}  // namespace vlscene::metrics
