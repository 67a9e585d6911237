#pragma once

// Semantic and occupancy metrics from additive confusion counts, optionally
// restricted to the near part of the depth axis.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vlscene/labels.hpp"

namespace vlscene::metrics {

struct ConfusionCounts {
    std::vector<std::uint64_t> tp, fp, fn;  // per class
    std::uint64_t occ_tp = 0, occ_fp = 0, occ_fn = 0, occ_tn = 0;
    std::uint64_t evaluated = 0;

    explicit ConfusionCounts(std::size_t num_classes = 0) : tp(num_classes), fp(num_classes), fn(num_classes) {}
    std::size_t num_classes() const { return tp.size(); }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

/// Counts over voxels with x < ceil(range * X) whose gt label is not 255.
ConfusionCounts count(const LabelGrid& pred, const LabelGrid& gt, std::size_t num_classes, double range = 1.0);

struct Scores {
    double range = 1.0;
    std::vector<std::optional<double>> iou;  // per class; empty for class 0 by convention
    std::optional<double> miou, occ_iou, precision, recall;
    std::uint64_t evaluated = 0;
};

/// IoU_c = TP / (TP + FP + FN) for c >= 1. mIoU averages the semantic classes;
/// classes with no TP, FP or FN are skipped unless `absent_as_zero`.
Scores score(const ConfusionCounts& c, double range, bool absent_as_zero = false);

struct Report {
    std::vector<std::string> class_names;
    std::vector<double> ranges;
    std::vector<ConfusionCounts> counts;  // one per range
    std::vector<Scores> scores;
};

/// Throws "no evaluable voxels" when every gt voxel is ignored.
Report evaluate(const LabelGrid& pred, const LabelGrid& gt, const std::vector<double>& ranges,
                const std::vector<std::string>& class_names, bool absent_as_zero = false);
/// Re-scores pooled counts (sum of per-scene reports).
Report pool(const std::vector<Report>& reports, bool absent_as_zero = false);

nlohmann::json to_json(const Report& r);
/// Rows: range, class, IoU; aggregate rows mIoU, occupancy_IoU, precision, recall.
std::string to_csv(const Report& r);

}  // namespace vlscene::metrics
