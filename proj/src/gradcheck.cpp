#include "vlscene/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vlscene/error.hpp"

namespace vlscene {

bool GradcheckReport::passed() const {
    return std::all_of(groups.begin(), groups.end(), [](const GradGroupReport& g) { return g.passed(); });
}

std::string GradcheckReport::summary() const {
    std::ostringstream os;
    os.precision(3);
    for (const auto& g : groups) {
        os << (g.passed() ? "PASS " : "FAIL ") << g.name << "  entries=" << g.checked
           << "  max_rel=" << std::scientific << g.max_rel_error << "  max_abs=" << g.max_abs_error
           << std::defaultfloat << "  failures=" << g.failures << '\n';
    }
    return os.str();
}

GradcheckReport gradcheck(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                          const GradcheckTolerance& tol, std::size_t max_entries_per_leaf) {
    PrecisionScope f64(Precision::f64);
    for (Tensor& leaf : leaves) {
        if (!leaf.is_leaf() || !leaf.requires_grad()) {
            throw Error("gradcheck: '" + leaf.name() + "' is not a trainable leaf");
        }
        leaf.zero_grad();
    }
    const Tensor base = loss();
    base.backward();

    GradcheckReport report;
    for (Tensor& leaf : leaves) {
        GradGroupReport group;
        group.name = leaf.name().empty() ? "leaf" : leaf.name();
        const std::vector<double> analytic = leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                                             : std::vector<double>(leaf.numel(), 0.0);
        const std::size_t n = leaf.numel();
        const std::size_t stride =
            (max_entries_per_leaf == 0 || n <= max_entries_per_leaf) ? 1 : (n + max_entries_per_leaf - 1) / max_entries_per_leaf;
        auto values = leaf.mutable_data();
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = values[i];
            values[i] = saved + tol.eps;
            const double up = loss().item();
            values[i] = saved - tol.eps;
            const double down = loss().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * tol.eps);
            const double err = std::abs(analytic[i] - numeric);
            const double magnitude = std::max(std::abs(analytic[i]), std::abs(numeric));
            ++group.checked;
            group.max_abs_error = std::max(group.max_abs_error, err);
            if (err > tol.abs) group.max_rel_error = std::max(group.max_rel_error, err / magnitude);
            if (err > std::max(tol.abs, tol.rel * magnitude)) ++group.failures;
        }
        report.groups.push_back(group);
    }
    return report;
}

}  // namespace vlscene
