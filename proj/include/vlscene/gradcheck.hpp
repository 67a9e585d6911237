#pragma once

// Central finite-difference gradient checking.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vlscene/tensor.hpp"

namespace vlscene {

struct GradcheckTolerance {
    double eps = 1e-5;
    double rel = 1e-4;
    double abs = 1e-7;
};

struct GradGroupReport {
    std::string name;
    std::size_t checked = 0;
    std::size_t failures = 0;
    double max_abs_error = 0.0;
    /// |analytic - numeric| / max(|analytic|, |numeric|), over entries above the abs floor.
    double max_rel_error = 0.0;
    bool passed() const { return failures == 0; }
};

struct GradcheckReport {
    std::vector<GradGroupReport> groups;
    bool passed() const;
    std::string summary() const;
};

/// Compares the tape gradient of `loss` with central differences for every entry
/// of every leaf in `leaves` (each must require grad). Entry i passes when
/// |analytic - numeric| <= max(abs, rel * max(|analytic|, |numeric|)). A nonzero
/// `max_entries_per_leaf` checks an evenly spaced subset of larger leaves.
/// Always evaluates in 64-bit precision.
GradcheckReport gradcheck(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                          const GradcheckTolerance& tol = {}, std::size_t max_entries_per_leaf = 0);

}  // namespace vlscene
