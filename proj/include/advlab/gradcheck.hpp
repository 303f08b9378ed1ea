#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "advlab/autodiff.hpp"
#include "advlab/error.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;  // at worst_index
    double numeric = 0.0;   // at worst_index
    double tolerance = 0.0;
    bool passed = true;
};

/// Compares the tape gradient of `loss_fn` at `at` against central
/// differences, coordinate by coordinate.
///
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-12).
template <class LossFn>
GradCheckReport finite_diff_check(LossFn&& loss_fn, const Tensor& at, double h, double tol) {
    if (!(h > 0.0)) throw ContractError("finite_diff_check: step h must be positive");
    const Tensor analytic = grad(loss_fn, at);
    GradCheckReport report;
    report.tolerance = tol;
    Tensor probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        probe[i] = at[i] + h;
        const double up = evaluate(loss_fn, probe);
        probe[i] = at[i] - h;
        const double down = evaluate(loss_fn, probe);
        probe[i] = at[i];
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (i == 0 || rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

} // namespace advlab
