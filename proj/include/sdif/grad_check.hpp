#pragma once

#include "sdif/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace sdif {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
    // the floor keeps coordinates with vanishing gradient from dividing by ~0.
    double denominator_floor = 1e-6;
};

struct GradCheckReport {
    std::size_t coordinates = 0;
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::string worst_location;
    bool passed = false;
};

/// Compares reverse-mode gradients of a scalar function of several leaf
/// tensors against central differences, coordinate by coordinate.
///
/// `f` must rebuild its graph from the current values of `leaves` on every
/// call and must be deterministic (fix any dropout rng inside `f`).
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                                  const std::vector<std::string>& names = {}, GradCheckOptions opts = {}) {
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    f().backward();

    GradCheckReport report;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        auto& leaf = leaves[k];
        std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
        analytic.resize(leaf.numel(), 0.0);
        auto values = leaf.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            double plus = 0.0, minus = 0.0;
            {
                NoGradGuard guard;
                values[i] = saved + opts.step;
                plus = f().item();
                values[i] = saved - opts.step;
                minus = f().item();
            }
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * opts.step);
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opts.denominator_floor});
            const double rel = abs_err / denom;
            ++report.coordinates;
            report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
            if (rel > report.max_relative_error || report.worst_location.empty()) {
                report.max_relative_error = std::max(rel, report.max_relative_error);
                report.worst_location = (k < names.size() ? names[k] : "input" + std::to_string(k)) + "[" +
                                        std::to_string(i) + "]";
            }
        }
        leaf.zero_grad();
    }
    report.passed = report.max_relative_error < opts.tolerance;
    return report;
}

/// Single-input convenience overload.
inline GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                  GradCheckOptions opts = {}) {
    return grad_check([&] { return f(x); }, {x}, {"x"}, opts);
}

}  // namespace sdif
