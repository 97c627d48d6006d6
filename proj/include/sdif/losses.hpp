#pragma once

#include "sdif/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif {

/// -log softmax(logits)[label], fused so the gradient is softmax - one_hot.
inline Tensor cross_entropy(const Tensor& logits, std::size_t label) {
    if (logits.rank() != 1 || logits.numel() < 2) {
        throw DimensionError("cross_entropy: expected logits [K>=2], got " + shape_str(logits.shape()));
    }
    const std::size_t k = logits.numel();
    if (label >= k) {
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
    }
    auto z = logits.values();
    const double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += (p[j] = std::exp(z[j] - mx));
    for (auto& v : p) v /= total;
    const double loss = std::log(total) + mx - z[label];
    return detail::make_result({}, {loss}, {logits}, "cross_entropy", [p = std::move(p), label](detail::Node& self) {
        auto& g = detail::grad_of(self, 0);
        const double go = self.grad[0];
        for (std::size_t j = 0; j < p.size(); ++j) g[j] += go * (p[j] - (j == label ? 1.0 : 0.0));
    });
}

enum class AugLossMode {
    CrossEntropy,   // -log p[gold]
    PerClassBinary  // -sum_j [y_j log p_j + (1 - y_j) log(1 - p_j)]
};

/// Counts log arguments that had to be clamped away from zero.
struct AugLossStats {
    std::size_t clamped = 0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Loss on a predicted class distribution for the text-branch classifier.
inline Tensor aug_loss(const Tensor& probs, std::size_t gold, AugLossMode mode = AugLossMode::CrossEntropy,
                       AugLossStats* stats = nullptr) {
    if (probs.rank() != 1 || probs.numel() < 2) {
        throw DimensionError("aug_loss: expected distribution [K>=2], got " + shape_str(probs.shape()));
    }
    const std::size_t k = probs.numel();
    if (gold >= k) throw std::out_of_range("aug_loss: gold " + std::to_string(gold) + " outside [0, " + std::to_string(k) + ")");
    auto p = probs.values();

    // Returns log(max(x, floor)); `live` reports whether the derivative flows.
    auto safe_log = [&](double x, bool& live) {
        live = x > kProbabilityFloor;
        if (!live && stats) ++stats->clamped;
        return std::log(std::max(x, kProbabilityFloor));
    };

    // dL/dp_j, zero where a log argument was clamped.
    std::vector<double> dp(k, 0.0);
    double loss = 0.0;
    bool live = true;
    if (mode == AugLossMode::CrossEntropy) {
        loss = -safe_log(p[gold], live);
        if (live) dp[gold] = -1.0 / p[gold];
    } else {
        for (std::size_t j = 0; j < k; ++j) {
            if (j == gold) {
                loss -= safe_log(p[j], live);
                if (live) dp[j] = -1.0 / p[j];
            } else {
                loss -= safe_log(1.0 - p[j], live);
                if (live) dp[j] = 1.0 / (1.0 - p[j]);
            }
        }
    }
    return detail::make_result({}, {loss}, {probs}, "aug_loss", [dp = std::move(dp)](detail::Node& self) {
        auto& g = detail::grad_of(self, 0);
        for (std::size_t j = 0; j < dp.size(); ++j) g[j] += self.grad[0] * dp[j];
    });
}

inline const char* to_string(AugLossMode m) { return m == AugLossMode::CrossEntropy ? "ce" : "binary"; }

inline AugLossMode parse_aug_loss_mode(const std::string& s) {
    if (s == "ce" || s == "cross_entropy") return AugLossMode::CrossEntropy;
    if (s == "binary" || s == "literal") return AugLossMode::PerClassBinary;
    throw std::invalid_argument("unknown aug loss mode '" + s + "' (expected ce or binary)");
}

}  // namespace sdif
