#pragma once

#include "sdif/nn.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sdif::train {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// One AdamW update of `params` from their accumulated grads. Weight decay
/// acts on the parameter itself and never enters the moment estimates.
/// Parameters without a grad are treated as having a zero gradient.
inline void adamw_step(const nn::ParameterList& params, AdamWState& state, const AdamWConfig& cfg) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.tensor.numel(), 0.0);
            state.v.emplace_back(p.tensor.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adamw: parameter list changed between steps");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor handle = params[i].tensor;
        auto theta = handle.mutable_values();
        auto g = handle.grad();
        const bool has_grad = g.size() == theta.size();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double gj = has_grad ? g[j] : 0.0;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            theta[j] -= cfg.lr * cfg.weight_decay * theta[j];
            theta[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

/// Stateful wrapper bound to one parameter list.
class AdamW {
public:
    AdamW(nn::ParameterList params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {}

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }
    void step() { adamw_step(params_, state_, cfg_); }

    const AdamWState& state() const { return state_; }
    AdamWConfig& config() { return cfg_; }

private:
    nn::ParameterList params_;
    AdamWConfig cfg_;
    AdamWState state_;
};

}  // namespace sdif::train
