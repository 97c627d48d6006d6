#pragma once

#include "sdif/ops.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace sdif::nn {

/// Per-forward switches: training mode enables dropout, which draws from rng.
struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;
};

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

inline Tensor make_parameter(Shape shape, double fill = 0.0) {
    Tensor t(std::move(shape), fill);
    t.set_requires_grad(true);
    return t;
}

/// Glorot-uniform initialised [in x out] weight.
inline Tensor glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    Tensor t = make_parameter({in, out});
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : t.mutable_values()) v = dist(rng);
    return t;
}

class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias = true)
        : weight_(glorot(in, out, rng)), bias_(make_parameter({out})), has_bias_(with_bias) {}

    Tensor operator()(const Tensor& x) const { return affine(x, weight_, has_bias_ ? bias_ : zero_bias()); }

    void collect(const std::string& prefix, ParameterList& out) const {
        out.push_back({prefix + ".weight", weight_});
        if (has_bias_) out.push_back({prefix + ".bias", bias_});
    }

    std::size_t in_features() const { return weight_.dim(0); }
    std::size_t out_features() const { return weight_.dim(1); }
    const Tensor& weight() const { return weight_; }
    const Tensor& bias() const { return bias_; }

private:
    // Constant zero bias, shared by every call of a bias-free layer.
    const Tensor& zero_bias() const {
        if (!zero_.defined()) zero_ = Tensor({weight_.dim(1)});
        return zero_;
    }

    Tensor weight_;
    Tensor bias_;
    bool has_bias_ = true;
    mutable Tensor zero_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(std::size_t d, double eps = 1e-5)
        : gain_(make_parameter({d}, 1.0)), bias_(make_parameter({d})), eps_(eps) {}

    Tensor operator()(const Tensor& x) const { return layernorm(x, gain_, bias_, eps_); }

    void collect(const std::string& prefix, ParameterList& out) const {
        out.push_back({prefix + ".gain", gain_});
        out.push_back({prefix + ".bias", bias_});
    }

private:
    Tensor gain_;
    Tensor bias_;
    double eps_ = 1e-5;
};

/// Two affine maps with GELU between them.
class FeedForward {
public:
    FeedForward() = default;
    FeedForward(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng)
        : first_(in, hidden, rng), second_(hidden, out, rng) {}

    Tensor operator()(const Tensor& x, double dropout_rate, ForwardContext& ctx) const {
        return second_(dropout(gelu(first_(x)), dropout_rate, ctx.training, ctx.rng));
    }

    void collect(const std::string& prefix, ParameterList& out) const {
        first_.collect(prefix + ".fc1", out);
        second_.collect(prefix + ".fc2", out);
    }

private:
    Linear first_;
    Linear second_;
};

inline std::size_t parameter_count(const ParameterList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

}  // namespace sdif::nn
