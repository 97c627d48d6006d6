#pragma once

#include "sdif/nn.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif::nn {

struct AttentionConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    double dropout = 0.1;

    std::size_t head_dim() const { return d_model / n_heads; }

    void validate() const {
        if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
            throw std::invalid_argument("attention: n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                                        std::to_string(d_model) + ")");
        }
        if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("attention: dropout must be in [0, 1)");
    }
};

/// Post-softmax attention matrices, one [target x source] block per head.
struct AttentionWeights {
    std::size_t heads = 0;
    std::size_t target_len = 0;
    std::size_t source_len = 0;
    std::vector<double> values;

    double at(std::size_t head, std::size_t t, std::size_t s) const {
        return values[(head * target_len + t) * source_len + s];
    }
};

/// Additive logit offset applied to masked source positions.
inline constexpr double kMaskedLogit = -1e9;

/// Multi-head scaled dot-product attention: queries from `target`, keys and
/// values from `source`, heads concatenated and projected back to d_model.
/// No positional information is injected. The key projection has no bias: it
/// would shift every logit of a query row equally and cancel in the softmax.
class MultiHeadAttention {
public:
    struct Output {
        Tensor output;
        AttentionWeights weights;
    };

    MultiHeadAttention() = default;
    MultiHeadAttention(const AttentionConfig& cfg, std::mt19937_64& rng)
        : cfg_(validated(cfg)),
          query_(cfg.d_model, cfg.d_model, rng),
          key_(cfg.d_model, cfg.d_model, rng, false),
          value_(cfg.d_model, cfg.d_model, rng),
          out_(cfg.d_model, cfg.d_model, rng) {}

    Output forward(const Tensor& target, const Tensor& source, std::span<const std::uint8_t> source_mask,
                   ForwardContext& ctx) const {
        const std::size_t d = cfg_.d_model;
        if (target.rank() != 2 || source.rank() != 2 || target.dim(1) != d || source.dim(1) != d) {
            throw DimensionError("attention: target " + shape_str(target.shape()) + " and source " +
                                 shape_str(source.shape()) + " must be [L x " + std::to_string(d) + "]");
        }
        const std::size_t lt = target.dim(0), ls = source.dim(0);
        if (source_mask.size() != ls) {
            throw DimensionError("attention: mask length " + std::to_string(source_mask.size()) + " vs source length " +
                                 std::to_string(ls));
        }
        Tensor mask_bias({ls});
        bool any_valid = false;
        for (std::size_t s = 0; s < ls; ++s) {
            if (source_mask[s]) any_valid = true;
            else mask_bias.mutable_values()[s] = kMaskedLogit;
        }
        if (!any_valid) throw DegenerateInputError("attention: every source position is masked");

        const Tensor q = query_(target);
        const Tensor k = key_(source);
        const Tensor v = value_(source);
        const std::size_t hd = cfg_.head_dim();
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

        Output result;
        result.weights.heads = cfg_.n_heads;
        result.weights.target_len = lt;
        result.weights.source_len = ls;
        result.weights.values.reserve(cfg_.n_heads * lt * ls);

        std::vector<Tensor> heads;
        heads.reserve(cfg_.n_heads);
        for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
            const Tensor qh = slice(q, 1, h * hd, hd);
            const Tensor kh = slice(k, 1, h * hd, hd);
            const Tensor vh = slice(v, 1, h * hd, hd);
            const Tensor logits = add_bias(scale(matmul(qh, transpose(kh)), inv_sqrt), mask_bias);
            const Tensor attn = softmax(logits);
            result.weights.values.insert(result.weights.values.end(), attn.values().begin(), attn.values().end());
            heads.push_back(matmul(attn, vh));
        }
        result.output = dropout(out_(concat(heads, 1)), cfg_.dropout, ctx.training, ctx.rng);
        return result;
    }

    void collect(const std::string& prefix, ParameterList& out) const {
        query_.collect(prefix + ".query", out);
        key_.collect(prefix + ".key", out);
        value_.collect(prefix + ".value", out);
        out_.collect(prefix + ".out", out);
    }

    const AttentionConfig& config() const { return cfg_; }
    const Linear& value_projection() const { return value_; }
    const Linear& output_projection() const { return out_; }

private:
    static const AttentionConfig& validated(const AttentionConfig& cfg) {
        cfg.validate();
        return cfg;
    }

    AttentionConfig cfg_;
    Linear query_;
    Linear key_;
    Linear value_;
    Linear out_;
};

/// Cross-modal attention: target supplies queries, source supplies keys/values.
inline MultiHeadAttention::Output cross_attention(const MultiHeadAttention& mha, const Tensor& target,
                                                  const Tensor& source, std::span<const std::uint8_t> source_mask,
                                                  ForwardContext& ctx) {
    return mha.forward(target, source, source_mask, ctx);
}

/// Pre-norm transformer encoder layer:
/// x + MHA(LN(x)) followed by x + FFN(LN(x)).
class EncoderLayer {
public:
    EncoderLayer() = default;
    EncoderLayer(const AttentionConfig& cfg, std::size_t ff_hidden, std::mt19937_64& rng)
        : cfg_(cfg),
          norm_attn_(cfg.d_model),
          attn_(cfg, rng),
          norm_ff_(cfg.d_model),
          ff_(cfg.d_model, ff_hidden, cfg.d_model, rng) {}

    Tensor forward(const Tensor& x, ForwardContext& ctx) const {
        const std::vector<std::uint8_t> all(x.dim(0), 1);
        const Tensor normed = norm_attn_(x);
        const Tensor h = add(x, attn_.forward(normed, normed, all, ctx).output);
        return add(h, dropout(ff_(norm_ff_(h), 0.0, ctx), cfg_.dropout, ctx.training, ctx.rng));
    }

    void collect(const std::string& prefix, ParameterList& out) const {
        norm_attn_.collect(prefix + ".norm_attn", out);
        attn_.collect(prefix + ".attn", out);
        norm_ff_.collect(prefix + ".norm_ff", out);
        ff_.collect(prefix + ".ff", out);
    }

private:
    AttentionConfig cfg_;
    LayerNorm norm_attn_;
    MultiHeadAttention attn_;
    LayerNorm norm_ff_;
    FeedForward ff_;
};

inline Tensor self_attention_layer(const EncoderLayer& layer, const Tensor& m, ForwardContext& ctx) {
    return layer.forward(m, ctx);
}

}  // namespace sdif::nn
