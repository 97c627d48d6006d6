#pragma once

#include "sdif/attention.hpp"
#include "sdif/grad_check.hpp"
#include "sdif/losses.hpp"
#include "sdif/model.hpp"
#include "sdif/synth.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace sdif {

struct NamedGradCheck {
    std::string name;
    GradCheckReport report;
};

namespace grad_suite_detail {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> g(0.0, scale);
    for (auto& v : t.mutable_values()) v = g(rng);
    return t;
}

/// Reduces any tensor to a scalar with fixed random weights so every output
/// coordinate contributes a distinct gradient.
inline std::function<Tensor(const Tensor&)> projector(const Shape& shape, std::mt19937_64& rng) {
    Tensor w = random_tensor(shape, rng);
    return [w](const Tensor& y) { return sum(mul(y, w)); };
}

inline std::vector<std::string> names_of(const nn::ParameterList& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps) out.push_back(p.name);
    return out;
}

inline std::vector<Tensor> tensors_of(const nn::ParameterList& ps) {
    std::vector<Tensor> out;
    for (const auto& p : ps) out.push_back(p.tensor);
    return out;
}

}  // namespace grad_suite_detail

/// Tiny configuration used for finite-difference verification.
inline model::SDIFConfig tiny_grad_config() {
    model::SDIFConfig c;
    c.text_dim = 4;
    c.video_dim = 5;
    c.audio_dim = 3;
    c.d_model = 8;
    c.n_heads = 2;
    c.deep_layers = 1;
    c.n_classes = 4;
    c.dropout = 0.1;
    return c;
}

/// Central-difference checks of every layer type and of whole forward passes.
inline std::vector<NamedGradCheck> run_grad_suite(std::uint64_t seed = 0, GradCheckOptions opts = {}) {
    using namespace grad_suite_detail;
    std::mt19937_64 rng(seed);
    std::vector<NamedGradCheck> out;
    auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                     std::vector<std::string> names = {}) {
        out.push_back({name, grad_check(f, std::move(leaves), names, opts)});
    };

    {
        Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
        auto p = projector({3, 2}, rng);
        check("matmul", [&] { return p(matmul(a, b)); }, {a, b}, {"a", "b"});
    }
    {
        Tensor x = random_tensor({2, 3, 4}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({5}, rng);
        auto p = projector({2, 3, 5}, rng);
        check("affine", [&] { return p(affine(x, w, b)); }, {x, w, b}, {"x", "W", "b"});
    }
    {
        Tensor x = random_tensor({3, 6}, rng);
        auto p = projector({3, 6}, rng);
        check("softmax", [&] { return p(softmax(x)); }, {x}, {"x"});
        check("gelu", [&] { return p(gelu(x)); }, {x}, {"x"});
    }
    {
        Tensor x = random_tensor({3, 5}, rng), g = random_tensor({5}, rng), b = random_tensor({5}, rng);
        auto p = projector({3, 5}, rng);
        check("layernorm", [&] { return p(layernorm(x, g, b)); }, {x, g, b}, {"x", "gain", "bias"});
    }
    {
        Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 4}, rng);
        auto p = projector({2, 3}, rng);
        check("concat+slice", [&] { return p(slice(concat({a, b}, 1), 1, 2, 3)); }, {a, b}, {"a", "b"});
    }
    {
        Tensor x = random_tensor({5, 3}, rng);
        const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
        auto p = projector({3}, rng);
        check("masked_mean", [&] { return p(masked_mean(x, mask)); }, {x}, {"x"});
    }
    {
        Tensor z = random_tensor({6}, rng);
        check("cross_entropy", [&] { return cross_entropy(z, 2); }, {z}, {"logits"});
        check("aug_loss (ce)", [&] { return aug_loss(softmax(z), 4, AugLossMode::CrossEntropy); }, {z}, {"logits"});
        check("aug_loss (binary)", [&] { return aug_loss(softmax(z), 1, AugLossMode::PerClassBinary); }, {z}, {"logits"});
    }
    const nn::AttentionConfig acfg{8, 2, 0.1};
    {
        nn::MultiHeadAttention mha(acfg, rng);
        Tensor target = random_tensor({3, 8}, rng), source = random_tensor({4, 8}, rng);
        const std::vector<std::uint8_t> mask{1, 1, 0, 1};
        nn::ParameterList ps;
        mha.collect("mha", ps);
        auto leaves = tensors_of(ps);
        auto names = names_of(ps);
        leaves.push_back(target);
        names.push_back("target");
        leaves.push_back(source);
        names.push_back("source");
        auto p = projector({3, 8}, rng);
        check("cross_attention", [&] {
            nn::ForwardContext ctx{false, nullptr};
            return p(nn::cross_attention(mha, target, source, mask, ctx).output);
        }, leaves, names);
    }
    {
        nn::EncoderLayer layer(acfg, 32, rng);
        Tensor m = random_tensor({6, 8}, rng);
        nn::ParameterList ps;
        layer.collect("enc", ps);
        auto leaves = tensors_of(ps);
        auto names = names_of(ps);
        leaves.push_back(m);
        names.push_back("M");
        auto p = projector({6, 8}, rng);
        check("encoder_layer (dropout, fixed mask)", [&] {
            std::mt19937_64 drop(seed + 17);
            nn::ForwardContext ctx{true, &drop};
            return p(nn::self_attention_layer(layer, m, ctx));
        }, leaves, names);
    }

    auto full_model_check = [&](const std::string& name, model::SDIFConfig cfg, data::SynthRule rule, bool assist) {
        data::SynthSpec spec;
        spec.n_samples = 4;
        spec.n_classes = cfg.n_classes;
        spec.dims = {cfg.text_dim, cfg.video_dim, cfg.audio_dim};
        spec.text_len = 5;
        spec.video_len = 4;
        spec.audio_len = 6;
        spec.rule = rule;
        const data::Dataset ds = data::synth_dataset(spec, seed + 3);
        if (rule == data::SynthRule::TextKeywords) {
            std::vector<std::string> texts;
            for (const auto& s : ds.samples) texts.push_back(*s.raw_text);
            cfg.vocab = aug::Vocab::build(texts).tokens();
            cfg.assist_head = assist;
        }
        const model::SDIFModel m(cfg, seed + 5);
        const auto ps = m.parameters();
        const auto& sample = ds.samples[1];
        check(name, [&] {
            std::mt19937_64 drop(seed + 29);
            nn::ForwardContext ctx{true, &drop};
            Tensor loss = cross_entropy(m.forward(sample, ctx), static_cast<std::size_t>(sample.label));
            if (assist) loss = add(loss, aug_loss(softmax(m.text_logits(*sample.raw_text)), 0));
            return loss;
        }, tensors_of(ps), names_of(ps));
    };
    full_model_check("sdif forward (all representations)", tiny_grad_config(), data::SynthRule::CrossModal, false);
    {
        auto cfg = tiny_grad_config();
        cfg.tri_modal_linear = true;
        cfg.deep_layers = 2;
        full_model_check("sdif forward (linear tri-modal, 2 deep layers)", cfg, data::SynthRule::CrossModal, false);
    }
    full_model_check("sdif forward (token text branch + assist head)", tiny_grad_config(), data::SynthRule::TextKeywords, true);
    return out;
}

}  // namespace sdif
