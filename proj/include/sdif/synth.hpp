#pragma once

#include "sdif/augment/tokenizer.hpp"
#include "sdif/data.hpp"
#include "sdif/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif::data {

enum class SynthRule {
    // Label bits are recoverable only by combining video and audio; text
    // carries the lowest bit alone.
    CrossModal,
    // Label is visible only through keyword cues in raw_text; video and
    // audio are label-free noise.
    TextKeywords,
};

struct SynthSpec {
    std::size_t n_samples = 200;
    std::size_t n_classes = 20;
    FeatureDims dims{16, 16, 16};
    std::size_t text_len = 8;
    std::size_t video_len = 12;
    std::size_t audio_len = 12;
    // Each sequence keeps between min_valid_fraction * len and len valid steps.
    double min_valid_fraction = 0.5;
    double amplitude = 1.5;
    double noise = 1.0;
    SynthRule rule = SynthRule::CrossModal;
    std::string id_prefix = "s";
};

inline std::size_t label_bits(std::size_t n_classes) {
    std::size_t b = 0;
    while ((std::size_t{1} << b) < n_classes) ++b;
    return b;
}

/// Fixed random structure shared by every split drawn from one seed.
struct SynthWorld {
    std::vector<std::vector<double>> video_dirs;  // one unit vector per label bit
    std::vector<std::vector<double>> audio_dirs;
    std::vector<double> text_dir;
    std::uint64_t token_seed = 0;
};

namespace synth_detail {

inline std::vector<double> unit_vector(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
        x = g(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

/// Values are stored at float32 precision so record files round-trip exactly.
inline double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Sequence of `len` steps: the first `valid` carry signal + noise and are
/// unmasked; the rest are noise-only padding with mask 0.
template <typename SignalFn>
ModalityFeatures sequence(std::size_t len, std::size_t dim, std::size_t valid, double noise, std::mt19937_64& rng,
                          SignalFn signal) {
    std::normal_distribution<double> g(0.0, noise > 0.0 ? noise : 1.0);
    ModalityFeatures m;
    m.length = len;
    m.dim = dim;
    m.values.resize(len * dim);
    m.mask.assign(len, 0);
    for (std::size_t t = 0; t < len; ++t) {
        const bool on = t < valid;
        m.mask[t] = on ? 1 : 0;
        for (std::size_t j = 0; j < dim; ++j) m.values[t * dim + j] = f32((on ? signal(t, j) : 0.0) + (noise > 0.0 ? g(rng) : 0.0));
    }
    return m;
}

inline std::size_t draw_valid(std::size_t len, double min_fraction, std::mt19937_64& rng) {
    const auto lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(min_fraction * static_cast<double>(len))));
    return std::uniform_int_distribution<std::size_t>(std::min(lo, len), len)(rng);
}

inline void check(const SynthSpec& spec) {
    if (spec.n_classes < 2) throw std::invalid_argument("synth: n_classes must be >= 2");
    if (spec.dims.text == 0 || spec.dims.video == 0 || spec.dims.audio == 0) throw std::invalid_argument("synth: dims must be positive");
    if (spec.text_len == 0 || spec.video_len == 0 || spec.audio_len == 0) throw std::invalid_argument("synth: lengths must be positive");
}

inline IntentTaxonomy taxonomy_for(std::size_t k) {
    return k == 20 ? default_intent_taxonomy() : IntentTaxonomy::generic(k);
}

/// Token feature: a fixed random vector per token string.
inline std::vector<double> token_vector(const std::string& token, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ fnv1a(token));
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = g(rng);
    return v;
}

inline std::vector<Sample> generate(const SynthSpec& spec, const SynthWorld& world, const IntentTaxonomy& taxonomy,
                                    std::size_t n, std::mt19937_64& rng) {
    // Balanced labels: round-robin, then shuffled.
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % spec.n_classes);
    std::shuffle(labels.begin(), labels.end(), rng);

    const std::size_t bits = label_bits(spec.n_classes);
    const auto& d = spec.dims;
    std::bernoulli_distribution coin(0.5);
    std::vector<Sample> out;
    out.reserve(n);
    const int width = static_cast<int>(std::to_string(n).size());
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        std::string num = std::to_string(i);
        s.id = spec.id_prefix + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        s.label = labels[i];
        const auto y = static_cast<std::size_t>(s.label);

        const std::size_t vv = draw_valid(spec.video_len, spec.min_valid_fraction, rng);
        const std::size_t av = draw_valid(spec.audio_len, spec.min_valid_fraction, rng);
        if (spec.rule == SynthRule::CrossModal) {
            // video: random signs; audio: the same signs flipped by each label bit.
            std::vector<double> sv(bits), sa(bits);
            for (std::size_t b = 0; b < bits; ++b) {
                sv[b] = coin(rng) ? 1.0 : -1.0;
                sa[b] = sv[b] * (((y >> b) & 1u) ? 1.0 : -1.0);
            }
            auto mix = [&](const std::vector<std::vector<double>>& dirs, const std::vector<double>& sign) {
                return [&spec, &dirs, bits, sign](std::size_t, std::size_t j) {
                    double v = 0.0;
                    for (std::size_t b = 0; b < bits; ++b) v += sign[b] * dirs[b][j];
                    return spec.amplitude * v;
                };
            };
            s.video = sequence(spec.video_len, d.video, vv, spec.noise, rng, mix(world.video_dirs, sv));
            s.audio = sequence(spec.audio_len, d.audio, av, spec.noise, rng, mix(world.audio_dirs, sa));
            const double parity = (y & 1u) ? 1.0 : -1.0;
            const std::size_t tv = draw_valid(spec.text_len, spec.min_valid_fraction, rng);
            s.text = sequence(spec.text_len, d.text, tv, spec.noise, rng,
                              [&](std::size_t, std::size_t j) { return spec.amplitude * parity * world.text_dir[j]; });
        } else {
            auto silent = [](std::size_t, std::size_t) { return 0.0; };
            s.video = sequence(spec.video_len, d.video, vv, spec.noise, rng, silent);
            s.audio = sequence(spec.audio_len, d.audio, av, spec.noise, rng, silent);
            s.raw_text = render_utterance(taxonomy, y, rng);
            auto tokens = aug::tokenize(*s.raw_text);
            if (tokens.size() > spec.text_len) tokens.resize(spec.text_len);
            std::vector<std::vector<double>> rows;
            for (const auto& tok : tokens) rows.push_back(token_vector(tok, d.text, world.token_seed));
            s.text = sequence(spec.text_len, d.text, tokens.size(), 0.0, rng,
                              [&](std::size_t t, std::size_t j) { return rows[t][j]; });
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace synth_detail

inline SynthWorld make_synth_world(const SynthSpec& spec, std::uint64_t seed) {
    synth_detail::check(spec);
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 0x5EED);
    SynthWorld w;
    const std::size_t bits = label_bits(spec.n_classes);
    for (std::size_t b = 0; b < bits; ++b) w.video_dirs.push_back(synth_detail::unit_vector(spec.dims.video, rng));
    for (std::size_t b = 0; b < bits; ++b) w.audio_dirs.push_back(synth_detail::unit_vector(spec.dims.audio, rng));
    w.text_dir = synth_detail::unit_vector(spec.dims.text, rng);
    w.token_seed = rng();
    return w;
}

/// Tri-modal synthetic dataset with `spec.n_samples` balanced samples.
inline Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
    const SynthWorld world = make_synth_world(spec, seed);
    Dataset ds{spec.dims, synth_detail::taxonomy_for(spec.n_classes), {}};
    std::mt19937_64 rng(seed);
    ds.samples = synth_detail::generate(spec, world, ds.taxonomy, spec.n_samples, rng);
    return ds;
}

/// Train/dev/test splits drawn from one shared world (spec.n_samples is ignored).
inline DataSplits synth_splits(const SynthSpec& spec, std::size_t n_train, std::size_t n_dev, std::size_t n_test,
                               std::uint64_t seed) {
    const SynthWorld world = make_synth_world(spec, seed);
    DataSplits out;
    const std::size_t sizes[3] = {n_train, n_dev, n_test};
    Dataset* targets[3] = {&out.train, &out.dev, &out.test};
    for (int i = 0; i < 3; ++i) {
        SynthSpec part = spec;
        part.id_prefix = spec.id_prefix + split_name(i) + "-";
        Dataset& ds = *targets[i];
        ds.dims = spec.dims;
        ds.taxonomy = synth_detail::taxonomy_for(spec.n_classes);
        std::mt19937_64 rng(seed + 1000003ull * static_cast<std::uint64_t>(i + 1));
        ds.samples = synth_detail::generate(part, world, ds.taxonomy, sizes[i], rng);
    }
    return out;
}

inline const char* to_string(SynthRule r) { return r == SynthRule::CrossModal ? "cross_modal" : "text_keywords"; }

inline SynthRule parse_synth_rule(const std::string& s) {
    if (s == "cross_modal") return SynthRule::CrossModal;
    if (s == "text_keywords") return SynthRule::TextKeywords;
    throw std::invalid_argument("unknown synth rule '" + s + "' (expected cross_modal or text_keywords)");
}

}  // namespace sdif::data
