#pragma once

#include "sdif/attention.hpp"
#include "sdif/augment/tokenizer.hpp"
#include "sdif/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif::model {

using json = nlohmann::json;

/// Pooled representation slots, declared in canonical stacking order.
enum class Rep : std::uint8_t { V = 0, T, A, VT, AT, VAT };

inline constexpr std::array<Rep, 6> kSlotOrder = {Rep::V, Rep::T, Rep::A, Rep::VT, Rep::AT, Rep::VAT};
inline constexpr std::array<const char*, 6> kRepNames = {"v", "t", "a", "v_t", "a_t", "va_t"};

inline const char* rep_name(Rep r) { return kRepNames[static_cast<std::size_t>(r)]; }

inline Rep parse_rep(std::string name) {
    std::string key;
    for (char c : name)
        if (!std::isspace(static_cast<unsigned char>(c))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (std::size_t i = 0; i < kRepNames.size(); ++i) {
        std::string compact = kRepNames[i];
        compact.erase(std::remove(compact.begin(), compact.end(), '_'), compact.end());
        if (key == kRepNames[i] || key == compact) return kSlotOrder[i];
    }
    throw std::invalid_argument("unknown representation '" + name + "' (expected one of v,t,a,v_t,a_t,va_t)");
}

/// Subset of representation slots. Iteration is always in canonical order,
/// whatever order the slots were named in.
class RepSet {
public:
    constexpr RepSet() = default;
    RepSet(std::initializer_list<Rep> reps) {
        for (Rep r : reps) insert(r);
    }

    static RepSet all() { return {Rep::V, Rep::T, Rep::A, Rep::VT, Rep::AT, Rep::VAT}; }

    /// Comma-separated names, e.g. "v,t,a" or "v_t,a_t".
    static RepSet parse(const std::string& list) {
        RepSet s;
        std::string cur;
        for (char c : list + ",") {
            if (c == ',') {
                if (!cur.empty()) s.insert(parse_rep(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        return s;
    }

    bool contains(Rep r) const { return (bits_ >> static_cast<unsigned>(r)) & 1u; }
    void insert(Rep r) { bits_ = static_cast<std::uint8_t>(bits_ | (1u << static_cast<unsigned>(r))); }
    void erase(Rep r) { bits_ = static_cast<std::uint8_t>(bits_ & ~(1u << static_cast<unsigned>(r))); }
    bool empty() const { return bits_ == 0; }
    std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

    std::vector<Rep> slots() const {
        std::vector<Rep> out;
        for (Rep r : kSlotOrder)
            if (contains(r)) out.push_back(r);
        return out;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (Rep r : slots()) out.emplace_back(rep_name(r));
        return out;
    }

    std::string to_string() const {
        std::string s;
        for (const auto& n : names()) s += (s.empty() ? "" : ",") + n;
        return s;
    }

    bool operator==(const RepSet&) const = default;

private:
    std::uint8_t bits_ = 0;
};

struct SDIFConfig {
    std::size_t text_dim = 768;
    std::size_t video_dim = 256;
    std::size_t audio_dim = 768;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t deep_layers = 1;
    std::size_t ff_multiplier = 4;
    RepSet enabled_reps = RepSet::all();
    std::size_t n_classes = 20;
    double dropout = 0.1;
    bool ablate_shallow = false;
    bool ablate_deep = false;
    // Project the concatenated [V_T, T, A_T] with one affine map instead of an MLP.
    bool tri_modal_linear = false;
    // Non-empty: text comes from a learned token embedding of raw_text.
    std::vector<std::string> vocab;
    // Auxiliary classifier on the pooled text branch, used for assist learning.
    bool assist_head = false;

    /// Representations actually stacked: ablate_shallow removes the aligned ones.
    RepSet effective_reps() const {
        RepSet r = enabled_reps;
        if (ablate_shallow) {
            r.erase(Rep::VT);
            r.erase(Rep::AT);
            r.erase(Rep::VAT);
        }
        return r;
    }

    std::size_t effective_deep_layers() const { return ablate_deep ? 0 : deep_layers; }
    bool uses_tokens() const { return !vocab.empty(); }

    nn::AttentionConfig attention() const { return {d_model, n_heads, dropout}; }

    void validate() const {
        attention().validate();
        if (effective_reps().empty()) throw std::invalid_argument("config: no representation left enabled");
        if (n_classes < 2) throw std::invalid_argument("config: n_classes must be >= 2");
        if (deep_layers > 16) throw std::invalid_argument("config: deep_layers must be <= 16");
        if (text_dim == 0 || video_dim == 0 || audio_dim == 0) throw std::invalid_argument("config: feature dims must be positive");
    }

    bool operator==(const SDIFConfig&) const = default;
};

inline void to_json(json& j, const SDIFConfig& c) {
    j = json{{"text_dim", c.text_dim},
             {"video_dim", c.video_dim},
             {"audio_dim", c.audio_dim},
             {"d_model", c.d_model},
             {"n_heads", c.n_heads},
             {"deep_layers", c.deep_layers},
             {"ff_multiplier", c.ff_multiplier},
             {"enabled_reps", c.enabled_reps.names()},
             {"n_classes", c.n_classes},
             {"dropout", c.dropout},
             {"ablate_shallow", c.ablate_shallow},
             {"ablate_deep", c.ablate_deep},
             {"tri_modal_linear", c.tri_modal_linear},
             {"assist_head", c.assist_head},
             {"vocab", c.vocab}};
}

/// Missing keys keep their defaults.
inline void from_json(const json& j, SDIFConfig& c) {
    c.text_dim = j.value("text_dim", c.text_dim);
    c.video_dim = j.value("video_dim", c.video_dim);
    c.audio_dim = j.value("audio_dim", c.audio_dim);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.deep_layers = j.value("deep_layers", c.deep_layers);
    c.ff_multiplier = j.value("ff_multiplier", c.ff_multiplier);
    if (j.contains("enabled_reps")) {
        RepSet reps;
        for (const auto& n : j.at("enabled_reps")) reps.insert(parse_rep(n.get<std::string>()));
        c.enabled_reps = reps;
    }
    c.n_classes = j.value("n_classes", c.n_classes);
    c.dropout = j.value("dropout", c.dropout);
    c.ablate_shallow = j.value("ablate_shallow", c.ablate_shallow);
    c.ablate_deep = j.value("ablate_deep", c.ablate_deep);
    c.tri_modal_linear = j.value("tri_modal_linear", c.tri_modal_linear);
    c.assist_head = j.value("assist_head", c.assist_head);
    c.vocab = j.value("vocab", c.vocab);
}

/// A projected modality sequence [L x d_model] with its mask.
struct ModalityInput {
    Tensor features;
    std::vector<std::uint8_t> mask;
};

/// Text-aligned shallow representations; members stay undefined when skipped.
struct ShallowOutput {
    Tensor v_t;
    Tensor a_t;
    Tensor va_t;
};

struct RepresentationMatrix {
    Tensor matrix;  // [R x d_model]
    std::vector<Rep> slots;
};

/// Every intermediate of one forward pass.
struct ForwardTrace {
    ModalityInput text, video, audio;
    ShallowOutput shallow;
    RepresentationMatrix pooled;
    Tensor fused;   // [R x d_model] after deep interaction
    Tensor joint;   // concatenated rows, [R * d_model]
    Tensor logits;  // [n_classes]
};

class SDIFModel {
public:
    SDIFModel(SDIFConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        const RepSet reps = cfg_.effective_reps();
        const std::size_t d = cfg_.d_model;
        needs_vt_ = reps.contains(Rep::VT) || reps.contains(Rep::VAT);
        needs_at_ = reps.contains(Rep::AT) || reps.contains(Rep::VAT);
        needs_text_ = reps.contains(Rep::T) || needs_vt_ || needs_at_ || cfg_.assist_head;
        needs_video_ = reps.contains(Rep::V) || needs_vt_;
        needs_audio_ = reps.contains(Rep::A) || needs_at_;

        if (cfg_.uses_tokens()) embedding_ = aug::TokenEmbedding(aug::Vocab(cfg_.vocab), cfg_.text_dim, rng);
        if (needs_text_) text_proj_ = nn::Linear(cfg_.text_dim, d, rng);
        if (needs_video_) video_proj_ = nn::Linear(cfg_.video_dim, d, rng);
        if (needs_audio_) audio_proj_ = nn::Linear(cfg_.audio_dim, d, rng);
        if (needs_vt_) cross_video_ = nn::MultiHeadAttention(cfg_.attention(), rng);
        if (needs_at_) cross_audio_ = nn::MultiHeadAttention(cfg_.attention(), rng);
        if (reps.contains(Rep::VAT)) {
            if (cfg_.tri_modal_linear) tri_linear_ = nn::Linear(3 * d, d, rng);
            else tri_mlp_ = nn::FeedForward(3 * d, d, d, rng);
        }
        for (std::size_t i = 0; i < cfg_.effective_deep_layers(); ++i)
            deep_.emplace_back(cfg_.attention(), cfg_.ff_multiplier * d, rng);
        const std::size_t joint = reps.size() * d;
        decoder_hidden_ = nn::Linear(joint, std::max<std::size_t>(1, joint / 2), rng);
        decoder_out_ = nn::Linear(std::max<std::size_t>(1, joint / 2), cfg_.n_classes, rng);
        if (cfg_.assist_head) assist_head_ = nn::Linear(d, cfg_.n_classes, rng);
    }

    const SDIFConfig& config() const { return cfg_; }
    RepSet reps() const { return cfg_.effective_reps(); }
    const aug::TokenEmbedding* embedding() const { return cfg_.uses_tokens() ? &embedding_ : nullptr; }

    // -- modality encoders -------------------------------------------------

    ModalityInput encode_text(const data::Sample& s) const {
        require(needs_text_, "text projection");
        if (cfg_.uses_tokens()) {
            if (!s.raw_text) throw std::invalid_argument("sample " + s.id + ": token text branch needs raw_text");
            return encode_tokens(*s.raw_text);
        }
        return {text_proj_(s.text.to_tensor()), s.text.mask};
    }

    ModalityInput encode_tokens(const std::string& text) const {
        require(cfg_.uses_tokens() && needs_text_, "token text branch");
        const Tensor emb = embedding_.embed(text);
        return {text_proj_(emb), std::vector<std::uint8_t>(emb.dim(0), 1)};
    }

    ModalityInput encode_video(const data::Sample& s) const {
        require(needs_video_, "video projection");
        return {video_proj_(s.video.to_tensor()), s.video.mask};
    }

    ModalityInput encode_audio(const data::Sample& s) const {
        require(needs_audio_, "audio projection");
        return {audio_proj_(s.audio.to_tensor()), s.audio.mask};
    }

    // -- shallow interaction -------------------------------------------------

    /// Text-centred alignment: V_T and A_T by cross-attention with text as the
    /// query side, VA_T from [V_T, T, A_T] projected back to d_model. Only the
    /// outputs in `wanted` (and their prerequisites) are computed.
    ShallowOutput shallow_interaction(const ModalityInput& text, const ModalityInput* video,
                                      const ModalityInput* audio, nn::ForwardContext& ctx,
                                      RepSet wanted = {Rep::VT, Rep::AT, Rep::VAT}) const {
        if (!text.features.defined() || text.features.dim(0) == 0) {
            throw DegenerateInputError("shallow interaction: empty text sequence");
        }
        ShallowOutput out;
        const bool want_tri = wanted.contains(Rep::VAT);
        if (wanted.contains(Rep::VT) || want_tri) {
            require(needs_vt_ && video, "video-text cross-attention");
            out.v_t = nn::cross_attention(cross_video_, text.features, video->features, video->mask, ctx).output;
        }
        if (wanted.contains(Rep::AT) || want_tri) {
            require(needs_at_ && audio, "audio-text cross-attention");
            out.a_t = nn::cross_attention(cross_audio_, text.features, audio->features, audio->mask, ctx).output;
        }
        if (want_tri) {
            const Tensor joined = concat({out.v_t, text.features, out.a_t}, 1);
            if (cfg_.tri_modal_linear) {
                require(tri_linear_.weight().defined(), "tri-modal projection");
                out.va_t = tri_linear_(joined);
            } else {
                require(reps().contains(Rep::VAT), "tri-modal projection");
                out.va_t = tri_mlp_(joined, 0.0, ctx);
            }
        }
        return out;
    }

    // -- pooling / deep interaction / decoding ------------------------------

    /// Masked mean of each enabled representation, stacked in slot order.
    RepresentationMatrix pool_all(const ModalityInput* text, const ModalityInput* video, const ModalityInput* audio,
                                  const ShallowOutput& shallow) const {
        RepresentationMatrix m;
        std::vector<Tensor> rows;
        const std::size_t d = cfg_.d_model;
        auto need = [](const auto* p, const char* what) -> decltype(auto) {
            if (!p) throw std::invalid_argument(std::string("pool_all: missing ") + what);
            return *p;
        };
        auto defined = [](const Tensor& t, const char* what) -> const Tensor& {
            if (!t.defined()) throw std::invalid_argument(std::string("pool_all: missing ") + what);
            return t;
        };
        for (Rep r : reps().slots()) {
            Tensor pooled;
            switch (r) {
                case Rep::V: pooled = masked_mean(need(video, "video").features, video->mask); break;
                case Rep::T: pooled = masked_mean(need(text, "text").features, text->mask); break;
                case Rep::A: pooled = masked_mean(need(audio, "audio").features, audio->mask); break;
                case Rep::VT: pooled = masked_mean(defined(shallow.v_t, "v_t"), need(text, "text").mask); break;
                case Rep::AT: pooled = masked_mean(defined(shallow.a_t, "a_t"), need(text, "text").mask); break;
                case Rep::VAT: pooled = masked_mean(defined(shallow.va_t, "va_t"), need(text, "text").mask); break;
            }
            rows.push_back(reshape(pooled, {1, d}));
            m.slots.push_back(r);
        }
        m.matrix = concat(rows, 0);
        return m;
    }

    /// Stack of pre-norm self-attention layers over the representation rows.
    Tensor deep_interaction(const Tensor& m, nn::ForwardContext& ctx) const {
        if (m.rank() != 2 || m.dim(0) == 0) throw DimensionError("deep interaction: expected [R x d], got " + shape_str(m.shape()));
        Tensor x = m;
        for (const auto& layer : deep_) x = nn::self_attention_layer(layer, x, ctx);
        return x;
    }

    /// Concatenates the fused rows in slot order and maps them to class logits.
    Tensor decode(const Tensor& fused, nn::ForwardContext& ctx, Tensor* joint_out = nullptr) const {
        if (fused.rank() != 2 || fused.dim(0) != reps().size() || fused.dim(1) != cfg_.d_model) {
            throw DimensionError("decode: expected [" + std::to_string(reps().size()) + "x" +
                                 std::to_string(cfg_.d_model) + "], got " + shape_str(fused.shape()));
        }
        const Tensor joint = reshape(fused, {fused.numel()});
        if (joint_out) *joint_out = joint;
        const Tensor hidden = dropout(gelu(decoder_hidden_(joint)), cfg_.dropout, ctx.training, ctx.rng);
        return decoder_out_(hidden);
    }

    ForwardTrace trace(const data::Sample& s, nn::ForwardContext& ctx) const {
        ForwardTrace t;
        const RepSet r = reps();
        if (needs_text_ && (r.contains(Rep::T) || needs_vt_ || needs_at_)) t.text = encode_text(s);
        if (needs_video_) t.video = encode_video(s);
        if (needs_audio_) t.audio = encode_audio(s);
        RepSet shallow_wanted;
        for (Rep x : {Rep::VT, Rep::AT, Rep::VAT})
            if (r.contains(x)) shallow_wanted.insert(x);
        if (!shallow_wanted.empty()) {
            t.shallow = shallow_interaction(t.text, needs_video_ ? &t.video : nullptr, needs_audio_ ? &t.audio : nullptr,
                                            ctx, shallow_wanted);
        }
        auto ptr = [](const ModalityInput& m) { return m.features.defined() ? &m : nullptr; };
        t.pooled = pool_all(ptr(t.text), ptr(t.video), ptr(t.audio), t.shallow);
        t.fused = deep_interaction(t.pooled.matrix, ctx);
        t.logits = decode(t.fused, ctx, &t.joint);
        return t;
    }

    Tensor forward(const data::Sample& s, nn::ForwardContext& ctx) const { return trace(s, ctx).logits; }

    /// Assist-learning classifier: pooled token-text branch -> class logits.
    Tensor text_logits(const std::string& text) const {
        require(cfg_.assist_head && cfg_.uses_tokens(), "assist head over the token text branch");
        const ModalityInput t = encode_tokens(text);
        return assist_head_(masked_mean(t.features, t.mask));
    }

    nn::ParameterList parameters() const {
        nn::ParameterList out;
        if (cfg_.uses_tokens()) embedding_.collect("embed", out);
        if (needs_text_) text_proj_.collect("proj.text", out);
        if (needs_video_) video_proj_.collect("proj.video", out);
        if (needs_audio_) audio_proj_.collect("proj.audio", out);
        if (needs_vt_) cross_video_.collect("shallow.cross_video", out);
        if (needs_at_) cross_audio_.collect("shallow.cross_audio", out);
        if (reps().contains(Rep::VAT)) {
            if (cfg_.tri_modal_linear) tri_linear_.collect("shallow.tri", out);
            else tri_mlp_.collect("shallow.tri", out);
        }
        for (std::size_t i = 0; i < deep_.size(); ++i) deep_[i].collect("deep." + std::to_string(i), out);
        decoder_hidden_.collect("decoder.hidden", out);
        decoder_out_.collect("decoder.out", out);
        if (cfg_.assist_head) assist_head_.collect("assist.head", out);
        return out;
    }

    /// Parameters trained during the assist-learning phase.
    nn::ParameterList text_branch_parameters() const {
        nn::ParameterList out;
        if (cfg_.uses_tokens()) embedding_.collect("embed", out);
        if (needs_text_) text_proj_.collect("proj.text", out);
        if (cfg_.assist_head) assist_head_.collect("assist.head", out);
        return out;
    }

private:
    static void require(bool ok, const char* what) {
        if (!ok) throw std::logic_error(std::string("model was built without ") + what);
    }

    SDIFConfig cfg_;
    bool needs_text_ = false, needs_video_ = false, needs_audio_ = false, needs_vt_ = false, needs_at_ = false;
    aug::TokenEmbedding embedding_;
    nn::Linear text_proj_, video_proj_, audio_proj_;
    nn::MultiHeadAttention cross_video_, cross_audio_;
    nn::FeedForward tri_mlp_;
    nn::Linear tri_linear_;
    std::vector<nn::EncoderLayer> deep_;
    nn::Linear decoder_hidden_, decoder_out_;
    nn::Linear assist_head_;
};

}  // namespace sdif::model
