#pragma once

#include "sdif/checkpoint.hpp"
#include "sdif/losses.hpp"
#include "sdif/metrics.hpp"
#include "sdif/model.hpp"
#include "sdif/optim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif::train {

using json = nlohmann::json;
using model::SDIFConfig;
using model::SDIFModel;

struct TrainConfig {
    std::size_t batch_size = 8;
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    std::vector<double> lr_search;  // non-empty: pick the lr with the best dev F1
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    // Weight of the assist loss when mixed into joint training; 0 disables it.
    double aug_weight = 0.0;
    std::size_t aug_epochs = 5;
    AugLossMode aug_loss_mode = AugLossMode::CrossEntropy;
    Averaging averaging = Averaging::Macro;
    // Stop the joint phase once dev accuracy reaches this value.
    std::optional<double> target_dev_accuracy;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
        for (double lr : lr_search)
            if (!(lr > 0.0)) throw std::invalid_argument("train config: lr_search values must be > 0");
        if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
        if (aug_weight < 0.0) throw std::invalid_argument("train config: aug_weight must be >= 0");
    }

    AdamWConfig optimizer(double lr) const { return {lr, beta1, beta2, eps, weight_decay}; }
};

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"batch_size", c.batch_size},     {"epochs", c.epochs},
             {"learning_rate", c.learning_rate}, {"lr_search", c.lr_search},
             {"weight_decay", c.weight_decay}, {"betas", {c.beta1, c.beta2}},
             {"eps", c.eps},                   {"seed", c.seed},
             {"aug_weight", c.aug_weight},     {"aug_epochs", c.aug_epochs},
             {"aug_loss", to_string(c.aug_loss_mode)},
             {"averaging", c.averaging == Averaging::Macro ? "macro" : "weighted"}};
    j["target_dev_accuracy"] = c.target_dev_accuracy ? json(*c.target_dev_accuracy) : json(nullptr);
}

inline void from_json(const json& j, TrainConfig& c) {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_search = j.value("lr_search", c.lr_search);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    if (j.contains("betas")) {
        c.beta1 = j.at("betas").at(0).get<double>();
        c.beta2 = j.at("betas").at(1).get<double>();
    }
    c.eps = j.value("eps", c.eps);
    c.seed = j.value("seed", c.seed);
    c.aug_weight = j.value("aug_weight", c.aug_weight);
    c.aug_epochs = j.value("aug_epochs", c.aug_epochs);
    if (j.contains("aug_loss")) c.aug_loss_mode = parse_aug_loss_mode(j.at("aug_loss").get<std::string>());
    if (j.contains("averaging")) {
        const auto a = j.at("averaging").get<std::string>();
        if (a != "macro" && a != "weighted") throw std::invalid_argument("train config: averaging must be macro or weighted");
        c.averaging = a == "macro" ? Averaging::Macro : Averaging::Weighted;
    }
    if (j.contains("target_dev_accuracy") && !j.at("target_dev_accuracy").is_null())
        c.target_dev_accuracy = j.at("target_dev_accuracy").get<double>();
}

inline json metrics_json(const Metrics& m) {
    return json{{"acc", m.accuracy}, {"f1", m.f1}, {"precision", m.precision}, {"recall", m.recall}};
}

/// An (utterance, intent) pair used for assist learning.
struct AugExample {
    std::string text;
    std::size_t label = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EpochRecord {
    std::string phase;  // "assist" or "joint"
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<Metrics> dev;
    bool improved = false;
};

inline json to_json(const EpochRecord& r) {
    json j{{"phase", r.phase}, {"epoch", r.epoch}, {"train_loss", r.train_loss}};
    if (r.dev) {
        j["dev"] = metrics_json(*r.dev);
        j["best"] = r.improved;
    }
    return j;
}

struct TrainResult {
    double learning_rate = 0.0;
    std::size_t best_epoch = 0;
    Metrics best_dev;
    std::size_t joint_epochs_run = 0;
    // First joint epoch whose dev accuracy met target_dev_accuracy.
    std::optional<std::size_t> target_reached_epoch;
    std::size_t clamped_probabilities = 0;
    std::vector<EpochRecord> log;
};

// ---------------------------------------------------------------------------
// Evaluation

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<std::size_t> predict(const SDIFModel& m, const data::Dataset& ds) {
    NoGradGuard guard;
    nn::ForwardContext ctx{false, nullptr};
    std::vector<std::size_t> out;
    out.reserve(ds.size());
    for (const auto& s : ds.samples) out.push_back(argmax(m.forward(s, ctx).values()));
    return out;
}

inline std::vector<std::size_t> gold_labels(const data::Dataset& ds) {
    std::vector<std::size_t> g;
    g.reserve(ds.size());
    for (const auto& s : ds.samples) g.push_back(static_cast<std::size_t>(s.label));
    return g;
}

inline void check_compatible(const SDIFModel& m, const data::Dataset& ds) {
    const auto& c = m.config();
    if (c.n_classes != ds.n_classes()) {
        throw std::invalid_argument("model has " + std::to_string(c.n_classes) + " classes but dataset has " +
                                    std::to_string(ds.n_classes()));
    }
    if (!c.uses_tokens() && c.text_dim != ds.dims.text) {
        throw std::invalid_argument("model text_dim " + std::to_string(c.text_dim) + " != dataset " + std::to_string(ds.dims.text));
    }
    if (c.video_dim != ds.dims.video || c.audio_dim != ds.dims.audio) {
        throw std::invalid_argument("model video/audio dims " + std::to_string(c.video_dim) + "/" + std::to_string(c.audio_dim) +
                                    " != dataset " + std::to_string(ds.dims.video) + "/" + std::to_string(ds.dims.audio));
    }
}

inline Metrics evaluate(const SDIFModel& m, const data::Dataset& ds, Averaging avg = Averaging::Macro) {
    if (ds.empty()) throw std::invalid_argument("evaluate: empty dataset");
    check_compatible(m, ds);
    return compute_metrics(gold_labels(ds), predict(m, ds), ds.n_classes(), avg);
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline Tensor batch_mean(const std::vector<Tensor>& losses) {
    Tensor total = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    return scale(total, 1.0 / static_cast<double>(losses.size()));
}

inline void check_finite(double loss, const char* phase, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(loss)) {
        throw TrainingDiverged(std::string(phase) + " phase diverged: loss " + std::to_string(loss) + " at epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(batch) +
                               "; try a lower learning rate");
    }
}

inline Tensor assist_loss(const SDIFModel& m, const AugExample& ex, const TrainConfig& cfg, AugLossStats& stats) {
    return aug_loss(softmax(m.text_logits(ex.text)), ex.label, cfg.aug_loss_mode, &stats);
}

}  // namespace detail

/// Trains `m` in place and leaves it at the best-dev-F1 parameters.
///
/// With a non-empty `aug` set the text branch and its auxiliary head are first
/// trained on the augmented pairs for cfg.aug_epochs, then the whole model is
/// trained on `train_set`. One JSON record per epoch goes to `log`.
inline TrainResult train(SDIFModel& m, const data::Dataset& train_set, const data::Dataset& dev_set,
                         const TrainConfig& cfg, const std::vector<AugExample>* aug = nullptr,
                         std::ostream* log = nullptr, double learning_rate = 0.0) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    if (dev_set.empty()) throw std::invalid_argument("train: empty dev set");
    check_compatible(m, train_set);
    check_compatible(m, dev_set);
    const bool use_aug = aug && !aug->empty();
    if (use_aug && !(m.config().assist_head && m.config().uses_tokens())) {
        throw std::invalid_argument("train: augmented data needs a model with a token text branch and assist head");
    }
    const double lr = learning_rate > 0.0 ? learning_rate : cfg.learning_rate;

    TrainResult result;
    result.learning_rate = lr;
    std::mt19937_64 order_rng(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0xD20F0D20F0ull);
    AugLossStats stats;
    auto emit = [&](const EpochRecord& r) {
        result.log.push_back(r);
        if (log) *log << to_json(r).dump() << '\n';
    };

    if (use_aug) {
        AdamW opt(m.text_branch_parameters(), cfg.optimizer(lr));
        std::vector<std::size_t> order(aug->size());
        for (std::size_t epoch = 1; epoch <= cfg.aug_epochs; ++epoch) {
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), order_rng);
            double total = 0.0;
            std::size_t batches = 0;
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                std::vector<Tensor> losses;
                for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
                    losses.push_back(detail::assist_loss(m, (*aug)[order[i]], cfg, stats));
                opt.zero_grad();
                const Tensor loss = detail::batch_mean(losses);
                detail::check_finite(loss.item(), "assist", epoch, batches);
                loss.backward();
                opt.step();
                total += loss.item();
                ++batches;
            }
            emit({"assist", epoch, total / static_cast<double>(batches), std::nullopt, false});
        }
    }

    const auto params = m.parameters();
    AdamW opt(params, cfg.optimizer(lr));
    ParameterSnapshot best = snapshot(params);
    double best_f1 = -1.0;
    std::vector<std::size_t> order(train_set.size());
    std::vector<std::size_t> aug_order;
    std::size_t aug_cursor = 0;
    if (use_aug && cfg.aug_weight > 0.0) {
        aug_order.resize(aug->size());
        std::iota(aug_order.begin(), aug_order.end(), 0);
    }
    nn::ForwardContext ctx{true, &dropout_rng};
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), order_rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::vector<Tensor> losses;
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
                const auto& s = train_set.samples[order[i]];
                losses.push_back(cross_entropy(m.forward(s, ctx), static_cast<std::size_t>(s.label)));
            }
            Tensor loss = detail::batch_mean(losses);
            if (!aug_order.empty()) {
                std::vector<Tensor> extra;
                for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                    if (aug_cursor == 0) std::shuffle(aug_order.begin(), aug_order.end(), order_rng);
                    extra.push_back(detail::assist_loss(m, (*aug)[aug_order[aug_cursor]], cfg, stats));
                    aug_cursor = (aug_cursor + 1) % aug_order.size();
                }
                loss = add(loss, scale(detail::batch_mean(extra), cfg.aug_weight));
            }
            detail::check_finite(loss.item(), "joint", epoch, batches);
            opt.zero_grad();
            loss.backward();
            opt.step();
            total += loss.item();
            ++batches;
        }

        const Metrics dev = evaluate(m, dev_set, cfg.averaging);
        const bool improved = dev.f1 > best_f1;
        if (improved) {
            best_f1 = dev.f1;
            best = snapshot(params);
            result.best_epoch = epoch;
            result.best_dev = dev;
        }
        result.joint_epochs_run = epoch;
        emit({"joint", epoch, total / static_cast<double>(batches), dev, improved});
        if (cfg.target_dev_accuracy && dev.accuracy >= *cfg.target_dev_accuracy) {
            result.target_reached_epoch = epoch;
            break;
        }
    }
    restore(params, best);
    result.clamped_probabilities = stats.clamped;
    return result;
}

struct FitResult {
    SDIFModel model;
    TrainResult result;
};

/// Builds a fresh model and trains it; with cfg.lr_search every candidate is
/// tried from the same initialisation and the best dev F1 wins.
inline FitResult fit(const SDIFConfig& model_cfg, const data::Dataset& train_set, const data::Dataset& dev_set,
                     const TrainConfig& cfg, const std::vector<AugExample>* aug = nullptr, std::ostream* log = nullptr) {
    const std::vector<double> rates = cfg.lr_search.empty() ? std::vector<double>{cfg.learning_rate} : cfg.lr_search;
    std::optional<FitResult> best;
    for (double lr : rates) {
        SDIFModel m(model_cfg, cfg.seed);
        if (log && rates.size() > 1) *log << json{{"lr_candidate", lr}}.dump() << '\n';
        TrainResult r = train(m, train_set, dev_set, cfg, aug, log, lr);
        if (!best || r.best_dev.f1 > best->result.best_dev.f1) best.emplace(FitResult{std::move(m), std::move(r)});
    }
    return std::move(*best);
}

// ---------------------------------------------------------------------------
// Experiment runners

enum class Setting { Twenty, Binary };

inline const char* to_string(Setting s) { return s == Setting::Twenty ? "twenty" : "binary"; }

inline Setting parse_setting(const std::string& s) {
    if (s == "twenty") return Setting::Twenty;
    if (s == "binary") return Setting::Binary;
    throw std::invalid_argument("unknown setting '" + s + "' (expected twenty or binary)");
}

/// Dataset view and matching class count for a setting.
inline data::Dataset apply_setting(const data::Dataset& ds, Setting s) {
    return s == Setting::Twenty ? ds : data::to_binary(ds, ds.taxonomy);
}

struct ResultRow {
    std::string config;
    std::string setting;
    Metrics metrics;                 // mean over seeds
    std::vector<Metrics> per_seed;
};

inline Metrics mean_metrics(const std::vector<Metrics>& ms) {
    Metrics out;
    for (const auto& m : ms) {
        out.accuracy += m.accuracy;
        out.f1 += m.f1;
        out.precision += m.precision;
        out.recall += m.recall;
    }
    const double n = static_cast<double>(ms.size());
    out.accuracy /= n;
    out.f1 /= n;
    out.precision /= n;
    out.recall /= n;
    return out;
}

inline void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
    out << "config,setting,acc,f1,precision,recall\n";
    out << std::fixed << std::setprecision(6);
    for (const auto& r : rows) {
        std::string name = r.config;
        if (name.find_first_of(",\"") != std::string::npos) {
            std::string quoted = "\"";
            for (char c : name) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
            name = quoted + "\"";
        }
        out << name << ',' << r.setting << ',' << r.metrics.accuracy << ',' << r.metrics.f1 << ','
            << r.metrics.precision << ',' << r.metrics.recall << '\n';
    }
}

inline void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_results_csv(rows, out);
}

enum class ReportSplit { Dev, Test };

struct ExperimentOptions {
    std::vector<std::uint64_t> seeds{0};
    std::vector<Setting> settings{Setting::Twenty, Setting::Binary};
    ReportSplit report = ReportSplit::Test;
    // Receives one line per finished run.
    std::function<void(const std::string&)> progress;
};

namespace detail {

inline const data::Dataset& report_split(const data::DataSplits& splits, ReportSplit r) {
    return r == ReportSplit::Test && !splits.test.empty() ? splits.test : splits.dev;
}

/// Trains one configuration per (setting, seed) and averages the reported metrics.
inline ResultRow run_config(const std::string& name, SDIFConfig model_cfg, const data::DataSplits& splits,
                            const TrainConfig& train_cfg, Setting setting, const ExperimentOptions& opts) {
    const data::Dataset train_set = apply_setting(splits.train, setting);
    const data::Dataset dev_set = apply_setting(splits.dev, setting);
    const data::Dataset report_set = apply_setting(report_split(splits, opts.report), setting);
    model_cfg.n_classes = train_set.n_classes();
    ResultRow row{name, to_string(setting), {}, {}};
    for (auto seed : opts.seeds) {
        TrainConfig tc = train_cfg;
        tc.seed = seed;
        FitResult fitted = fit(model_cfg, train_set, dev_set, tc);
        row.per_seed.push_back(evaluate(fitted.model, report_set, tc.averaging));
        if (opts.progress) {
            std::ostringstream line;
            line << name << " [" << row.setting << "] seed " << seed << ": acc " << std::fixed << std::setprecision(4)
                 << row.per_seed.back().accuracy << " f1 " << row.per_seed.back().f1;
            opts.progress(line.str());
        }
    }
    row.metrics = mean_metrics(row.per_seed);
    return row;
}

}  // namespace detail

struct AblationVariant {
    std::string name;
    model::RepSet reps;
    bool ablate_shallow = false;
    bool ablate_deep = false;
};

/// The six layer-subset rows followed by full, w/o SI and w/o DI.
inline std::vector<AblationVariant> ablation_variants() {
    using model::Rep;
    const model::RepSet all = model::RepSet::all();
    return {
        {"v,t,a", {Rep::V, Rep::T, Rep::A}},
        {"v_t,a_t", {Rep::VT, Rep::AT}},
        {"va_t", {Rep::VAT}},
        {"v_t,a_t,va_t", {Rep::VT, Rep::AT, Rep::VAT}},
        {"v,t,a,v_t,a_t", {Rep::V, Rep::T, Rep::A, Rep::VT, Rep::AT}},
        {"v,t,a,v_t,a_t,va_t", all},
        {"full", all},
        {"w/o SI", all, true, false},
        {"w/o DI", all, false, true},
    };
}

/// Trains every ablation variant under each setting. Variants that resolve to
/// the same effective model are trained once and share their results.
inline std::vector<ResultRow> run_ablation_suite(const SDIFConfig& base, const data::DataSplits& splits,
                                                 const TrainConfig& train_cfg, const ExperimentOptions& opts) {
    std::vector<ResultRow> rows;
    for (Setting setting : opts.settings) {
        std::map<std::string, ResultRow> done;
        for (const auto& v : ablation_variants()) {
            SDIFConfig cfg = base;
            cfg.enabled_reps = v.reps;
            cfg.ablate_shallow = v.ablate_shallow;
            cfg.ablate_deep = v.ablate_deep;
            const std::string key = cfg.effective_reps().to_string() + "|" + std::to_string(cfg.effective_deep_layers());
            auto it = done.find(key);
            if (it == done.end()) it = done.emplace(key, detail::run_config(v.name, cfg, splits, train_cfg, setting, opts)).first;
            ResultRow row = it->second;
            row.config = v.name;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline const std::vector<double>& default_low_resource_fractions() {
    static const std::vector<double> f{0.01, 0.05, 0.10, 0.20, 0.30};
    return f;
}

inline std::string fraction_label(double f) {
    std::ostringstream s;
    s << "lowres@" << f;
    return s.str();
}

struct LowResourceRun {
    std::vector<ResultRow> rows;
    // Per-fraction class counts of the subsampled training split (first seed).
    std::vector<std::vector<std::size_t>> class_counts;
};

/// Trains on stratified fractions of the training split; each seed draws its
/// own subsample.
inline LowResourceRun run_low_resource(const SDIFConfig& base, const data::DataSplits& splits,
                                       const TrainConfig& train_cfg, const std::vector<double>& fractions,
                                       const ExperimentOptions& opts) {
    LowResourceRun out;
    for (double f : fractions) {
        out.class_counts.push_back(data::subsample_low_resource(splits.train, f, opts.seeds.front()).class_counts());
    }
    for (Setting setting : opts.settings) {
        for (double f : fractions) {
            ResultRow row{fraction_label(f), to_string(setting), {}, {}};
            for (auto seed : opts.seeds) {
                data::DataSplits sub = splits;
                sub.train = data::subsample_low_resource(splits.train, f, seed);
                ExperimentOptions one = opts;
                one.seeds = {seed};
                ResultRow r = detail::run_config(row.config, base, sub, train_cfg, setting, one);
                row.per_seed.push_back(r.per_seed.front());
            }
            row.metrics = mean_metrics(row.per_seed);
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

}  // namespace sdif::train
