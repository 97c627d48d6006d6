#pragma once

#include "sdif/grad_suite.hpp"
#include "sdif/sdif.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sdif::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Bad flags, configs or inputs: reported with exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a command can be configured with; CLI flags override the file.
struct RunConfig {
    model::SDIFConfig model;
    train::TrainConfig train;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    // Embedding width of the token text branch; 0 means d_model.
    std::size_t token_dim = 0;
    std::size_t per_intent = 1250;
    std::size_t demonstrations = aug::kDefaultDemonstrations;
    std::size_t request_size = aug::kDefaultRequestSize;
    aug::ChatClientConfig chat;
};

inline json to_json(const RunConfig& c) {
    json chat = c.chat;
    return json{{"model", c.model},
                {"train", c.train},
                {"seeds", c.seeds},
                {"token_dim", c.token_dim},
                {"augment",
                 {{"per_intent", c.per_intent},
                  {"demonstrations", c.demonstrations},
                  {"request_size", c.request_size},
                  {"chat", chat}}}};
}

inline RunConfig load_run_config(const std::optional<std::string>& path) {
    RunConfig c;
    if (!path) return c;
    std::ifstream in(*path);
    if (!in) throw UsageError("config not found: " + *path);
    try {
        const json j = json::parse(in);
        if (j.contains("model")) c.model = j.at("model").get<model::SDIFConfig>();
        if (j.contains("train")) c.train = j.at("train").get<train::TrainConfig>();
        c.seeds = j.value("seeds", c.seeds);
        c.token_dim = j.value("token_dim", c.token_dim);
        if (j.contains("augment")) {
            const auto& a = j.at("augment");
            c.per_intent = a.value("per_intent", c.per_intent);
            c.demonstrations = a.value("demonstrations", c.demonstrations);
            c.request_size = a.value("request_size", c.request_size);
            if (a.contains("chat")) {
                const auto& h = a.at("chat");
                if (h.contains("api_key")) {
                    throw UsageError(*path + ": API keys are not accepted in config files; set " + c.chat.api_key_env);
                }
                c.chat.endpoint = h.value("endpoint", c.chat.endpoint);
                c.chat.model = h.value("model", c.chat.model);
                c.chat.timeout_seconds = h.value("timeout_seconds", c.chat.timeout_seconds);
                c.chat.max_retries = h.value("max_retries", c.chat.max_retries);
                c.chat.max_concurrency = h.value("max_concurrency", c.chat.max_concurrency);
                c.chat.temperature = h.value("temperature", c.chat.temperature);
                c.chat.backoff_initial_seconds = h.value("backoff_initial_seconds", c.chat.backoff_initial_seconds);
                c.chat.backoff_max_seconds = h.value("backoff_max_seconds", c.chat.backoff_max_seconds);
                c.chat.api_key_env = h.value("api_key_env", c.chat.api_key_env);
            }
        }
    } catch (const json::exception& e) {
        throw UsageError(*path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(*path + ": " + e.what());
    }
    return c;
}

/// Raw flag values; unset optionals leave the config untouched.
struct Flags {
    std::optional<std::string> config, data, out, aug, checkpoint, taxonomy, endpoint, chat_model, fractions, layers;
    std::optional<std::string> setting, split, seeds, rule;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr, timeout;
    std::optional<std::size_t> epochs, batch_size, per_intent, demos, request_size, concurrency, retries;
    std::optional<std::size_t> n_train, n_dev, n_test, n_classes;
    bool mock = false, drop_si = false, drop_di = false;
};

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    return out;
}

inline void apply_overrides_unchecked(RunConfig& c, const Flags& f) {
    if (f.seed) c.train.seed = *f.seed;
    if (f.lr) c.train.learning_rate = *f.lr;
    if (f.epochs) c.train.epochs = *f.epochs;
    if (f.batch_size) c.train.batch_size = *f.batch_size;
    if (f.layers) c.model.enabled_reps = model::RepSet::parse(*f.layers);
    if (f.drop_si) c.model.ablate_shallow = true;
    if (f.drop_di) c.model.ablate_deep = true;
    if (f.seeds) {
        c.seeds.clear();
        for (const auto& s : split_list(*f.seeds)) c.seeds.push_back(std::stoull(s));
        if (c.seeds.empty()) throw UsageError("--seeds: empty list");
    } else if (f.seed) {
        c.seeds = {*f.seed};
    }
    if (f.per_intent) c.per_intent = *f.per_intent;
    if (f.demos) c.demonstrations = *f.demos;
    if (f.request_size) c.request_size = *f.request_size;
    if (f.endpoint) c.chat.endpoint = *f.endpoint;
    if (f.chat_model) c.chat.model = *f.chat_model;
    if (f.concurrency) c.chat.max_concurrency = *f.concurrency;
    if (f.retries) c.chat.max_retries = *f.retries;
    if (f.timeout) c.chat.timeout_seconds = *f.timeout;
    c.train.validate();
}

inline void apply_overrides(RunConfig& c, const Flags& f) {
    try {
        apply_overrides_unchecked(c, f);
    } catch (const std::logic_error& e) {  // invalid_argument, out_of_range from parsing
        throw UsageError(e.what());
    }
}

inline fs::path require_out(const Flags& f) {
    if (!f.out) throw UsageError("--out is required");
    fs::create_directories(*f.out);
    return *f.out;
}

inline data::DataSplits load_data(const Flags& f) {
    if (!f.data) throw UsageError("--data <manifest.json> is required");
    try {
        return data::load_dataset(*f.data);
    } catch (const data::DataError& e) {
        if (e.kind() == data::DataError::Kind::MissingFile) throw UsageError(e.what());
        throw;
    }
}

inline void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

inline std::string metrics_line(const train::Metrics& m) {
    return "acc " + fmt(m.accuracy) + "  f1 " + fmt(m.f1) + "  precision " + fmt(m.precision) + "  recall " + fmt(m.recall);
}

inline train::Setting setting_of(const Flags& f) {
    try {
        return train::parse_setting(f.setting.value_or("twenty"));
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

/// Settings for experiment commands: one if --setting is given, else both.
inline std::vector<train::Setting> settings_of(const Flags& f) {
    if (!f.setting) return {train::Setting::Twenty, train::Setting::Binary};
    return {setting_of(f)};
}

inline train::ReportSplit report_split_of(const Flags& f) {
    const std::string s = f.split.value_or("test");
    if (s == "test") return train::ReportSplit::Test;
    if (s == "dev") return train::ReportSplit::Dev;
    throw UsageError("--split must be dev or test for this command");
}

/// Model config with feature widths taken from the data.
inline model::SDIFConfig model_for(const RunConfig& c, const data::Dataset& ds) {
    model::SDIFConfig m = c.model;
    m.text_dim = ds.dims.text;
    m.video_dim = ds.dims.video;
    m.audio_dim = ds.dims.audio;
    m.n_classes = ds.n_classes();
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return m;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_train(const Flags& f, std::ostream& out) {
    RunConfig cfg = load_run_config(f.config);
    apply_overrides(cfg, f);
    const fs::path dir = require_out(f);
    const auto setting = setting_of(f);
    const data::DataSplits raw = load_data(f);
    const data::Dataset train_set = train::apply_setting(raw.train, setting);
    const data::Dataset dev_set = train::apply_setting(raw.dev.empty() ? raw.test : raw.dev, setting);
    if (dev_set.empty()) throw UsageError("dataset has neither a dev nor a test split for model selection");
    model::SDIFConfig mcfg = model_for(cfg, train_set);

    std::vector<train::AugExample> aug_set;
    if (f.aug) {
        std::vector<aug::AugmentedUtterance> corpus;
        try {
            corpus = aug::read_corpus(*f.aug, raw.train.taxonomy);
        } catch (const aug::CorpusError& e) {
            if (e.line() == 0) throw UsageError(e.what());
            throw;
        }
        std::vector<std::string> texts;
        for (const auto& u : corpus) {
            const std::size_t label = setting == train::Setting::Twenty
                                          ? u.intent
                                          : static_cast<std::size_t>(raw.train.taxonomy.binary_map.at(u.intent));
            aug_set.push_back({u.text, label});
            texts.push_back(u.text);
        }
        for (const auto* ds : {&train_set, &dev_set}) {
            for (const auto& s : ds->samples) {
                if (!s.raw_text) throw UsageError("--aug needs raw_text on every sample; " + s.id + " has none");
                texts.push_back(*s.raw_text);
            }
        }
        mcfg.vocab = aug::Vocab::build(texts).tokens();
        mcfg.assist_head = true;
        mcfg.text_dim = cfg.token_dim ? cfg.token_dim : mcfg.d_model;
        out << "assist learning: " << aug_set.size() << " augmented utterances, vocabulary " << mcfg.vocab.size() << "\n";
    }

    json effective = to_json(cfg);
    effective["command"] = "train";
    effective["model"] = mcfg;
    effective["data"] = *f.data;
    effective["setting"] = train::to_string(setting);
    effective["aug"] = f.aug ? json(*f.aug) : json(nullptr);
    write_json(dir / "effective_config.json", effective);

    std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
    train::FitResult fitted = train::fit(mcfg, train_set, dev_set, cfg.train, f.aug ? &aug_set : nullptr, &log);
    const auto& r = fitted.result;
    json meta{{"best_epoch", r.best_epoch},
              {"learning_rate", r.learning_rate},
              {"setting", train::to_string(setting)},
              {"seed", cfg.train.seed},
              {"dev", train::metrics_json(r.best_dev)}};
    save_checkpoint(fitted.model, dir / "model.ckpt", meta);
    out << "trained " << r.joint_epochs_run << " epochs; best epoch " << r.best_epoch << " (lr " << r.learning_rate
        << ")\n";
    out << "dev: " << metrics_line(r.best_dev) << "\n";
    if (r.clamped_probabilities) out << "warning: " << r.clamped_probabilities << " probabilities clamped in the assist loss\n";
    out << "checkpoint: " << (dir / "model.ckpt").string() << "\n";
    return kOk;
}

inline int cmd_eval(const Flags& f, std::ostream& out) {
    if (!f.checkpoint) throw UsageError("--checkpoint is required");
    const auto setting = setting_of(f);
    const data::DataSplits raw = load_data(f);
    LoadedCheckpoint ckpt = [&] {
        try {
            return load_checkpoint(*f.checkpoint);
        } catch (const CheckpointError& e) {
            throw UsageError(e.what());
        }
    }();
    const std::string split_name = f.split.value_or(raw.test.empty() ? "dev" : "test");
    const data::Dataset* split = split_name == "test" ? &raw.test : split_name == "dev" ? &raw.dev
                                                       : split_name == "train"           ? &raw.train
                                                                                         : nullptr;
    if (!split) throw UsageError("--split must be train, dev or test");
    if (split->empty()) throw UsageError("split '" + split_name + "' is empty");
    const data::Dataset ds = train::apply_setting(*split, setting);
    const auto& mc = ckpt.model.config();
    if (mc.n_classes != ds.n_classes()) {
        throw UsageError("checkpoint/config mismatch: checkpoint predicts " + std::to_string(mc.n_classes) +
                         " classes but setting '" + train::to_string(setting) + "' has " + std::to_string(ds.n_classes()));
    }
    train::Metrics m;
    try {
        m = train::evaluate(ckpt.model, ds);
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("checkpoint/config mismatch: ") + e.what());
    }
    out << split_name << " [" << train::to_string(setting) << "] " << metrics_line(m) << "\n";
    json per_class = json::array();
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        const auto& s = m.per_class[c];
        out << "  " << std::left << std::setw(32) << ds.taxonomy.class_names[c] << " f1 " << fmt(s.f1) << "  support "
            << s.support << "\n";
        per_class.push_back({{"class", ds.taxonomy.class_names[c]},
                             {"f1", s.f1},
                             {"precision", s.precision},
                             {"recall", s.recall},
                             {"support", s.support}});
    }
    if (f.out) {
        fs::create_directories(*f.out);
        json result = train::metrics_json(m);
        result["split"] = split_name;
        result["setting"] = train::to_string(setting);
        result["per_class"] = per_class;
        write_json(fs::path(*f.out) / "metrics.json", result);
        write_json(fs::path(*f.out) / "effective_config.json",
                   {{"command", "eval"}, {"checkpoint", *f.checkpoint}, {"data", *f.data}, {"split", split_name},
                    {"setting", train::to_string(setting)}, {"model", mc}});
    }
    return kOk;
}

inline train::ExperimentOptions experiment_options(const RunConfig& cfg, const Flags& f, std::ostream& out) {
    train::ExperimentOptions opts;
    opts.seeds = cfg.seeds;
    opts.settings = settings_of(f);
    opts.report = report_split_of(f);
    opts.progress = [&out](const std::string& line) { out << line << "\n"; };
    return opts;
}

inline int cmd_ablate(const Flags& f, std::ostream& out) {
    RunConfig cfg = load_run_config(f.config);
    apply_overrides(cfg, f);
    const fs::path dir = require_out(f);
    const data::DataSplits splits = load_data(f);
    const auto opts = experiment_options(cfg, f, out);
    const model::SDIFConfig base = model_for(cfg, splits.train);
    json effective = to_json(cfg);
    effective["command"] = "ablate";
    effective["model"] = base;
    effective["data"] = *f.data;
    effective["report_split"] = f.split.value_or("test");
    write_json(dir / "effective_config.json", effective);

    const auto rows = train::run_ablation_suite(base, splits, cfg.train, opts);
    train::write_results_csv(rows, dir / "ablation.csv");
    for (const auto& r : rows) out << std::left << std::setw(20) << r.config << " " << r.setting << "  " << metrics_line(r.metrics) << "\n";
    out << "results: " << (dir / "ablation.csv").string() << "\n";
    return kOk;
}

inline std::vector<double> parse_fractions(const Flags& f) {
    if (!f.fractions) return train::default_low_resource_fractions();
    std::vector<double> out;
    for (const auto& s : split_list(*f.fractions)) {
        double v = 0.0;
        try {
            v = std::stod(s);
        } catch (const std::exception&) {
            throw UsageError("--fractions: '" + s + "' is not a number");
        }
        if (!(v > 0.0 && v <= 1.0)) throw UsageError("--fractions: " + s + " is outside (0, 1]");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("--fractions: empty list");
    return out;
}

inline int cmd_lowres(const Flags& f, std::ostream& out) {
    RunConfig cfg = load_run_config(f.config);
    apply_overrides(cfg, f);
    const fs::path dir = require_out(f);
    const data::DataSplits splits = load_data(f);
    const auto fractions = parse_fractions(f);
    const auto opts = experiment_options(cfg, f, out);
    const model::SDIFConfig base = model_for(cfg, splits.train);
    json effective = to_json(cfg);
    effective["command"] = "lowres";
    effective["model"] = base;
    effective["data"] = *f.data;
    effective["fractions"] = fractions;
    effective["report_split"] = f.split.value_or("test");
    write_json(dir / "effective_config.json", effective);

    train::LowResourceRun run;
    try {
        run = train::run_low_resource(base, splits, cfg.train, fractions, opts);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    train::write_results_csv(run.rows, dir / "lowres.csv");
    json counts = json::array();
    for (std::size_t i = 0; i < fractions.size(); ++i) counts.push_back({{"fraction", fractions[i]}, {"class_counts", run.class_counts[i]}});
    write_json(dir / "lowres_counts.json", counts);
    for (const auto& r : run.rows) out << std::left << std::setw(14) << r.config << " " << r.setting << "  " << metrics_line(r.metrics) << "\n";
    out << "results: " << (dir / "lowres.csv").string() << "\n";
    return kOk;
}

inline data::IntentTaxonomy load_taxonomy(const Flags& f, const data::DataSplits* splits) {
    if (f.taxonomy) {
        std::ifstream in(*f.taxonomy);
        if (!in) throw UsageError("taxonomy not found: " + *f.taxonomy);
        try {
            auto t = json::parse(in).get<data::IntentTaxonomy>();
            t.validate();
            return t;
        } catch (const std::exception& e) {
            throw UsageError(*f.taxonomy + ": " + e.what());
        }
    }
    if (splits) return splits->train.taxonomy;
    return data::default_intent_taxonomy();
}

inline int cmd_augment(const Flags& f, std::ostream& out) {
    RunConfig cfg = load_run_config(f.config);
    apply_overrides(cfg, f);
    const fs::path dir = require_out(f);
    std::optional<data::DataSplits> splits;
    if (f.data) splits = load_data(f);
    const data::IntentTaxonomy taxonomy = load_taxonomy(f, splits ? &*splits : nullptr);
    const std::uint64_t seed = cfg.train.seed;
    if (cfg.demonstrations < 1) throw UsageError("--demos must be >= 1");

    std::unique_ptr<aug::ChatClient> client;
    aug::MockChatClient* mock = nullptr;
    if (f.mock) {
        auto m = std::make_unique<aug::MockChatClient>(taxonomy, seed);
        mock = m.get();
        client = std::move(m);
    } else {
        const char* key = std::getenv(cfg.chat.api_key_env.c_str());
        if ((!key || !*key) && cfg.chat.endpoint.rfind("https://", 0) == 0) {
            throw UsageError("live augmentation needs the " + cfg.chat.api_key_env +
                             " environment variable (or use --mock)");
        }
        try {
            client = std::make_unique<aug::HttpChatClient>(cfg.chat);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }

    const auto pools = aug::collect_demonstrations(taxonomy, splits ? &splits->train : nullptr, cfg.demonstrations, seed);
    aug::GenerationOptions opts;
    opts.target_count = cfg.per_intent;
    opts.request_size = cfg.request_size;
    opts.demonstrations_per_prompt = cfg.demonstrations;
    opts.concurrency = cfg.chat.max_concurrency;
    opts.seed = seed;

    json effective = to_json(cfg);
    effective["command"] = "augment";
    effective["backend"] = f.mock ? "mock" : "live";
    effective["taxonomy"] = taxonomy;
    write_json(dir / "effective_config.json", effective);

    auto report = [&](const aug::GenerationResult& r, bool complete) {
        json j{{"complete", complete},
               {"utterances", r.utterances.size()},
               {"requests", r.stats.requests},
               {"malformed_responses", r.stats.malformed},
               {"rejected_items", r.stats.rejected}};
        std::vector<std::size_t> per_intent(taxonomy.size(), 0);
        for (const auto& u : r.utterances) ++per_intent[u.intent];
        j["per_intent"] = per_intent;
        if (mock) {
            // demonstration count -> number of prompts that carried it
            std::map<std::string, std::size_t> demos;
            for (const auto& p : mock->prompts()) ++demos[std::to_string(p.demonstrations)];
            j["demonstrations_per_prompt"] = demos;
        }
        write_json(dir / "augment_report.json", j);
    };
    try {
        const auto result = aug::generate_corpus(*client, taxonomy, pools, opts, [&](std::size_t c, const aug::GenerationResult& r) {
            out << taxonomy.class_names[c] << ": " << r.utterances.size() << " utterances in " << r.stats.requests << " requests\n";
        });
        aug::write_corpus(result.utterances, taxonomy, dir / "corpus.jsonl");
        report(result, true);
        out << "corpus: " << result.utterances.size() << " utterances -> " << (dir / "corpus.jsonl").string() << "\n";
    } catch (const aug::PartialResultError& e) {
        aug::write_corpus(e.collected(), taxonomy, dir / "corpus.partial.jsonl");
        report({e.collected(), e.stats()}, false);
        throw std::runtime_error(std::string(e.what()) + "; " + std::to_string(e.collected().size()) +
                                 " utterances saved to " + (dir / "corpus.partial.jsonl").string());
    }
    return kOk;
}

inline int cmd_gradcheck(const Flags& f, std::ostream& out) {
    const std::uint64_t seed = f.seed.value_or(0);
    const auto results = run_grad_suite(seed);
    bool ok = true;
    json j = json::array();
    for (const auto& r : results) {
        ok = ok && r.report.passed;
        out << (r.report.passed ? "PASS " : "FAIL ") << r.name << ": " << r.report.coordinates
            << " coordinates, max relative error " << std::scientific << std::setprecision(3)
            << r.report.max_relative_error << std::defaultfloat << " at " << r.report.worst_location << "\n";
        j.push_back({{"check", r.name},
                     {"coordinates", r.report.coordinates},
                     {"max_relative_error", r.report.max_relative_error},
                     {"max_absolute_error", r.report.max_absolute_error},
                     {"worst", r.report.worst_location},
                     {"passed", r.report.passed}});
    }
    if (f.out) {
        fs::create_directories(*f.out);
        write_json(fs::path(*f.out) / "gradcheck.json", j);
        write_json(fs::path(*f.out) / "effective_config.json",
                   {{"command", "gradcheck"}, {"seed", seed}, {"model", tiny_grad_config()},
                    {"step", GradCheckOptions{}.step}, {"tolerance", GradCheckOptions{}.tolerance}});
    }
    out << (ok ? "all gradient checks passed" : "gradient check FAILED") << "\n";
    return ok ? kOk : kRuntimeFailure;
}

inline int cmd_synth(const Flags& f, std::ostream& out) {
    const fs::path dir = require_out(f);
    data::SynthSpec spec;
    try {
        if (f.rule) spec.rule = data::parse_synth_rule(*f.rule);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (spec.rule == data::SynthRule::TextKeywords) spec.text_len = 10;
    spec.n_classes = f.n_classes.value_or(20);
    const std::uint64_t seed = f.seed.value_or(0);
    const auto splits = data::synth_splits(spec, f.n_train.value_or(2000), f.n_dev.value_or(500), f.n_test.value_or(500), seed);
    const auto manifest = data::write_dataset(splits, dir);
    write_json(dir / "effective_config.json",
               {{"command", "synth"},
                {"rule", data::to_string(spec.rule)},
                {"n_classes", spec.n_classes},
                {"sizes", {splits.train.size(), splits.dev.size(), splits.test.size()}},
                {"seed", seed}});
    out << "wrote " << splits.train.size() << "/" << splits.dev.size() << "/" << splits.test.size()
        << " train/dev/test samples -> " << manifest.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"SDIF multimodal intent detection toolkit", "sdif"};
    app.require_subcommand(1);
    Flags f;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "JSON run configuration");
        sub->add_option("--out", f.out, "Output directory");
        sub->add_option("--seed", f.seed, "Random seed");
    };
    auto data_flag = [&](CLI::App* sub) { sub->add_option("--data", f.data, "Dataset manifest.json"); };
    auto training = [&](CLI::App* sub) {
        sub->add_option("--lr", f.lr, "Learning rate");
        sub->add_option("--epochs", f.epochs, "Training epochs");
        sub->add_option("--batch-size", f.batch_size, "Mini-batch size");
        sub->add_option("--layers", f.layers, "Comma list of representations (v,t,a,v_t,a_t,va_t)");
        sub->add_flag("--drop-si", f.drop_si, "Disable shallow interaction");
        sub->add_flag("--drop-di", f.drop_di, "Disable deep interaction");
        sub->add_option("--setting", f.setting, "twenty or binary");
    };

    auto* train_cmd = app.add_subcommand("train", "Train a model and save the best-dev checkpoint");
    common(train_cmd);
    data_flag(train_cmd);
    training(train_cmd);
    train_cmd->add_option("--aug", f.aug, "Augmented corpus (JSONL) for assist learning");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    common(eval_cmd);
    data_flag(eval_cmd);
    eval_cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file");
    eval_cmd->add_option("--split", f.split, "train, dev or test");
    eval_cmd->add_option("--setting", f.setting, "twenty or binary");

    auto* ablate_cmd = app.add_subcommand("ablate", "Representation and component ablations");
    common(ablate_cmd);
    data_flag(ablate_cmd);
    training(ablate_cmd);
    ablate_cmd->add_option("--seeds", f.seeds, "Comma list of seeds");
    ablate_cmd->add_option("--split", f.split, "Split to report: dev or test");

    auto* lowres_cmd = app.add_subcommand("lowres", "Low-resource training curve");
    common(lowres_cmd);
    data_flag(lowres_cmd);
    training(lowres_cmd);
    lowres_cmd->add_option("--fractions", f.fractions, "Comma list of training fractions");
    lowres_cmd->add_option("--seeds", f.seeds, "Comma list of seeds");
    lowres_cmd->add_option("--split", f.split, "Split to report: dev or test");

    auto* augment_cmd = app.add_subcommand("augment", "Generate an augmented utterance corpus");
    common(augment_cmd);
    data_flag(augment_cmd);
    augment_cmd->add_flag("--mock", f.mock, "Use the offline mock client");
    augment_cmd->add_option("--per-intent", f.per_intent, "Utterances per intent");
    augment_cmd->add_option("--demos", f.demos, "Demonstrations per prompt");
    augment_cmd->add_option("--request-size", f.request_size, "Utterances requested per call");
    augment_cmd->add_option("--taxonomy", f.taxonomy, "Taxonomy JSON file");
    augment_cmd->add_option("--endpoint", f.endpoint, "Chat-completion endpoint URL");
    augment_cmd->add_option("--model", f.chat_model, "Chat model name");
    augment_cmd->add_option("--concurrency", f.concurrency, "Concurrent requests");
    augment_cmd->add_option("--retries", f.retries, "Retries per request");
    augment_cmd->add_option("--timeout", f.timeout, "Request timeout in seconds");

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    grad_cmd->add_option("--out", f.out, "Output directory");
    grad_cmd->add_option("--seed", f.seed, "Random seed");

    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic tri-modal dataset");
    synth_cmd->add_option("--out", f.out, "Output directory");
    synth_cmd->add_option("--seed", f.seed, "Random seed");
    synth_cmd->add_option("--rule", f.rule, "cross_modal or text_keywords");
    synth_cmd->add_option("--classes", f.n_classes, "Number of classes");
    synth_cmd->add_option("--train-size", f.n_train, "Training samples");
    synth_cmd->add_option("--dev-size", f.n_dev, "Dev samples");
    synth_cmd->add_option("--test-size", f.n_test, "Test samples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*train_cmd) return cmd_train(f, out);
        if (*eval_cmd) return cmd_eval(f, out);
        if (*ablate_cmd) return cmd_ablate(f, out);
        if (*lowres_cmd) return cmd_lowres(f, out);
        if (*augment_cmd) return cmd_augment(f, out);
        if (*grad_cmd) return cmd_gradcheck(f, out);
        if (*synth_cmd) return cmd_synth(f, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kUsageError;
}

}  // namespace sdif::cli
