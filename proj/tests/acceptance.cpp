// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include "cli_app.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace sdif;
using json = nlohmann::json;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    std::function<Verdict()> run;
};

fs::path g_work;

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fixed(double v, int p = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(p) << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(std::vector<std::string> args, std::string* captured = nullptr) {
    args.insert(args.begin(), "sdif");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (captured) *captured = out.str();
    if (code != 0) throw std::runtime_error("sdif " + args[1] + " exited " + std::to_string(code) + ": " + err.str());
    return code;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = g_work / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

model::SDIFConfig model_for(const data::Dataset& ds, std::size_t d_model = 32, std::size_t heads = 4) {
    model::SDIFConfig c;
    c.text_dim = ds.dims.text;
    c.video_dim = ds.dims.video;
    c.audio_dim = ds.dims.audio;
    c.d_model = d_model;
    c.n_heads = heads;
    c.n_classes = ds.n_classes();
    return c;
}

// The cross-modal synthetic corpus shared by criteria 3, 4 and 9.
data::DataSplits cross_modal(std::size_t n_train, std::size_t n_dev, std::uint64_t seed = 0) {
    data::SynthSpec spec;
    return data::synth_splits(spec, n_train, n_dev, 0, seed);
}

// ---------------------------------------------------------------------------

Verdict gradient_check() {
    Stopwatch clock;
    const auto results = run_grad_suite(0);
    double worst = 0.0;
    std::string worst_name, failed;
    for (const auto& r : results) {
        if (r.report.max_relative_error > worst) {
            worst = r.report.max_relative_error;
            worst_name = r.name;
        }
        if (!(r.report.passed && r.report.max_relative_error < 1e-4)) failed += " " + r.name;
    }
    const double t = clock.seconds();
    const bool has_full = std::any_of(results.begin(), results.end(), [](const auto& r) { return r.name.rfind("sdif forward", 0) == 0; });
    std::ostringstream d;
    d << results.size() << " checks, max rel err " << std::scientific << std::setprecision(2) << worst << " (" << worst_name
      << "), " << fixed(t, 1) << " s";
    if (!failed.empty()) d << "; failed:" << failed;
    if (!has_full) d << "; no full-forward check";
    return {failed.empty() && has_full && t < 30.0, d.str()};
}

Verdict overfit() {
    Stopwatch clock;
    data::SynthSpec spec;
    spec.n_samples = 32;
    const auto ds = data::synth_dataset(spec, 11);
    train::TrainConfig tc;
    tc.epochs = 200;
    tc.learning_rate = 3e-3;
    tc.target_dev_accuracy = 1.0;
    auto mc = model_for(ds);
    mc.dropout = 0.0;
    auto fitted = train::fit(mc, ds, ds, tc);
    const double acc = train::evaluate(fitted.model, ds).accuracy;
    const double t = clock.seconds();
    return {acc >= 0.99 && fitted.result.joint_epochs_run <= 200 && t < 120.0,
            "train acc " + fixed(acc) + " after " + std::to_string(fitted.result.joint_epochs_run) + " epochs, " + fixed(t, 1) + " s"};
}

struct FusionScores {
    double full = 0, text = 0;
};

Verdict fusion_necessity() {
    Stopwatch clock;
    const auto splits = cross_modal(2000, 500);
    const double chance = 1.0 / static_cast<double>(splits.train.n_classes());
    train::TrainConfig tc;
    tc.epochs = 20;
    tc.learning_rate = 1e-3;
    FusionScores mean;
    std::string per_seed;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        tc.seed = seed;
        auto full_cfg = model_for(splits.train);
        auto text_cfg = full_cfg;
        text_cfg.enabled_reps = model::RepSet::parse("t");
        const double full = train::fit(full_cfg, splits.train, splits.dev, tc).result.best_dev.accuracy;
        const double text = train::fit(text_cfg, splits.train, splits.dev, tc).result.best_dev.accuracy;
        mean.full += full / 3.0;
        mean.text += text / 3.0;
        per_seed += " " + fixed(full, 3) + "/" + fixed(text, 3);
    }
    const double t = clock.seconds();
    const bool ok = mean.full >= 0.90 && mean.text <= chance + 0.15 && t < 600.0;
    return {ok, "full " + fixed(mean.full) + " (>= 0.90), text-only " + fixed(mean.text) + " (<= " + fixed(chance + 0.15) +
                    "); per seed full/text" + per_seed + "; " + fixed(t, 1) + " s"};
}

Verdict ablation() {
    Stopwatch clock;
    const auto splits = cross_modal(2000, 500);
    train::TrainConfig tc;
    tc.epochs = 20;
    tc.learning_rate = 1e-3;
    train::ExperimentOptions opts;
    opts.seeds = {0, 1, 2};
    opts.report = train::ReportSplit::Dev;
    const auto rows = train::run_ablation_suite(model_for(splits.train), splits, tc, opts);

    const std::vector<std::string> expected{"v,t,a",  "v_t,a_t", "va_t",   "v_t,a_t,va_t", "v,t,a,v_t,a_t",
                                            "v,t,a,v_t,a_t,va_t", "full", "w/o SI", "w/o DI"};
    bool structure = rows.size() == 2 * expected.size();
    std::map<std::pair<std::string, std::string>, train::ResultRow> by_key;
    for (std::size_t i = 0; structure && i < rows.size(); ++i) {
        const auto& r = rows[i];
        structure = r.config == expected[i % expected.size()] && r.setting == (i < expected.size() ? "twenty" : "binary") &&
                    r.per_seed.size() == 3;
        for (double v : {r.metrics.accuracy, r.metrics.f1, r.metrics.precision, r.metrics.recall})
            structure = structure && std::isfinite(v) && v >= 0.0 && v <= 1.0;
        by_key[{r.config, r.setting}] = r;
    }
    std::ofstream csv(fresh_dir("ablation") / "ablation.csv");
    train::write_results_csv(rows, csv);

    bool directional = structure;
    std::ostringstream d;
    d << (structure ? "18 rows ok" : "row structure wrong");
    for (const char* setting : {"twenty", "binary"}) {
        if (!structure) break;
        const double full = by_key.at({"full", setting}).metrics.f1;
        d << "; " << setting << " full F1 " << fixed(full, 4);
        for (const char* single : {"v,t,a", "v_t,a_t", "va_t"}) {
            const double f1 = by_key.at({single, setting}).metrics.f1;
            d << " {" << single << "} " << fixed(f1, 4);
            directional = directional && full >= f1;
        }
    }
    d << "; " << fixed(clock.seconds(), 1) << " s";
    return {directional, d.str()};
}

Verdict metric_oracle() {
    std::mt19937_64 rng(2024);
    std::size_t compared = 0, mismatched = 0;
    double worst = 0.0;
    for (std::size_t k : {2u, 20u}) {
        std::uniform_int_distribution<std::size_t> cls(0, k - 1);
        std::uniform_int_distribution<std::size_t> len(1, 200);
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = len(rng);
            std::vector<std::size_t> gold(n), pred(n);
            for (auto& g : gold) g = cls(rng);
            // a third of the trials are mostly correct so high scores are covered too
            std::bernoulli_distribution keep(trial % 3 == 0 ? 0.8 : 0.0);
            for (std::size_t i = 0; i < n; ++i) pred[i] = keep(rng) ? gold[i] : cls(rng);
            const auto m = train::compute_metrics(gold, pred, k);
            const auto o = oracle::brute_force_metrics(gold, pred, k);
            for (auto [a, b] : {std::pair{m.accuracy, o.accuracy}, {m.precision, o.precision}, {m.recall, o.recall}, {m.f1, o.f1}}) {
                worst = std::max(worst, std::abs(a - b));
                mismatched += a != b;
                ++compared;
            }
        }
    }
    std::ostringstream d;
    d << compared << " values over 2000 vectors, " << mismatched << " differ, max |diff| " << std::scientific
      << std::setprecision(2) << worst;
    return {mismatched == 0, d.str()};
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> g;
    for (auto& v : t.mutable_values()) v = g(rng);
    return t;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
    const std::size_t d = x.dim(1);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < perm.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.at(perm[r], j);
    return Tensor(x.shape(), std::move(out));
}

Verdict attention_invariants() {
    double row_sum = 0, masked = 0, source_perm = 0, row_perm = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const nn::AttentionConfig cfg{16, 4, 0.1};
        nn::MultiHeadAttention mha(cfg, rng);
        std::uniform_int_distribution<std::size_t> len(2, 12);
        const std::size_t tl = len(rng), sl = len(rng);
        const Tensor target = random_tensor({tl, 16}, rng), source = random_tensor({sl, 16}, rng);
        std::vector<std::uint8_t> mask(sl);
        std::bernoulli_distribution on(0.6);
        for (auto& m : mask) m = on(rng);
        mask[rng() % sl] = 1;
        nn::ForwardContext ctx;

        const auto out = nn::cross_attention(mha, target, source, mask, ctx);
        const auto& w = out.weights;
        for (std::size_t h = 0; h < w.heads; ++h)
            for (std::size_t t = 0; t < w.target_len; ++t) {
                double total = 0;
                for (std::size_t s = 0; s < w.source_len; ++s) {
                    total += w.at(h, t, s);
                    if (!mask[s]) masked = std::max(masked, w.at(h, t, s));
                }
                row_sum = std::max(row_sum, std::abs(total - 1.0));
            }

        std::vector<std::size_t> perm(sl);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::uint8_t> pmask(sl);
        for (std::size_t i = 0; i < sl; ++i) pmask[i] = mask[perm[i]];
        const Tensor b = nn::cross_attention(mha, target, permute_rows(source, perm), pmask, ctx).output;
        for (std::size_t i = 0; i < b.numel(); ++i) source_perm = std::max(source_perm, std::abs(b[i] - out.output[i]));

        nn::EncoderLayer layer(cfg, 64, rng);
        const Tensor m = random_tensor({6, 16}, rng);
        std::vector<std::size_t> rows(6);
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        const Tensor y = nn::self_attention_layer(layer, m, ctx);
        const Tensor yp = nn::self_attention_layer(layer, permute_rows(m, rows), ctx);
        const Tensor expected = permute_rows(y, rows);
        for (std::size_t i = 0; i < y.numel(); ++i) row_perm = std::max(row_perm, std::abs(yp[i] - expected[i]));
    }
    std::ostringstream d;
    d << std::scientific << std::setprecision(2) << "20 random cases: |row sum - 1| " << row_sum << ", masked weight "
      << masked << ", source permutation " << source_perm << ", deep row permutation " << row_perm;
    return {row_sum < 1e-9 && masked < 1e-9 && source_perm < 1e-9 && row_perm < 1e-9, d.str()};
}

Verdict mock_augmentation() {
    Stopwatch clock;
    const fs::path dir = fresh_dir("augment");
    run_cli({"augment", "--mock", "--out", dir.string(), "--per-intent", "1250", "--demos", "20", "--seed", "0"});
    const double t = clock.seconds();

    const auto taxonomy = data::default_intent_taxonomy();
    const auto corpus = aug::read_corpus(dir / "corpus.jsonl", taxonomy);
    std::vector<std::size_t> per_intent(taxonomy.size(), 0);
    std::vector<std::set<std::string>> unique(taxonomy.size());
    for (const auto& u : corpus) {
        ++per_intent[u.intent];
        unique[u.intent].insert(aug::fold(u.text));
    }
    bool counts = corpus.size() == 25000;
    for (std::size_t c = 0; c < taxonomy.size(); ++c) counts = counts && per_intent[c] == 1250 && unique[c].size() == 1250;

    const auto report = json::parse(slurp(dir / "augment_report.json"));
    const auto& demos = report.at("demonstrations_per_prompt");
    const bool twenty_demos = demos.size() == 1 && demos.contains("20");

    aug::write_corpus(corpus, taxonomy, dir / "rewritten.jsonl");
    const bool lossless = aug::read_corpus(dir / "rewritten.jsonl", taxonomy) == corpus &&
                          slurp(dir / "rewritten.jsonl") == slurp(dir / "corpus.jsonl");

    std::ostringstream d;
    d << corpus.size() << " records, " << (counts ? "1250 unique per intent" : "per-intent counts wrong") << ", prompts "
      << demos.dump() << " demos, round trip " << (lossless ? "lossless" : "LOSSY") << ", " << fixed(t, 1) << " s";
    return {counts && twenty_demos && lossless && t < 60.0, d.str()};
}

Verdict assist_learning() {
    Stopwatch clock;
    data::SynthSpec spec;
    spec.rule = data::SynthRule::TextKeywords;
    spec.text_len = 10;
    const auto splits = data::synth_splits(spec, 400, 400, 0, 21);
    const auto& taxonomy = splits.train.taxonomy;

    aug::MockChatClient client(taxonomy, 0);
    aug::GenerationOptions gen;
    gen.target_count = 50;
    gen.demonstrations_per_prompt = 3;
    const auto pools = aug::collect_demonstrations(taxonomy, &splits.train, 3, 0);
    const auto corpus = aug::generate_corpus(client, taxonomy, pools, gen).utterances;
    std::vector<train::AugExample> aug_set;
    std::vector<std::string> texts;
    for (const auto& u : corpus) {
        aug_set.push_back({u.text, u.intent});
        texts.push_back(u.text);
    }
    for (const auto* ds : {&splits.train, &splits.dev})
        for (const auto& s : ds->samples) texts.push_back(*s.raw_text);

    auto mc = model_for(splits.train);
    mc.vocab = aug::Vocab::build(texts).tokens();
    mc.assist_head = true;
    mc.text_dim = mc.d_model;

    const double target = 0.9;
    const std::size_t cap = 60;
    train::TrainConfig tc;
    tc.epochs = cap;
    tc.learning_rate = 3e-3;
    tc.aug_epochs = 10;
    tc.target_dev_accuracy = target;

    double two_phase = 0, joint_only = 0;
    std::size_t capped_two_phase = 0, capped_joint = 0;
    std::string per_seed;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        tc.seed = seed;
        const auto a = train::fit(mc, splits.train, splits.dev, tc, &aug_set).result;
        const auto b = train::fit(mc, splits.train, splits.dev, tc).result;
        // a run that never reaches the target is charged the full epoch budget
        const auto epochs = [&](const train::TrainResult& r, std::size_t& capped) {
            if (!r.target_reached_epoch) ++capped;
            return static_cast<double>(r.target_reached_epoch.value_or(cap));
        };
        const double ea = epochs(a, capped_two_phase), eb = epochs(b, capped_joint);
        two_phase += ea / 3.0;
        joint_only += eb / 3.0;
        per_seed += " " + fixed(ea, 0) + "/" + fixed(eb, 0);
    }
    std::ostringstream d;
    d << "epochs to dev acc " << target << ": two-phase " << fixed(two_phase, 2) << " vs joint-only " << fixed(joint_only, 2)
      << " (seed a/b" << per_seed << "; " << tc.aug_epochs << " assist epochs on " << aug_set.size()
      << " generated utterances precede the two-phase count; capped runs two-phase " << capped_two_phase
      << ", joint-only " << capped_joint << " at " << cap << "), "
      << fixed(clock.seconds(), 1) << " s";
    return {capped_two_phase == 0 && two_phase <= joint_only / 2.0, d.str()};
}

std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

Verdict low_resource() {
    Stopwatch clock;
    const fs::path dir = fresh_dir("lowres");
    const auto splits = cross_modal(2000, 500, 9);
    const fs::path manifest = data::write_dataset(splits, dir / "data");
    json cfg{{"model", model_for(splits.train)}, {"train", {{"epochs", 20}, {"learning_rate", 1e-3}}}};
    std::ofstream(dir / "config.json") << cfg.dump(2);
    run_cli({"lowres", "--data", manifest.string(), "--config", (dir / "config.json").string(), "--out",
             (dir / "run").string(), "--seeds", "0,1,2", "--split", "dev"});

    const std::vector<double> fractions{0.01, 0.05, 0.10, 0.20, 0.30};
    const auto counts = json::parse(slurp(dir / "run" / "lowres_counts.json"));
    bool stratified = counts.size() == fractions.size();
    std::vector<std::size_t> full(splits.train.n_classes(), 0);
    for (const auto& s : splits.train.samples) ++full[static_cast<std::size_t>(s.label)];
    for (std::size_t i = 0; stratified && i < fractions.size(); ++i) {
        stratified = std::abs(counts[i].at("fraction").get<double>() - fractions[i]) < 1e-12;
        const auto got = counts[i].at("class_counts").get<std::vector<std::size_t>>();
        std::size_t total = 0;
        for (std::size_t c = 0; c < full.size(); ++c) {
            const double ideal = fractions[i] * static_cast<double>(full[c]);
            stratified = stratified && std::abs(static_cast<double>(got[c]) - ideal) <= 1.0;
            total += got[c];
        }
        stratified = stratified && total == static_cast<std::size_t>(std::llround(fractions[i] * 2000.0));
    }

    std::map<std::string, std::vector<double>> acc;  // setting -> accuracy per fraction
    std::istringstream csv(slurp(dir / "run" / "lowres.csv"));
    std::string line;
    std::getline(csv, line);
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        const auto f = csv_fields(line);
        acc[f.at(1)].push_back(std::stod(f.at(2)));
        ++rows;
    }
    bool monotone = rows == 2 * fractions.size();
    std::ostringstream d;
    d << (stratified ? "counts within 1 per class" : "stratified counts WRONG");
    for (const auto& [setting, curve] : acc) {
        std::size_t inversions = 0;
        double worst_drop = 0;
        for (std::size_t i = 1; i < curve.size(); ++i)
            if (curve[i] < curve[i - 1]) {
                ++inversions;
                worst_drop = std::max(worst_drop, curve[i - 1] - curve[i]);
            }
        monotone = monotone && curve.size() == fractions.size() && inversions <= 1 && worst_drop <= 0.01;
        d << "; " << setting << " dev acc";
        for (double a : curve) d << " " << fixed(a, 3);
        d << " (" << inversions << " inversions)";
    }
    d << "; " << fixed(clock.seconds(), 1) << " s";
    return {stratified && monotone, d.str()};
}

Verdict determinism() {
    const fs::path dir = fresh_dir("determinism");
    std::vector<std::string> differences;
    auto compare = [&](const std::string& what, const fs::path& a, const fs::path& b) {
        if (slurp(a) != slurp(b)) differences.push_back(what);
    };
    for (const char* run : {"a", "b"}) {
        const std::string root = (dir / run).string();
        run_cli({"synth", "--out", root + "/data", "--train-size", "120", "--dev-size", "40", "--test-size", "40", "--seed", "4"});
        run_cli({"train", "--data", root + "/data/manifest.json", "--out", root + "/train", "--epochs", "4", "--seed", "4"});
        run_cli({"eval", "--data", root + "/data/manifest.json", "--checkpoint", root + "/train/model.ckpt", "--out",
                 root + "/eval"});
        run_cli({"augment", "--mock", "--out", root + "/aug", "--per-intent", "30", "--seed", "4"});
        run_cli({"ablate", "--data", root + "/data/manifest.json", "--out", root + "/ablate", "--epochs", "1", "--seeds",
                 "4", "--setting", "binary"});
    }
    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), dir / "a");
        if (rel.filename() == "effective_config.json") continue;  // records its own output paths
        ++files;
        const fs::path other = dir / "b" / rel;
        if (!fs::exists(other)) differences.push_back(rel.string() + " (missing)");
        else compare(rel.string(), entry.path(), other);
    }
    std::string d = std::to_string(files) + " files compared across two runs (data, train log, checkpoint, eval, corpus, ablation)";
    if (!differences.empty()) {
        d += "; differ:";
        for (const auto& x : differences) d += " " + x;
    }
    return {differences.empty() && files >= 8, d};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SDIF acceptance run"};
    std::string work = "acceptance_work";
    std::vector<int> only;
    app.add_option("--work-dir", work, "Scratch directory for generated data and runs");
    app.add_option("--only", only, "Run only these criterion numbers");
    CLI11_PARSE(app, argc, argv);
    g_work = work;
    fs::create_directories(g_work);

    const std::vector<Criterion> criteria{
        {1, "gradient correctness", gradient_check},
        {2, "overfitting sanity", overfit},
        {3, "fusion necessity", fusion_necessity},
        {4, "ablation structure", ablation},
        {5, "metric oracle", metric_oracle},
        {6, "attention invariants", attention_invariants},
        {7, "offline augmentation", mock_augmentation},
        {8, "assist learning", assist_learning},
        {9, "low-resource protocol", low_resource},
        {10, "determinism", determinism},
    };

    json summary = json::array();
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failures += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << v.detail << std::endl;
        summary.push_back({{"criterion", c.id}, {"name", c.name}, {"pass", v.pass}, {"detail", v.detail}});
    }
    std::ofstream(g_work / "acceptance.json") << summary.dump(2) << '\n';
    return failures == 0 ? 0 : 1;
}
