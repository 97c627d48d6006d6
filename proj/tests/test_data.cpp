#include "sdif/augment/tokenizer.hpp"
#include "sdif/checkpoint.hpp"
#include "sdif/data.hpp"
#include "sdif/lexicon.hpp"
#include "sdif/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

using namespace sdif;
using namespace sdif::data;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / (std::string("sdif_data_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

SynthSpec tiny_spec() {
    SynthSpec s;
    s.n_classes = 4;
    s.dims = {3, 4, 2};
    s.text_len = 3;
    s.video_len = 5;
    s.audio_len = 4;
    return s;
}

void rewrite_manifest(const fs::path& path, const std::function<void(nlohmann::json&)>& edit) {
    nlohmann::json j;
    std::ifstream(path) >> j;
    edit(j);
    std::ofstream(path) << j.dump();
}

DataError::Kind load_error_kind(const fs::path& manifest) {
    try {
        load_dataset(manifest);
    } catch (const DataError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a DataError";
    return DataError::Kind::Schema;
}

std::vector<double> pooled(const ModalityFeatures& m) {
    std::vector<double> out(m.dim, 0.0);
    double n = 0;
    for (std::size_t r = 0; r < m.length; ++r) {
        if (!m.mask[r]) continue;
        n += 1;
        for (std::size_t j = 0; j < m.dim; ++j) out[j] += m.values[r * m.dim + j];
    }
    for (auto& v : out) v /= n;
    return out;
}

// Multinomial logistic regression by full-batch gradient descent on pooled
// features of one modality; returns held-out accuracy.
double probe_accuracy(const Dataset& train, const Dataset& test, ModalityFeatures Sample::*modality) {
    const std::size_t k = train.n_classes();
    const std::size_t d = (train.samples[0].*modality).dim + 1;
    std::vector<std::vector<double>> x;
    for (const auto& s : train.samples) {
        auto f = pooled(s.*modality);
        f.push_back(1.0);
        x.push_back(f);
    }
    std::vector<double> w(k * d, 0.0);
    for (int it = 0; it < 300; ++it) {
        std::vector<double> grad(k * d, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            std::vector<double> z(k, 0.0);
            for (std::size_t c = 0; c < k; ++c)
                for (std::size_t j = 0; j < d; ++j) z[c] += w[c * d + j] * x[i][j];
            const double mx = *std::max_element(z.begin(), z.end());
            double total = 0;
            for (auto& v : z) total += (v = std::exp(v - mx));
            for (std::size_t c = 0; c < k; ++c) {
                const double g = z[c] / total - (static_cast<int>(c) == train.samples[i].label ? 1.0 : 0.0);
                for (std::size_t j = 0; j < d; ++j) grad[c * d + j] += g * x[i][j];
            }
        }
        for (std::size_t p = 0; p < w.size(); ++p) w[p] -= 0.5 * grad[p] / static_cast<double>(x.size());
    }
    std::size_t correct = 0;
    for (const auto& s : test.samples) {
        auto f = pooled(s.*modality);
        f.push_back(1.0);
        std::size_t best = 0;
        double best_z = -1e300;
        for (std::size_t c = 0; c < k; ++c) {
            double z = 0;
            for (std::size_t j = 0; j < d; ++j) z += w[c * d + j] * f[j];
            if (z > best_z) best_z = z, best = c;
        }
        correct += static_cast<int>(best) == s.label;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(Records, RoundTripIsLossless) {
    TempDir tmp;
    auto ds = synth_dataset(tiny_spec(), 3);
    ds.samples[0].raw_text = "caf\xC3\xA9 au lait, s'il vous pla\xC3\xAEt";
    ds.samples[1].raw_text = "";
    write_records(ds.samples, tmp.path() / "a.rec");
    EXPECT_EQ(read_records(tmp.path() / "a.rec"), ds.samples);
}

TEST(Records, TruncatedAndPaddedFilesAreRejected) {
    TempDir tmp;
    const auto ds = synth_dataset(tiny_spec(), 3);
    const auto file = tmp.path() / "a.rec";
    write_records(ds.samples, file);
    const auto size = fs::file_size(file);

    fs::resize_file(file, size - 5);
    EXPECT_THROW(read_records(file), DataError);

    write_records(ds.samples, file);
    std::ofstream(file, std::ios::app | std::ios::binary) << "xx";
    EXPECT_THROW(read_records(file), DataError);

    std::ofstream(file, std::ios::binary | std::ios::trunc) << "NOTMAGIC....";
    EXPECT_THROW(read_records(file), DataError);
}

TEST(Manifest, RoundTripPreservesSplits) {
    TempDir tmp;
    const auto splits = synth_splits(tiny_spec(), 12, 8, 4, 2);
    const auto manifest = write_dataset(splits, tmp.path());
    const DataSplits back = load_dataset(manifest);
    // Loaded splits are id-ordered; synthetic ids are zero-padded so the order is unchanged.
    EXPECT_EQ(back, splits);
}

TEST(Manifest, MissingFilesAreReported) {
    TempDir tmp;
    EXPECT_EQ(load_error_kind(tmp.path() / "manifest.json"), DataError::Kind::MissingFile);
    const auto manifest = write_dataset(synth_splits(tiny_spec(), 4, 4, 4, 0), tmp.path());
    fs::remove(tmp.path() / "dev.rec");
    EXPECT_EQ(load_error_kind(manifest), DataError::Kind::MissingFile);
}

TEST(Manifest, SchemaViolations) {
    TempDir tmp;
    const auto manifest = write_dataset(synth_splits(tiny_spec(), 4, 4, 4, 0), tmp.path());
    rewrite_manifest(manifest, [](auto& j) { j["format"] = "SOMETHING-ELSE"; });
    EXPECT_EQ(load_error_kind(manifest), DataError::Kind::Schema);

    write_dataset(synth_splits(tiny_spec(), 4, 4, 4, 0), tmp.path());
    rewrite_manifest(manifest, [](auto& j) { j["dims"]["video"] = 7; });
    EXPECT_EQ(load_error_kind(manifest), DataError::Kind::Schema);

    write_dataset(synth_splits(tiny_spec(), 4, 4, 4, 0), tmp.path());
    rewrite_manifest(manifest, [](auto& j) { j["splits"]["dev"]["ids"].push_back(j["splits"]["train"]["ids"][0]); });
    EXPECT_EQ(load_error_kind(manifest), DataError::Kind::Schema);

    write_dataset(synth_splits(tiny_spec(), 4, 4, 4, 0), tmp.path());
    rewrite_manifest(manifest, [](auto& j) { j.erase("taxonomy"); });
    EXPECT_EQ(load_error_kind(manifest), DataError::Kind::Schema);
}

TEST(Manifest, BadSamplesNameTheirId) {
    TempDir tmp;
    auto splits = synth_splits(tiny_spec(), 4, 4, 4, 0);
    splits.train.samples[2].video.values[0] = std::nan("");
    const auto manifest = write_dataset(splits, tmp.path());
    try {
        load_dataset(manifest);
        FAIL() << "expected NonFinite";
    } catch (const DataError& e) {
        EXPECT_EQ(e.kind(), DataError::Kind::NonFinite);
        EXPECT_EQ(e.sample_id(), splits.train.samples[2].id);
        EXPECT_NE(std::string(e.what()).find(splits.train.samples[2].id), std::string::npos);
    }

    splits = synth_splits(tiny_spec(), 4, 4, 4, 0);
    splits.dev.samples[1].label = 9;
    write_dataset(splits, tmp.path());
    EXPECT_EQ(load_error_kind(manifest), DataError::Kind::UnknownLabel);

    splits = synth_splits(tiny_spec(), 4, 4, 4, 0);
    std::fill(splits.test.samples[0].audio.mask.begin(), splits.test.samples[0].audio.mask.end(), 0);
    write_dataset(splits, tmp.path());
    EXPECT_EQ(load_error_kind(manifest), DataError::Kind::Degenerate);
}

TEST(Subsample, StratifiedCountsWithinOnePerClass) {
    SynthSpec spec = tiny_spec();
    spec.n_classes = 20;
    spec.n_samples = 1003;
    const auto ds = synth_dataset(spec, 1);
    const auto full = ds.class_counts();
    for (double f : {0.01, 0.05, 0.1, 0.2, 0.3, 1.0}) {
        const auto sub = subsample_low_resource(ds, f, 7);
        EXPECT_EQ(sub.size(), static_cast<std::size_t>(std::llround(f * 1003)));
        const auto counts = sub.class_counts();
        for (std::size_t c = 0; c < 20; ++c) EXPECT_LE(std::abs(static_cast<double>(counts[c]) - f * full[c]), 1.0);
        std::set<std::string> ids;
        for (const auto& s : sub.samples) ids.insert(s.id);
        EXPECT_EQ(ids.size(), sub.size());
    }
    EXPECT_EQ(subsample_low_resource(ds, 0.1, 7), subsample_low_resource(ds, 0.1, 7));
    EXPECT_THROW(subsample_low_resource(ds, 0.0, 7), std::invalid_argument);
    EXPECT_THROW(subsample_low_resource(ds, 1e-4, 7), std::invalid_argument);
}

TEST(Binary, LabelsFollowTheTaxonomyMap) {
    const auto ds = synth_dataset(tiny_spec(), 1);
    const auto bin = to_binary(ds, ds.taxonomy);
    EXPECT_EQ(bin.n_classes(), 2u);
    for (std::size_t i = 0; i < ds.size(); ++i)
        EXPECT_EQ(bin.samples[i].label, ds.taxonomy.binary_map[static_cast<std::size_t>(ds.samples[i].label)]);
}

TEST(Taxonomy, DefaultHasTwentyIntentsSplitElevenNine) {
    const auto t = default_intent_taxonomy();
    EXPECT_NO_THROW(t.validate());
    ASSERT_EQ(t.size(), 20u);
    EXPECT_EQ(std::count(t.binary_map.begin(), t.binary_map.end(), 0), 11);
    EXPECT_EQ(std::count(t.binary_map.begin(), t.binary_map.end(), 1), 9);
    EXPECT_EQ(t.descriptions.size(), 20u);
    const nlohmann::json j = t;
    EXPECT_EQ(j.get<IntentTaxonomy>(), t);
}

TEST(Synth, DeterministicAndBalanced) {
    SynthSpec spec = tiny_spec();
    spec.n_samples = 40;
    EXPECT_EQ(synth_dataset(spec, 5), synth_dataset(spec, 5));
    EXPECT_NE(synth_dataset(spec, 5), synth_dataset(spec, 6));
    for (auto n : synth_dataset(spec, 5).class_counts()) EXPECT_EQ(n, 10u);
    for (const auto& s : synth_dataset(spec, 5).samples) {
        EXPECT_NO_THROW(validate_sample(s, spec.dims, 4));
        EXPECT_GE(s.video.valid_count(), 3u);
    }
}

TEST(Synth, LabelNeedsBothVideoAndAudio) {
    SynthSpec spec;
    spec.n_classes = 20;
    const auto splits = synth_splits(spec, 2000, 1000, 0, 4);
    // Independent decoder using the hidden directions: bit b is the product of
    // the video and audio sign along direction b.
    const auto world = make_synth_world(spec, 4);
    std::size_t correct = 0;
    for (const auto& s : splits.dev.samples) {
        const auto v = pooled(s.video), a = pooled(s.audio);
        int y = 0;
        for (std::size_t b = 0; b < world.video_dirs.size(); ++b)
            if (dot(v, world.video_dirs[b]) * dot(a, world.audio_dirs[b]) > 0) y |= 1 << b;
        correct += y == s.label;
    }
    EXPECT_GT(static_cast<double>(correct) / 1000.0, 0.9);

    const double chance = 1.0 / 20;
    EXPECT_LE(probe_accuracy(splits.train, splits.dev, &Sample::video), chance + 0.10);
    EXPECT_LE(probe_accuracy(splits.train, splits.dev, &Sample::audio), chance + 0.10);
    EXPECT_LE(probe_accuracy(splits.train, splits.dev, &Sample::text), 2 * chance + 0.10);
}

TEST(Synth, TextKeywordRuleCarriesRawText) {
    SynthSpec spec = tiny_spec();
    spec.rule = SynthRule::TextKeywords;
    spec.text_len = 6;
    spec.n_samples = 20;
    const auto ds = synth_dataset(spec, 0);
    for (const auto& s : ds.samples) {
        ASSERT_TRUE(s.raw_text.has_value());
        EXPECT_EQ(s.text.valid_count(), std::min<std::size_t>(6, aug::tokenize(*s.raw_text).size()));
    }
    EXPECT_EQ(parse_synth_rule("text_keywords"), SynthRule::TextKeywords);
    EXPECT_THROW(parse_synth_rule("pixels"), std::invalid_argument);
}

TEST(Tokenizer, SplitsPunctuationAndLowercases) {
    EXPECT_EQ(aug::tokenize("Hi !"), (std::vector<std::string>{"hi", "!"}));
    EXPECT_EQ(aug::tokenize("Where's MY order?"),
              (std::vector<std::string>{"where", "'", "s", "my", "order", "?"}));
    EXPECT_EQ(aug::tokenize("na\xC3\xAFve"), (std::vector<std::string>{"na\xC3\xAFve"}));
    EXPECT_TRUE(aug::tokenize("   ").empty());
}

TEST(Tokenizer, VocabAndEmbedding) {
    const auto v = aug::Vocab::build({"a b b", "c b"});
    EXPECT_EQ(v.tokens(), (std::vector<std::string>{"[UNK]", "b", "a", "c"}));
    EXPECT_EQ(v.encode("b zebra"), (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(v.encode(""), (std::vector<std::size_t>{0}));
    std::mt19937_64 rng(0);
    const aug::TokenEmbedding emb(v, 5, rng);
    const auto f = aug::tokenize_and_embed("Hi !", emb);
    EXPECT_EQ(f.length, 2u);
    EXPECT_EQ(f.dim, 5u);
    EXPECT_EQ(f.valid_count(), 2u);
}

TEST(Checkpoint, RoundTripRestoresExactWeights) {
    TempDir tmp;
    model::SDIFConfig c;
    c.text_dim = 3;
    c.video_dim = 4;
    c.audio_dim = 2;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_classes = 4;
    const model::SDIFModel m(c, 9);
    save_checkpoint(m, tmp.path() / "m.ckpt", {{"epoch", 3}});
    const auto loaded = load_checkpoint(tmp.path() / "m.ckpt");
    EXPECT_EQ(loaded.model.config(), c);
    EXPECT_EQ(loaded.metadata.at("epoch"), 3);
    const auto a = m.parameters(), b = loaded.model.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].name, b[i].name);
        EXPECT_TRUE(std::equal(a[i].tensor.values().begin(), a[i].tensor.values().end(), b[i].tensor.values().begin()));
    }
}

TEST(Checkpoint, CorruptFilesAreRejected) {
    TempDir tmp;
    model::SDIFConfig c;
    c.text_dim = 3;
    c.video_dim = 4;
    c.audio_dim = 2;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_classes = 4;
    const auto file = tmp.path() / "m.ckpt";
    save_checkpoint(model::SDIFModel(c, 1), file);
    const auto size = fs::file_size(file);
    fs::resize_file(file, size - 8);
    EXPECT_THROW(load_checkpoint(file), CheckpointError);
    save_checkpoint(model::SDIFModel(c, 1), file);
    std::ofstream(file, std::ios::app | std::ios::binary) << "z";
    EXPECT_THROW(load_checkpoint(file), CheckpointError);
    std::ofstream(file, std::ios::trunc) << "hello\n";
    EXPECT_THROW(load_checkpoint(file), CheckpointError);
    EXPECT_THROW(load_checkpoint(tmp.path() / "absent.ckpt"), CheckpointError);
}

TEST(Lexicon, GenericClassNamesKeepOnlyDistinctiveWords) {
    const auto t = IntentTaxonomy::generic(4);
    EXPECT_EQ(class_keywords(t, 2), (std::vector<std::string>{"2"}));
    std::mt19937_64 rng(1);
    const auto text = render_utterance(t, 3, rng);
    const auto toks = aug::tokenize(text);
    EXPECT_NE(std::find(toks.begin(), toks.end(), "3"), toks.end()) << text;
}
