#pragma once

#include "sdif/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif::data {

using json = nlohmann::json;

inline constexpr const char* kManifestFormat = "SDIF-DATA-1";
inline constexpr char kRecordMagic[8] = {'S', 'D', 'I', 'F', 'R', 'E', 'C', '1'};

/// Raised for every ingestion failure; `kind` distinguishes the cause.
class DataError : public std::runtime_error {
public:
    enum class Kind { MissingFile, Schema, NonFinite, UnknownLabel, Degenerate };

    DataError(Kind kind, std::string sample_id, const std::string& what)
        : std::runtime_error(what), kind_(kind), sample_id_(std::move(sample_id)) {}

    Kind kind() const { return kind_; }
    const std::string& sample_id() const { return sample_id_; }

private:
    Kind kind_;
    std::string sample_id_;
};

/// A sequence of feature vectors for one modality plus its validity mask.
struct ModalityFeatures {
    std::size_t length = 0;
    std::size_t dim = 0;
    std::vector<double> values;  // length x dim, row-major
    std::vector<std::uint8_t> mask;

    static ModalityFeatures dense(std::size_t length, std::size_t dim, std::vector<double> values) {
        return {length, dim, std::move(values), std::vector<std::uint8_t>(length, 1)};
    }

    std::size_t valid_count() const {
        return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
    }

    Tensor to_tensor() const { return Tensor({length, dim}, values); }

    bool operator==(const ModalityFeatures&) const = default;
};

struct Sample {
    std::string id;
    int label = 0;
    ModalityFeatures text;
    ModalityFeatures video;
    ModalityFeatures audio;
    std::optional<std::string> raw_text;

    bool operator==(const Sample&) const = default;
};

struct FeatureDims {
    std::size_t text = 0;
    std::size_t video = 0;
    std::size_t audio = 0;

    bool operator==(const FeatureDims&) const = default;
};

/// Ordered intent classes with their coarse binary grouping.
struct IntentTaxonomy {
    std::vector<std::string> class_names;
    std::vector<int> binary_map;                 // class index -> {0, 1}
    std::vector<std::string> descriptions;       // one line per class, may be empty
    std::vector<std::vector<std::string>> keywords;  // optional lexical cues per class
    std::vector<std::string> binary_names = {"binary-0", "binary-1"};

    std::size_t size() const { return class_names.size(); }

    int index_of(const std::string& name) const {
        auto it = std::find(class_names.begin(), class_names.end(), name);
        return it == class_names.end() ? -1 : static_cast<int>(it - class_names.begin());
    }

    const std::string& description(std::size_t c) const {
        static const std::string empty;
        return c < descriptions.size() ? descriptions[c] : empty;
    }

    void validate() const {
        if (class_names.size() < 2) throw std::invalid_argument("taxonomy: need at least two classes");
        std::set<std::string> unique(class_names.begin(), class_names.end());
        if (unique.size() != class_names.size()) throw std::invalid_argument("taxonomy: class names must be unique");
        if (binary_map.size() != class_names.size()) {
            throw std::invalid_argument("taxonomy: binary_map must cover all " + std::to_string(size()) + " classes");
        }
        for (int b : binary_map)
            if (b != 0 && b != 1) throw std::invalid_argument("taxonomy: binary_map values must be 0 or 1");
        if (!descriptions.empty() && descriptions.size() != size())
            throw std::invalid_argument("taxonomy: descriptions must be empty or one per class");
        if (!keywords.empty() && keywords.size() != size())
            throw std::invalid_argument("taxonomy: keywords must be empty or one list per class");
    }

    bool operator==(const IntentTaxonomy&) const = default;

    static IntentTaxonomy generic(std::size_t k) {
        IntentTaxonomy t;
        for (std::size_t c = 0; c < k; ++c) {
            t.class_names.push_back("class_" + std::to_string(c));
            t.binary_map.push_back(c < (k + 1) / 2 ? 0 : 1);
        }
        return t;
    }
};

inline void to_json(json& j, const IntentTaxonomy& t) {
    j = json{{"classes", t.class_names}, {"binary_map", t.binary_map}, {"binary_names", t.binary_names}};
    if (!t.descriptions.empty()) j["descriptions"] = t.descriptions;
    if (!t.keywords.empty()) j["keywords"] = t.keywords;
}

inline void from_json(const json& j, IntentTaxonomy& t) {
    t.class_names = j.at("classes").get<std::vector<std::string>>();
    t.binary_map = j.at("binary_map").get<std::vector<int>>();
    t.descriptions = j.value("descriptions", std::vector<std::string>{});
    t.keywords = j.value("keywords", std::vector<std::vector<std::string>>{});
    t.binary_names = j.value("binary_names", std::vector<std::string>{"binary-0", "binary-1"});
}

struct Dataset {
    FeatureDims dims;
    IntentTaxonomy taxonomy;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    std::size_t n_classes() const { return taxonomy.size(); }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(n_classes(), 0);
        for (const auto& s : samples) counts.at(static_cast<std::size_t>(s.label))++;
        return counts;
    }

    bool operator==(const Dataset&) const = default;
};

struct DataSplits {
    Dataset train;
    Dataset dev;
    Dataset test;

    bool operator==(const DataSplits&) const = default;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate_modality(const ModalityFeatures& m, std::size_t expected_dim, const char* name,
                              const std::string& id) {
    using K = DataError::Kind;
    if (m.length == 0) throw DataError(K::Schema, id, "sample " + id + ": " + name + " sequence is empty");
    if (m.dim != expected_dim) {
        throw DataError(K::Schema, id,
                        "sample " + id + ": " + name + " dim " + std::to_string(m.dim) + " != declared " +
                            std::to_string(expected_dim));
    }
    if (m.mask.size() != m.length || m.values.size() != m.length * m.dim) {
        throw DataError(K::Schema, id, "sample " + id + ": " + name + " mask/values size mismatch");
    }
    if (m.valid_count() == 0) {
        throw DataError(K::Degenerate, id, "sample " + id + ": " + name + " has no valid positions");
    }
    for (double v : m.values) {
        if (!std::isfinite(v)) throw DataError(K::NonFinite, id, "sample " + id + ": non-finite " + name + " feature");
    }
}

inline void validate_sample(const Sample& s, const FeatureDims& dims, std::size_t n_classes) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= n_classes) {
        throw DataError(DataError::Kind::UnknownLabel, s.id,
                        "sample " + s.id + ": unknown label " + std::to_string(s.label));
    }
    validate_modality(s.text, dims.text, "text", s.id);
    validate_modality(s.video, dims.video, "video", s.id);
    validate_modality(s.audio, dims.audio, "audio", s.id);
}

// ---------------------------------------------------------------------------
// Record files: little-endian, see docs/formats.md

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& where) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError(DataError::Kind::Schema, "", "truncated record file (" + where + ")");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_bytes(std::istream& in, std::uint32_t n, const std::string& where) {
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw DataError(DataError::Kind::Schema, "", "truncated record file (" + where + ")");
    return s;
}

inline constexpr std::uint32_t kNoRawText = 0xFFFFFFFFu;

inline void put_modality(std::ostream& out, const ModalityFeatures& m) {
    put_u32(out, static_cast<std::uint32_t>(m.length));
    put_u32(out, static_cast<std::uint32_t>(m.dim));
    for (auto b : m.mask) out.put(static_cast<char>(b ? 1 : 0));
    for (double v : m.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline ModalityFeatures get_modality(std::istream& in, const std::string& id) {
    ModalityFeatures m;
    m.length = get_u32(in, id);
    m.dim = get_u32(in, id);
    const std::string mask = get_bytes(in, static_cast<std::uint32_t>(m.length), id);
    m.mask.assign(mask.begin(), mask.end());
    for (auto b : m.mask) {
        if (b > 1) throw DataError(DataError::Kind::Schema, id, "sample " + id + ": mask byte must be 0 or 1");
    }
    m.values.resize(m.length * m.dim);
    for (auto& v : m.values) v = static_cast<double>(std::bit_cast<float>(get_u32(in, id)));
    return m;
}

}  // namespace detail

inline void write_records(const std::vector<Sample>& samples, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(DataError::Kind::MissingFile, "", "cannot write " + path.string());
    out.write(kRecordMagic, sizeof(kRecordMagic));
    detail::put_u32(out, static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) {
        detail::put_string(out, s.id);
        detail::put_u32(out, static_cast<std::uint32_t>(s.label));
        if (s.raw_text) detail::put_string(out, *s.raw_text);
        else detail::put_u32(out, detail::kNoRawText);
        detail::put_modality(out, s.text);
        detail::put_modality(out, s.video);
        detail::put_modality(out, s.audio);
    }
}

inline std::vector<Sample> read_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataError::Kind::MissingFile, "", "record file not found: " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kRecordMagic)) {
        throw DataError(DataError::Kind::Schema, "", path.string() + ": bad record file magic");
    }
    const std::uint32_t n = detail::get_u32(in, path.string());
    std::vector<Sample> samples;
    samples.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Sample s;
        s.id = detail::get_bytes(in, detail::get_u32(in, path.string()), path.string());
        s.label = static_cast<int>(static_cast<std::int32_t>(detail::get_u32(in, s.id)));
        const std::uint32_t text_len = detail::get_u32(in, s.id);
        if (text_len != detail::kNoRawText) s.raw_text = detail::get_bytes(in, text_len, s.id);
        s.text = detail::get_modality(in, s.id);
        s.video = detail::get_modality(in, s.id);
        s.audio = detail::get_modality(in, s.id);
        samples.push_back(std::move(s));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw DataError(DataError::Kind::Schema, "", path.string() + ": trailing bytes after last record");
    }
    return samples;
}

// ---------------------------------------------------------------------------
// Manifest

inline const char* split_name(int i) {
    static const char* names[] = {"train", "dev", "test"};
    return names[i];
}

/// Writes `<dir>/manifest.json` plus one record file per split; returns the manifest path.
inline std::filesystem::path write_dataset(const DataSplits& splits, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const Dataset* parts[] = {&splits.train, &splits.dev, &splits.test};
    json manifest;
    manifest["format"] = kManifestFormat;
    manifest["dims"] = {{"text", splits.train.dims.text}, {"video", splits.train.dims.video},
                        {"audio", splits.train.dims.audio}};
    manifest["taxonomy"] = splits.train.taxonomy;
    for (int i = 0; i < 3; ++i) {
        const std::string file = std::string(split_name(i)) + ".rec";
        std::vector<std::string> ids;
        for (const auto& s : parts[i]->samples) ids.push_back(s.id);
        manifest["splits"][split_name(i)] = {{"file", file}, {"ids", ids}};
        write_records(parts[i]->samples, dir / file);
    }
    const auto path = dir / "manifest.json";
    std::ofstream(path) << manifest.dump(2) << "\n";
    return path;
}

/// Loads and validates a manifest-described dataset. Samples in each split are
/// ordered by id.
inline DataSplits load_dataset(const std::filesystem::path& manifest_path) {
    using K = DataError::Kind;
    std::ifstream in(manifest_path);
    if (!in) throw DataError(K::MissingFile, "", "manifest not found: " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(K::Schema, "", manifest_path.string() + ": invalid JSON: " + e.what());
    }

    DataSplits splits;
    FeatureDims dims;
    IntentTaxonomy taxonomy;
    try {
        if (manifest.at("format").get<std::string>() != kManifestFormat) {
            throw DataError(K::Schema, "", manifest_path.string() + ": unsupported format " +
                                               manifest.at("format").dump());
        }
        const auto& d = manifest.at("dims");
        dims = {d.at("text").get<std::size_t>(), d.at("video").get<std::size_t>(), d.at("audio").get<std::size_t>()};
        taxonomy = manifest.at("taxonomy").get<IntentTaxonomy>();
        taxonomy.validate();
    } catch (const json::exception& e) {
        throw DataError(K::Schema, "", manifest_path.string() + ": schema violation: " + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(K::Schema, "", manifest_path.string() + ": " + e.what());
    }

    Dataset* parts[] = {&splits.train, &splits.dev, &splits.test};
    std::set<std::string> all_ids;
    const auto base = manifest_path.parent_path();
    for (int i = 0; i < 3; ++i) {
        Dataset& part = *parts[i];
        part.dims = dims;
        part.taxonomy = taxonomy;
        if (!manifest.contains("splits") || !manifest["splits"].contains(split_name(i))) continue;
        const auto& entry = manifest["splits"][split_name(i)];
        std::vector<std::string> ids;
        std::string file;
        try {
            ids = entry.at("ids").get<std::vector<std::string>>();
            file = entry.at("file").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError(K::Schema, "", std::string("split ") + split_name(i) + ": " + e.what());
        }
        for (const auto& id : ids) {
            if (!all_ids.insert(id).second) {
                throw DataError(K::Schema, id, "sample " + id + " listed in more than one split");
            }
        }
        auto samples = read_records(base / file);
        std::map<std::string, Sample> by_id;
        for (auto& s : samples) {
            const std::string id = s.id;
            if (!by_id.emplace(id, std::move(s)).second) {
                throw DataError(K::Schema, id, "sample " + id + " duplicated in " + file);
            }
        }
        if (by_id.size() != ids.size()) {
            throw DataError(K::Schema, "", file + ": holds " + std::to_string(by_id.size()) + " records but split lists " +
                                               std::to_string(ids.size()) + " ids");
        }
        for (const auto& id : ids) {
            if (!by_id.count(id)) throw DataError(K::Schema, id, "sample " + id + " listed but missing from " + file);
        }
        for (auto& [id, s] : by_id) {
            validate_sample(s, dims, taxonomy.size());
            part.samples.push_back(std::move(s));
        }
    }
    return splits;
}

// ---------------------------------------------------------------------------
// Transformations

/// Stratified subset with per-class counts fixed by largest-remainder rounding
/// of fraction * class_count; total is round(fraction * size()).
inline Dataset subsample_low_resource(const Dataset& dataset, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subsample: fraction must be in (0, 1]");
    const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dataset.size())));
    if (total == 0) {
        throw std::invalid_argument("subsample: fraction " + std::to_string(fraction) + " of " +
                                    std::to_string(dataset.size()) + " samples yields no samples");
    }
    std::mt19937_64 rng(seed);

    const std::size_t k = dataset.n_classes();
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < dataset.size(); ++i) members[static_cast<std::size_t>(dataset.samples[i].label)].push_back(i);

    std::vector<std::size_t> quota(k);
    std::vector<double> remainder(k);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double exact = fraction * static_cast<double>(members[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - static_cast<double>(quota[c]);
        assigned += quota[c];
    }
    // Ties in the remainder are broken by a seeded permutation of classes.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < total && i < order.size(); ++i) {
        if (quota[order[i]] < members[order[i]].size()) {
            ++quota[order[i]];
            ++assigned;
        }
    }

    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < k; ++c) {
        auto pool = members[c];
        std::shuffle(pool.begin(), pool.end(), rng);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
    std::sort(chosen.begin(), chosen.end());

    Dataset out{dataset.dims, dataset.taxonomy, {}};
    out.samples.reserve(chosen.size());
    for (auto i : chosen) out.samples.push_back(dataset.samples[i]);
    return out;
}

/// Two-class view: labels remapped through taxonomy.binary_map.
inline Dataset to_binary(const Dataset& dataset, const IntentTaxonomy& taxonomy) {
    Dataset out;
    out.dims = dataset.dims;
    out.taxonomy.class_names = taxonomy.binary_names;
    out.taxonomy.binary_map = {0, 1};
    out.taxonomy.binary_names = taxonomy.binary_names;
    out.samples = dataset.samples;
    for (auto& s : out.samples) {
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= taxonomy.binary_map.size()) {
            throw std::invalid_argument("to_binary: class " + std::to_string(s.label) + " of sample " + s.id +
                                        " has no binary mapping");
        }
        s.label = taxonomy.binary_map[static_cast<std::size_t>(s.label)];
    }
    return out;
}

}  // namespace sdif::data
