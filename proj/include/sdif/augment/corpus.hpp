#pragma once

#include "sdif/augment/generate.hpp"
#include "sdif/data.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif::aug {

inline constexpr const char* kCorpusFormat = "SDIF-AUG-1";

class CorpusError : public std::runtime_error {
public:
    CorpusError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
    /// 1-based line number of the offending record; 0 for file-level errors.
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// JSON Lines: a header record, then one record per utterance.
inline void write_corpus(const std::vector<AugmentedUtterance>& utterances, const data::IntentTaxonomy& taxonomy,
                         const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CorpusError("corpus: cannot write " + path.string(), 0);
    out << nlohmann::json{{"format", kCorpusFormat}}.dump() << '\n';
    for (const auto& u : utterances) {
        if (u.intent >= taxonomy.size()) throw CorpusError("corpus: intent index " + std::to_string(u.intent) + " outside taxonomy", 0);
        nlohmann::json rec{{"text", u.text},
                           {"intent", taxonomy.class_names[u.intent]},
                           {"source", to_string(u.source)},
                           {"batch_id", u.batch_id}};
        out << rec.dump() << '\n';
    }
    if (!out) throw CorpusError("corpus: write failed for " + path.string(), 0);
}

inline std::vector<AugmentedUtterance> read_corpus(const std::filesystem::path& path, const data::IntentTaxonomy& taxonomy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("corpus: cannot open " + path.string(), 0);
    std::vector<AugmentedUtterance> out;
    std::string line;
    std::size_t number = 0;
    auto fail = [&](const std::string& why) -> CorpusError {
        return CorpusError(path.string() + ":" + std::to_string(number) + ": " + why, number);
    };
    while (std::getline(in, line)) {
        ++number;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw fail("not a JSON record");
        }
        if (number == 1) {
            if (!j.is_object() || j.value("format", "") != kCorpusFormat) throw fail("missing SDIF-AUG-1 header");
            continue;
        }
        try {
            AugmentedUtterance u;
            u.text = j.at("text").get<std::string>();
            const auto name = j.at("intent").get<std::string>();
            const int c = taxonomy.index_of(name);
            if (c < 0) throw fail("unknown intent '" + name + "'");
            u.intent = static_cast<std::size_t>(c);
            u.source = parse_source(j.at("source").get<std::string>());
            u.batch_id = j.at("batch_id").get<std::size_t>();
            if (detail::trim(u.text).empty()) throw fail("empty text");
            out.push_back(std::move(u));
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("bad record: ") + e.what());
        } catch (const std::invalid_argument& e) {
            throw fail(e.what());
        }
    }
    if (number == 0) throw CorpusError("corpus: " + path.string() + " is empty (no header)", 0);
    return out;
}

}  // namespace sdif::aug
