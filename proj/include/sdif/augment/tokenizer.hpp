#pragma once

#include "sdif/data.hpp"
#include "sdif/nn.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace sdif::aug {

/// Lower-cased whitespace/punctuation tokenisation. Each ASCII punctuation
/// character is its own token; bytes >= 0x80 are kept inside words so UTF-8
/// text is never split mid-character.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) tokens.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (u < 0x80 && std::isspace(u)) {
            flush();
        } else if (u < 0x80 && std::ispunct(u)) {
            flush();
            tokens.emplace_back(1, ch);
        } else {
            cur += u < 0x80 ? static_cast<char>(std::tolower(u)) : ch;
        }
    }
    flush();
    return tokens;
}

/// Token <-> id map. Id 0 is the reserved unknown token.
class Vocab {
public:
    static constexpr std::size_t kUnk = 0;
    static constexpr const char* kUnkToken = "[UNK]";

    Vocab() : tokens_{kUnkToken} { index_[kUnkToken] = kUnk; }

    explicit Vocab(const std::vector<std::string>& tokens) : Vocab() {
        for (const auto& t : tokens) {
            if (t == kUnkToken) continue;
            add(t);
        }
    }

    /// Tokens seen at least `min_count` times, ordered by descending count then lexically.
    static Vocab build(const std::vector<std::string>& texts, std::size_t min_count = 1) {
        std::map<std::string, std::size_t> counts;
        for (const auto& text : texts)
            for (auto& tok : tokenize(text)) ++counts[tok];
        std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
        std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        Vocab v;
        for (const auto& [tok, n] : sorted)
            if (n >= min_count) v.add(tok);
        return v;
    }

    std::size_t id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    /// Token ids for `text`; an empty text maps to a single unknown token so the
    /// resulting sequence is never empty.
    std::vector<std::size_t> encode(const std::string& text) const {
        std::vector<std::size_t> ids;
        for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
        if (ids.empty()) ids.push_back(kUnk);
        return ids;
    }

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    void add(const std::string& token) {
        if (index_.emplace(token, tokens_.size()).second) tokens_.push_back(token);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Learned lookup table [vocab x dim] turning text into a feature sequence.
class TokenEmbedding {
public:
    TokenEmbedding() = default;
    TokenEmbedding(Vocab vocab, std::size_t dim, std::mt19937_64& rng)
        : vocab_(std::move(vocab)), table_(nn::make_parameter({vocab_.size(), dim})) {
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : table_.mutable_values()) v = dist(rng);
    }

    Tensor embed(const std::string& text) const {
        const auto ids = vocab_.encode(text);
        return gather_rows(table_, ids);
    }

    void collect(const std::string& prefix, nn::ParameterList& out) const { out.push_back({prefix + ".table", table_}); }

    const Vocab& vocab() const { return vocab_; }
    std::size_t dim() const { return table_.dim(1); }
    bool defined() const { return table_.defined(); }

private:
    Vocab vocab_;
    Tensor table_;
};

/// Text feature sequence for `text` under the current embedding values.
inline data::ModalityFeatures tokenize_and_embed(const std::string& text, const TokenEmbedding& embedding) {
    NoGradGuard guard;
    const Tensor rows = embedding.embed(text);
    return data::ModalityFeatures::dense(rows.dim(0), rows.dim(1), {rows.values().begin(), rows.values().end()});
}

}  // namespace sdif::aug
