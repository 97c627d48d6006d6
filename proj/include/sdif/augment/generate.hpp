#pragma once

#include "sdif/augment/chat_client.hpp"
#include "sdif/augment/prompt.hpp"
#include "sdif/data.hpp"
#include "sdif/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <future>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace sdif::aug {

struct AugmentedUtterance {
    std::string text;
    std::size_t intent = 0;
    Source source = Source::Mock;
    std::size_t batch_id = 0;

    bool operator==(const AugmentedUtterance&) const = default;
};

/// Items of a numbered-list reply. Falls back to every non-empty line when
/// the reply has no numbered lines at all.
inline std::vector<std::string> parse_numbered_list(const std::string& response) {
    std::vector<std::string> numbered, plain;
    for (const auto& line : detail::lines(response)) {
        if (auto item = detail::numbered_item(line)) numbered.push_back(*item);
        else if (!detail::trim(line).empty()) plain.push_back(detail::trim(line));
    }
    return numbered.empty() ? plain : numbered;
}

/// Strips whitespace, list markers ("3.", "3)", "-", "*") and wrapping quotes.
inline std::string clean_utterance(const std::string& raw) {
    std::string s = detail::trim(raw);
    if (auto item = detail::numbered_item(s)) s = *item;
    if (!s.empty() && (s[0] == '-' || s[0] == '*')) s = detail::trim(s.substr(1));
    auto strip = [&](const std::string& open, const std::string& close) {
        if (s.size() >= open.size() + close.size() && s.rfind(open, 0) == 0 &&
            s.compare(s.size() - close.size(), close.size(), close) == 0) {
            s = detail::trim(s.substr(open.size(), s.size() - open.size() - close.size()));
            return true;
        }
        return false;
    };
    while (strip("\"", "\"") || strip("'", "'") || strip("\xE2\x80\x9C", "\xE2\x80\x9D")) {
    }
    return s;
}

/// Case-folded key used for duplicate detection (ASCII letters only).
inline std::string fold(const std::string& s) {
    std::string out = s;
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Cleans raw items and drops empties, case-folded duplicates and anything
/// equal to a demonstration. Order of first occurrence is kept.
inline std::vector<std::string> filter_utterances(const std::vector<std::string>& raw,
                                                  const std::vector<std::string>& demonstrations = {}) {
    std::unordered_set<std::string> seen;
    for (const auto& d : demonstrations) seen.insert(fold(clean_utterance(d)));
    std::vector<std::string> out;
    for (const auto& r : raw) {
        std::string s = clean_utterance(r);
        if (s.empty()) continue;
        if (seen.insert(fold(s)).second) out.push_back(std::move(s));
    }
    return out;
}

struct GenerationOptions {
    std::size_t target_count = 1250;
    std::size_t request_size = kDefaultRequestSize;
    std::size_t demonstrations_per_prompt = kDefaultDemonstrations;
    // Request budget per intent; 0 means ten times the minimum needed.
    std::size_t max_requests = 0;
    std::size_t concurrency = 1;
    std::uint64_t seed = 0;
};

struct GenerationStats {
    std::size_t requests = 0;
    std::size_t malformed = 0;
    std::size_t rejected = 0;  // empty, duplicate or demonstration items

    GenerationStats& operator+=(const GenerationStats& o) {
        requests += o.requests;
        malformed += o.malformed;
        rejected += o.rejected;
        return *this;
    }
};

/// Generation stopped early; carries everything collected so far.
class PartialResultError : public std::runtime_error {
public:
    PartialResultError(const std::string& what, std::vector<AugmentedUtterance> collected, GenerationStats stats)
        : std::runtime_error(what), collected_(std::move(collected)), stats_(stats) {}

    const std::vector<AugmentedUtterance>& collected() const { return collected_; }
    const GenerationStats& stats() const { return stats_; }

private:
    std::vector<AugmentedUtterance> collected_;
    GenerationStats stats_;
};

struct GenerationResult {
    std::vector<AugmentedUtterance> utterances;
    GenerationStats stats;
};

namespace detail {

/// Demonstrations for one request: the whole pool if it is small enough,
/// otherwise a seeded sample that depends only on (seed, intent, batch).
inline std::vector<std::string> pick_demonstrations(const std::vector<std::string>& pool, std::size_t n,
                                                    std::uint64_t seed, std::size_t intent, std::size_t batch) {
    if (pool.size() <= n) return pool;
    std::mt19937_64 rng(seed ^ (0xA24BAED4963EE407ull * (intent + 1)) ^ (static_cast<std::uint64_t>(batch) << 20));
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(pool[i]);
    return out;
}

}  // namespace detail

/// Requests batches of utterances for one intent until `target_count` unique,
/// filtered utterances are collected. `spec.demonstrations` is the pool
/// prompts draw from. Concurrent clients get up to opts.concurrency requests
/// in flight; replies are merged in batch order so the result is independent
/// of completion order.
inline GenerationResult generate_for_intent(ChatClient& client, const PromptSpec& spec, std::size_t intent,
                                            const GenerationOptions& opts) {
    if (spec.demonstrations.empty()) throw std::invalid_argument("generate: no demonstrations for " + spec.target_intent);
    if (opts.request_size < 1) throw std::invalid_argument("generate: request_size must be >= 1");
    const std::size_t min_requests = (opts.target_count + opts.request_size - 1) / opts.request_size;
    const std::size_t budget = opts.max_requests ? opts.max_requests : 10 * min_requests + 10;
    const std::size_t width = client.concurrent() ? std::max<std::size_t>(1, opts.concurrency) : 1;

    GenerationResult result;
    std::unordered_set<std::string> seen;
    for (const auto& d : spec.demonstrations) seen.insert(fold(clean_utterance(d)));

    std::size_t next_batch = 0;
    while (result.utterances.size() < opts.target_count) {
        if (next_batch >= budget) {
            throw PartialResultError("generate: request budget of " + std::to_string(budget) + " exhausted for " +
                                         spec.target_intent + " with " + std::to_string(result.utterances.size()) + "/" +
                                         std::to_string(opts.target_count) + " utterances",
                                     std::move(result.utterances), result.stats);
        }
        const std::size_t missing = opts.target_count - result.utterances.size();
        const std::size_t round = std::min({width, budget - next_batch, (missing + opts.request_size - 1) / opts.request_size});

        std::vector<PromptSpec> specs;
        for (std::size_t i = 0; i < round; ++i) {
            PromptSpec s = spec;
            s.demonstrations = detail::pick_demonstrations(spec.demonstrations, opts.demonstrations_per_prompt, opts.seed,
                                                           intent, next_batch + i);
            s.n_requested = std::min(opts.request_size, missing);
            specs.push_back(std::move(s));
        }
        std::vector<std::future<std::string>> replies;
        for (const auto& s : specs) {
            auto messages = build_prompt(s);
            if (width > 1) {
                replies.push_back(std::async(std::launch::async, [&client, messages] { return client.complete(messages); }));
            } else {
                replies.push_back(std::async(std::launch::deferred, [&client, messages] { return client.complete(messages); }));
            }
        }
        for (std::size_t i = 0; i < replies.size(); ++i) {
            const std::size_t batch = next_batch + i;
            std::string text;
            ++result.stats.requests;
            try {
                text = replies[i].get();
            } catch (const MalformedResponse&) {
                ++result.stats.malformed;
                continue;
            } catch (const TransportError& e) {
                for (std::size_t j = i + 1; j < replies.size(); ++j) {
                    try {
                        replies[j].wait();
                    } catch (...) {
                    }
                }
                throw PartialResultError(std::string("generate: ") + e.what(), std::move(result.utterances), result.stats);
            }
            const auto items = parse_numbered_list(text);
            if (items.empty()) {
                ++result.stats.malformed;
                continue;
            }
            for (const auto& raw : items) {
                std::string s = clean_utterance(raw);
                if (s.empty() || !seen.insert(fold(s)).second) {
                    ++result.stats.rejected;
                    continue;
                }
                if (result.utterances.size() < opts.target_count)
                    result.utterances.push_back({std::move(s), intent, client.source(), batch});
            }
        }
        next_batch += round;
    }
    return result;
}

/// Demonstration pools per class: utterances from `dataset` where available,
/// topped up with rendered template utterances to `n` per class.
inline std::vector<std::vector<std::string>> collect_demonstrations(const data::IntentTaxonomy& taxonomy,
                                                                   const data::Dataset* dataset, std::size_t n,
                                                                   std::uint64_t seed) {
    std::vector<std::vector<std::string>> pools(taxonomy.size());
    std::vector<std::unordered_set<std::string>> keys(taxonomy.size());
    auto offer = [&](std::size_t c, const std::string& text) {
        const std::string s = clean_utterance(text);
        if (!s.empty() && pools[c].size() < n && keys[c].insert(fold(s)).second) pools[c].push_back(s);
    };
    if (dataset) {
        std::vector<std::size_t> order(dataset->size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        for (auto i : order) {
            const auto& s = dataset->samples[i];
            if (s.raw_text && static_cast<std::size_t>(s.label) < taxonomy.size()) offer(static_cast<std::size_t>(s.label), *s.raw_text);
        }
    }
    std::mt19937_64 rng(seed ^ 0xDE305EEDull);
    for (std::size_t c = 0; c < taxonomy.size(); ++c) {
        for (std::size_t tries = 0; pools[c].size() < n && tries < 100 * n; ++tries)
            offer(c, data::render_utterance(taxonomy, c, rng));
    }
    return pools;
}

/// Runs generate_for_intent for every intent in taxonomy order.
inline GenerationResult generate_corpus(ChatClient& client, const data::IntentTaxonomy& taxonomy,
                                        const std::vector<std::vector<std::string>>& demonstrations,
                                        const GenerationOptions& opts,
                                        const std::function<void(std::size_t, const GenerationResult&)>& progress = {}) {
    if (demonstrations.size() != taxonomy.size()) throw std::invalid_argument("generate: one demonstration pool per intent required");
    GenerationResult all;
    for (std::size_t c = 0; c < taxonomy.size(); ++c) {
        PromptSpec spec{taxonomy.class_names[c], taxonomy.description(c), demonstrations[c], opts.request_size};
        try {
            GenerationResult r = generate_for_intent(client, spec, c, opts);
            all.stats += r.stats;
            all.utterances.insert(all.utterances.end(), r.utterances.begin(), r.utterances.end());
            if (progress) progress(c, r);
        } catch (const PartialResultError& e) {
            all.stats += e.stats();
            all.utterances.insert(all.utterances.end(), e.collected().begin(), e.collected().end());
            throw PartialResultError(e.what(), std::move(all.utterances), all.stats);
        }
    }
    return all;
}

}  // namespace sdif::aug
