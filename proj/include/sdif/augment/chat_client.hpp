#pragma once

#include "sdif/augment/prompt.hpp"
#include "sdif/data.hpp"
#include "sdif/lexicon.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sdif::aug {

enum class Source { Live, Mock };

inline const char* to_string(Source s) { return s == Source::Live ? "live" : "mock"; }

inline Source parse_source(const std::string& s) {
    if (s == "live") return Source::Live;
    if (s == "mock") return Source::Mock;
    throw std::invalid_argument("unknown source '" + s + "'");
}

/// Request could not be completed, even after retries.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The service answered, but not with a usable completion.
class MalformedResponse : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    /// Text of the first completion choice.
    virtual std::string complete(const MessageSequence& messages) = 0;
    virtual Source source() const = 0;
    /// Whether complete() may be called from several threads at once.
    virtual bool concurrent() const { return false; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == '\n') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

/// "12. text" or "12) text" -> "text"; nullopt when the line is not numbered.
inline std::optional<std::string> numbered_item(const std::string& line) {
    const std::string t = trim(line);
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i == 0 || i >= t.size() || (t[i] != '.' && t[i] != ')')) return std::nullopt;
    return trim(t.substr(i + 1));
}

}  // namespace detail

/// What the mock observed in one prompt.
struct MockPromptRecord {
    std::string intent;
    std::size_t demonstrations = 0;
    std::size_t requested = 0;
};

/// Offline stand-in for a chat-completion service. Replies are numbered lists
/// of template utterances drawn from the taxonomy's keyword cues, seeded by
/// (seed, intent, per-intent call number) so a run is reproducible no matter
/// how intents are interleaved.
class MockChatClient : public ChatClient {
public:
    struct Options {
        // Fraction of items in each reply that repeat an earlier item.
        double duplicate_fraction = 0.0;
        // Every n-th call (1-based) returns a reply with no list; 0 disables.
        std::size_t malformed_every = 0;
    };

    MockChatClient(data::IntentTaxonomy taxonomy, std::uint64_t seed) : MockChatClient(std::move(taxonomy), seed, Options{}) {}
    MockChatClient(data::IntentTaxonomy taxonomy, std::uint64_t seed, Options opts)
        : taxonomy_(std::move(taxonomy)), seed_(seed), opts_(opts) {}

    std::string complete(const MessageSequence& messages) override {
        MockPromptRecord rec = inspect(messages);
        const int c = taxonomy_.index_of(rec.intent);
        if (c < 0) throw MalformedResponse("mock: prompt names unknown intent '" + rec.intent + "'");
        const std::size_t call = calls_[rec.intent]++;
        prompts_.push_back(rec);
        ++total_calls_;
        if (opts_.malformed_every && total_calls_ % opts_.malformed_every == 0) return "";

        std::mt19937_64 rng(seed_ ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(c) + 1)) ^ (call << 32));
        std::bernoulli_distribution dup(opts_.duplicate_fraction);
        std::vector<std::string> items;
        for (std::size_t i = 0; i < rec.requested; ++i) {
            if (!items.empty() && opts_.duplicate_fraction > 0.0 && dup(rng)) items.push_back(items.front());
            else items.push_back(data::render_utterance(taxonomy_, static_cast<std::size_t>(c), rng));
        }
        std::string reply = "Here are the utterances:\n";
        for (std::size_t i = 0; i < items.size(); ++i) reply += std::to_string(i + 1) + ". " + items[i] + "\n";
        return reply;
    }

    Source source() const override { return Source::Mock; }

    const std::vector<MockPromptRecord>& prompts() const { return prompts_; }

    /// Reads intent, demonstration count and requested count back out of a prompt.
    static MockPromptRecord inspect(const MessageSequence& messages) {
        MockPromptRecord rec;
        for (const auto& msg : messages) {
            if (msg.role != "user") continue;
            bool in_demos = false;
            for (const auto& line : detail::lines(msg.content)) {
                if (line.rfind(kIntentLabel, 0) == 0) rec.intent = detail::trim(line.substr(std::string(kIntentLabel).size()));
                if (line == kDemonstrationHeader) {
                    in_demos = true;
                    continue;
                }
                if (in_demos) {
                    if (detail::numbered_item(line)) ++rec.demonstrations;
                    else in_demos = false;
                }
                if (line.rfind(kGenerateVerb, 0) == 0) {
                    rec.requested = std::strtoul(line.c_str() + std::string(kGenerateVerb).size(), nullptr, 10);
                }
            }
        }
        if (rec.intent.empty() || rec.requested == 0) throw MalformedResponse("mock: prompt lacks intent or request size");
        return rec;
    }

private:
    data::IntentTaxonomy taxonomy_;
    std::uint64_t seed_;
    Options opts_;
    std::map<std::string, std::size_t> calls_;
    std::size_t total_calls_ = 0;
    std::vector<MockPromptRecord> prompts_;
};

struct ChatClientConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-3.5-turbo";
    double timeout_seconds = 60.0;
    std::size_t max_retries = 5;
    std::size_t max_concurrency = 4;
    double temperature = 1.0;
    double backoff_initial_seconds = 1.0;
    double backoff_max_seconds = 30.0;
    std::string api_key_env = "OPENAI_API_KEY";

    void validate() const {
        if (max_concurrency < 1) throw std::invalid_argument("chat client: max_concurrency must be >= 1");
        if (!(timeout_seconds > 0.0)) throw std::invalid_argument("chat client: timeout must be > 0");
        if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
            throw std::invalid_argument("chat client: endpoint must start with http:// or https://");
        }
    }
};

inline void to_json(nlohmann::json& j, const ChatClientConfig& c) {
    j = nlohmann::json{{"endpoint", c.endpoint},
                       {"model", c.model},
                       {"timeout_seconds", c.timeout_seconds},
                       {"max_retries", c.max_retries},
                       {"max_concurrency", c.max_concurrency},
                       {"temperature", c.temperature},
                       {"backoff_initial_seconds", c.backoff_initial_seconds},
                       {"backoff_max_seconds", c.backoff_max_seconds},
                       {"api_key_env", c.api_key_env}};
}

/// Delay before retry number `attempt` (0-based): doubling from the initial
/// delay, capped at the maximum.
inline double backoff_delay(const ChatClientConfig& cfg, std::size_t attempt) {
    return std::min(cfg.backoff_max_seconds, cfg.backoff_initial_seconds * std::pow(2.0, static_cast<double>(attempt)));
}

/// Chat-completion client over HTTP(S). Transport errors, 429 and 5xx are
/// retried with exponential backoff (a Retry-After header wins when present);
/// other statuses fail immediately.
class HttpChatClient : public ChatClient {
public:
    using Sleeper = std::function<void(double seconds)>;

    explicit HttpChatClient(ChatClientConfig cfg, Sleeper sleeper = default_sleeper())
        : cfg_(std::move(cfg)), sleeper_(std::move(sleeper)) {
        cfg_.validate();
        const auto scheme_end = cfg_.endpoint.find("://") + 3;
        const auto path_start = cfg_.endpoint.find('/', scheme_end);
        base_ = cfg_.endpoint.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (cfg_.endpoint.rfind("https://", 0) == 0) {
            throw std::invalid_argument("chat client: this build has no TLS support; use an http:// endpoint");
        }
#endif
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) api_key_ = key;
    }

    std::string complete(const MessageSequence& messages) override {
        nlohmann::json body{{"model", cfg_.model}, {"temperature", cfg_.temperature}, {"messages", nlohmann::json::array()}};
        for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
        const std::string payload = body.dump();

        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        std::string last_error;
        for (std::size_t attempt = 0;; ++attempt) {
            httplib::Client client(base_);
            const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
            client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            auto res = client.Post(path_, headers, payload, "application/json");

            std::optional<double> retry_after;
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
            } else if (res->status == 200) {
                return extract_content(res->body);
            } else if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                if (res->has_header("Retry-After")) {
                    try {
                        retry_after = std::stod(res->get_header_value("Retry-After"));
                    } catch (const std::exception&) {
                    }
                }
            } else {
                throw TransportError("chat request rejected with HTTP " + std::to_string(res->status) + ": " +
                                     res->body.substr(0, 200));
            }
            if (attempt >= cfg_.max_retries) {
                throw TransportError("chat request failed after " + std::to_string(attempt + 1) + " attempts: " + last_error);
            }
            sleeper_(retry_after.value_or(backoff_delay(cfg_, attempt)));
        }
    }

    Source source() const override { return Source::Live; }
    bool concurrent() const override { return true; }
    bool has_api_key() const { return !api_key_.empty(); }

    static Sleeper default_sleeper() {
        return [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
    }

    /// choices[0].message.content of a chat-completion response body.
    static std::string extract_content(const std::string& body) {
        try {
            const auto j = nlohmann::json::parse(body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("unexpected chat response: ") + e.what());
        }
    }

private:
    ChatClientConfig cfg_;
    Sleeper sleeper_;
    std::string base_;
    std::string path_;
    std::string api_key_;
};

}  // namespace sdif::aug
