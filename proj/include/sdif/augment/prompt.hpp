#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif::aug {

inline constexpr std::size_t kDefaultDemonstrations = 20;
inline constexpr std::size_t kDefaultRequestSize = 50;

struct PromptSpec {
    std::string target_intent;
    std::string description;
    std::vector<std::string> demonstrations;
    std::size_t n_requested = kDefaultRequestSize;

    void validate() const {
        if (target_intent.empty()) throw std::invalid_argument("prompt: empty target intent");
        if (demonstrations.empty()) throw std::invalid_argument("prompt: at least one demonstration is required");
        if (n_requested < 1) throw std::invalid_argument("prompt: n_requested must be >= 1");
    }
};

struct ChatMessage {
    std::string role;  // "system", "user" or "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

using MessageSequence = std::vector<ChatMessage>;

// Line prefixes the prompt uses; the mock client reads them back.
inline constexpr const char* kIntentLabel = "Target intent: ";
inline constexpr const char* kDescriptionLabel = "Description: ";
inline constexpr const char* kDemonstrationHeader = "Example utterances:";
inline constexpr const char* kGenerateVerb = "Generate ";

/// Multi-turn generation prompt: a system turn and a short priming exchange
/// set up the task, one user turn carries the intent, its description and
/// the numbered demonstrations, and the final turn asks for n utterances.
inline MessageSequence build_prompt(const PromptSpec& spec) {
    spec.validate();
    MessageSequence m;
    m.push_back({"system",
                 "You write short utterances that people say in everyday conversations, such as lines from TV "
                 "series. Each utterance is one or two sentences of natural spoken English."});
    m.push_back({"user",
                 "I am building training data for an intent classifier. I will give you an intent, a short "
                 "description of it and some example utterances. Then I will ask for new utterances with the "
                 "same intent. Answer only with a numbered list."});
    m.push_back({"assistant", "Sure. Please send the intent, its description and the examples."});

    std::string info = kIntentLabel + spec.target_intent + "\n";
    info += kDescriptionLabel + spec.description + "\n";
    info += std::string(kDemonstrationHeader) + "\n";
    for (std::size_t i = 0; i < spec.demonstrations.size(); ++i)
        info += std::to_string(i + 1) + ". " + spec.demonstrations[i] + "\n";
    m.push_back({"user", info});
    m.push_back({"assistant", "Got it. I will write new utterances with this intent that do not repeat the examples."});
    m.push_back({"user", kGenerateVerb + std::to_string(spec.n_requested) + " new utterances with the intent \"" +
                             spec.target_intent + "\". Write them as a numbered list from 1 to " +
                             std::to_string(spec.n_requested) + ", one utterance per line."});
    return m;
}

/// Plain-text rendering of a message sequence, one "role: content" block per turn.
inline std::string transcript(const MessageSequence& messages) {
    std::string out;
    for (const auto& msg : messages) out += msg.role + ": " + msg.content + "\n";
    return out;
}

}  // namespace sdif::aug
