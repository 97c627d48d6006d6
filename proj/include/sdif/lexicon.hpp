#pragma once

#include "sdif/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sdif::data {

/// The twenty intent classes of the tri-modal benchmark this library targets,
/// grouped into "express emotions or attitudes" (0) and "achieve goals" (1).
/// Descriptions and keyword cues are our own wording.
inline IntentTaxonomy default_intent_taxonomy() {
    struct Entry {
        const char* name;
        int binary;
        const char* description;
        std::array<const char*, 8> keywords;
    };
    static const Entry entries[] = {
        {"Complain", 0, "Voice discontent about a person, a situation or a thing",
         {"unacceptable", "annoyed", "ridiculous", "fed", "awful", "complaint", "unfair", "terrible"}},
        {"Praise", 0, "Express admiration or approval of someone's qualities or work",
         {"amazing", "brilliant", "wonderful", "impressive", "excellent", "proud", "fantastic", "talented"}},
        {"Apologise", 0, "Express regret for a mistake or for causing trouble",
         {"sorry", "apologize", "regret", "forgive", "mistake", "fault", "apologies", "pardon"}},
        {"Thank", 0, "Express gratitude for help, a gift or a kindness",
         {"thanks", "grateful", "appreciate", "thankful", "gratitude", "kindness", "obliged", "cheers"}},
        {"Criticize", 0, "Point out faults or shortcomings in someone's behaviour or work",
         {"sloppy", "careless", "lazy", "incompetent", "wrong", "poorly", "shameful", "flawed"}},
        {"Care", 0, "Show concern for someone's wellbeing or feelings",
         {"okay", "hurt", "worried", "safe", "rest", "feeling", "concern", "alright"}},
        {"Agree", 0, "Accept or confirm another person's statement or proposal",
         {"agree", "exactly", "absolutely", "right", "definitely", "yes", "sure", "indeed"}},
        {"Taunt", 0, "Mock or provoke someone with scornful remarks",
         {"loser", "pathetic", "coward", "baby", "chicken", "weak", "scared", "whatever"}},
        {"Flaunt", 0, "Show off possessions, achievements or abilities to impress others",
         {"mine", "rich", "expensive", "best", "won", "luxury", "brand", "trophy"}},
        {"Joke", 0, "Say something playful or humorous that is not meant seriously",
         {"kidding", "joking", "funny", "haha", "lol", "prank", "hilarious", "silly"}},
        {"Oppose", 0, "Disagree with or resist a statement, plan or action",
         {"no", "disagree", "refuse", "against", "never", "object", "nope", "nonsense"}},
        {"Comfort", 1, "Ease someone's distress or sadness with reassurance",
         {"fine", "relax", "calm", "worry", "breathe", "together", "heal", "better"}},
        {"Inform", 1, "Tell someone a fact or a piece of news",
         {"news", "update", "announced", "report", "fyi", "notice", "schedule", "information"}},
        {"Advise", 1, "Recommend a course of action to someone",
         {"should", "recommend", "suggest", "advice", "consider", "tip", "ought", "maybe"}},
        {"Arrange", 1, "Organise plans, schedules or tasks with someone",
         {"meeting", "tomorrow", "plan", "book", "organize", "appointment", "reschedule", "set"}},
        {"Introduce", 1, "Present a person or a thing to others",
         {"meet", "introduce", "named", "name", "colleague", "friend", "presenting", "new"}},
        {"Leave", 1, "Announce a departure or end an interaction",
         {"bye", "goodbye", "leaving", "go", "later", "heading", "off", "farewell"}},
        {"Prevent", 1, "Try to stop someone from doing something",
         {"stop", "halt", "wait", "careful", "hold", "quit", "dangerous", "enough"}},
        {"Greet", 1, "Say hello or welcome someone at the start of an interaction",
         {"hello", "hi", "morning", "hey", "welcome", "howdy", "evening", "greetings"}},
        {"Ask for help", 1, "Request assistance or support from someone",
         {"help", "please", "assist", "could", "need", "support", "favor", "hand"}},
    };
    IntentTaxonomy t;
    for (const auto& e : entries) {
        t.class_names.emplace_back(e.name);
        t.binary_map.push_back(e.binary);
        t.descriptions.emplace_back(e.description);
        t.keywords.emplace_back(e.keywords.begin(), e.keywords.end());
    }
    t.binary_names = {"Express emotions or attitudes", "Achieve goals"};
    return t;
}

/// Neutral words that carry no intent signal.
inline const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {
        "i",     "you",   "we",    "the",   "that",  "it",    "is",    "really", "so",    "just",
        "now",   "today", "again", "about", "with",  "for",   "and",   "all",    "here",  "there",
        "think", "guess", "well",  "oh",    "look",  "man",   "guys",  "one",    "thing", "time",
        "very",  "quite", "kind",  "of",    "a",     "to",    "be",    "was",    "they",  "actually",
        "my",    "your",  "our",   "did",   "do",    "what",  "when",  "who",    "this",  "got",
    };
    return words;
}

namespace detail {

inline std::vector<std::string> name_words(const std::string& name) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : name + " ") {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    return words;
}

}  // namespace detail

/// Keyword cues for class c; falls back to the lower-cased words of the class
/// name, minus words every class name shares (e.g. "class" in "class_3").
inline std::vector<std::string> class_keywords(const IntentTaxonomy& taxonomy, std::size_t c) {
    if (c < taxonomy.keywords.size() && !taxonomy.keywords[c].empty()) return taxonomy.keywords[c];
    const auto own = detail::name_words(taxonomy.class_names.at(c));
    std::vector<std::string> words;
    for (const auto& w : own) {
        bool shared = taxonomy.size() > 1;
        for (std::size_t o = 0; shared && o < taxonomy.size(); ++o) {
            const auto other = detail::name_words(taxonomy.class_names[o]);
            shared = std::find(other.begin(), other.end(), w) != other.end();
        }
        if (!shared) words.push_back(w);
    }
    return words.empty() ? own : words;
}

/// Random short utterance for class c: fillers around one or two keyword cues.
inline std::string render_utterance(const IntentTaxonomy& taxonomy, std::size_t c, std::mt19937_64& rng) {
    const auto& fill = filler_words();
    const auto keys = class_keywords(taxonomy, c);
    std::uniform_int_distribution<std::size_t> pick_fill(0, fill.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_key(0, keys.size() - 1);
    std::uniform_int_distribution<int> before(1, 3), after(0, 3), n_keys(1, 2), punct(0, 2);

    std::vector<std::string> words;
    for (int i = before(rng); i > 0; --i) words.push_back(fill[pick_fill(rng)]);
    for (int i = n_keys(rng); i > 0; --i) words.push_back(keys[pick_key(rng)]);
    for (int i = after(rng); i > 0; --i) words.push_back(fill[pick_fill(rng)]);

    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    static constexpr std::string_view marks = ".!?";
    text += marks[static_cast<std::size_t>(punct(rng))];
    return text;
}

}  // namespace sdif::data
