#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "error.hpp"
#include "porter.hpp"

namespace kpir {

struct token {
    std::string surface;
    std::string stem;
    std::size_t position = 0;

    bool operator==(const token&) const = default;
};

/// A raw token plus whether a phrase-breaking punctuation mark precedes it.
/// Hyphens and apostrophes split tokens but do not break phrases.
struct raw_token {
    std::string surface;
    bool break_before = false;
};

namespace detail {

inline bool is_word_byte(unsigned char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

inline bool is_space_byte(unsigned char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline char ascii_lower(char c)
{
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace detail

inline std::string to_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), detail::ascii_lower);
    return out;
}

/// Splits on whitespace and punctuation, ASCII-lowercases. Bytes >= 0x80 are
/// treated as word characters so UTF-8 sequences are kept whole.
inline std::vector<raw_token> tokenize_with_breaks(std::string_view text)
{
    std::vector<raw_token> out;
    std::string current;
    bool pending_break = false;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (detail::is_word_byte(c)) {
            current.push_back(detail::ascii_lower(ch));
            continue;
        }
        if (!current.empty()) {
            out.push_back({std::move(current), pending_break});
            current.clear();
            pending_break = false;
        }
        if (!detail::is_space_byte(c) && c != '-' && c != '\'') {
            pending_break = true;
        }
    }
    if (!current.empty()) {
        out.push_back({std::move(current), pending_break});
    }
    return out;
}

inline std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    for (auto& t : tokenize_with_breaks(text)) {
        out.push_back(std::move(t.surface));
    }
    return out;
}

class stopword_set {
  public:
    stopword_set() = default;

    template <typename Range>
    explicit stopword_set(const Range& words)
    {
        for (const auto& w : words) {
            words_.insert(to_lower(w));
        }
    }

    bool contains(std::string_view word) const { return words_.count(std::string(word)) > 0; }
    std::size_t size() const { return words_.size(); }

    std::vector<std::string> sorted() const
    {
        std::vector<std::string> out(words_.begin(), words_.end());
        std::sort(out.begin(), out.end());
        return out;
    }

  private:
    std::unordered_set<std::string> words_;
};

/// Lucene's English stop set (EnglishAnalyzer.ENGLISH_STOP_WORDS_SET), 33 words.
/// Mirrored in data/stopwords_lucene.txt.
inline const stopword_set& index_stopwords()
{
    static const stopword_set set{std::array<std::string_view, 33>{
        "a",    "an",  "and",   "are",  "as",    "at",    "be",    "but",  "by",
        "for",  "if",  "in",    "into", "is",    "it",    "no",    "not",  "of",
        "on",   "or",  "such",  "that", "the",   "their", "then",  "there", "these",
        "they", "this", "to",   "was",  "will",  "with"}};
    return set;
}

/// NLTK's English function-word list (179 words).
inline const std::vector<std::string>& nltk_english_stopwords()
{
    static const std::vector<std::string> words{
        "i",          "me",        "my",      "myself",  "we",      "our",     "ours",    "ourselves",
        "you",        "you're",    "you've",  "you'll",  "you'd",   "your",    "yours",   "yourself",
        "yourselves", "he",        "him",     "his",     "himself", "she",     "she's",   "her",
        "hers",       "herself",   "it",      "it's",    "its",     "itself",  "they",    "them",
        "their",      "theirs",    "themselves", "what", "which",   "who",     "whom",    "this",
        "that",       "that'll",   "these",   "those",   "am",      "is",      "are",     "was",
        "were",       "be",        "been",    "being",   "have",    "has",     "had",     "having",
        "do",         "does",      "did",     "doing",   "a",       "an",      "the",     "and",
        "but",        "if",        "or",      "because", "as",      "until",   "while",   "of",
        "at",         "by",        "for",     "with",    "about",   "against", "between", "into",
        "through",    "during",    "before",  "after",   "above",   "below",   "to",      "from",
        "up",         "down",      "in",      "out",     "on",      "off",     "over",    "under",
        "again",      "further",   "then",    "once",    "here",    "there",   "when",    "where",
        "why",        "how",       "all",     "any",     "both",    "each",    "few",     "more",
        "most",       "other",     "some",    "such",    "no",      "nor",     "not",     "only",
        "own",        "same",      "so",      "than",    "too",     "very",    "s",       "t",
        "can",        "will",      "just",    "don",     "don't",   "should",  "should've", "now",
        "d",          "ll",        "m",       "o",       "re",      "ve",      "y",       "ain",
        "aren",       "aren't",    "couldn",  "couldn't", "didn",   "didn't",  "doesn",   "doesn't",
        "hadn",       "hadn't",    "hasn",    "hasn't",  "haven",   "haven't", "isn",     "isn't",
        "ma",         "mightn",    "mightn't", "mustn",  "mustn't", "needn",   "needn't", "shan",
        "shan't",     "shouldn",   "shouldn't", "wasn",  "wasn't",  "weren",   "weren't", "won",
        "won't",      "wouldn",    "wouldn't"};
    return words;
}

/// Number words and academic-discourse words that head no keyphrase.
inline const std::vector<std::string>& discourse_stopwords()
{
    static const std::vector<std::string> words{
        "one",     "two",      "three",   "four",     "five",   "six",     "seven",  "eight",  "nine",
        "ten",     "first",    "second",  "third",    "also",   "however", "may",    "new",    "well",
        "paper",   "study",    "purpose", "propose",  "present", "show",   "shows",  "shown",  "describe",
        "discuss", "method",   "approach", "result",  "results", "use",    "uses",   "used",   "using",
        "based"};
    return words;
}

/// Delimiters for keyphrase candidates, where no part-of-speech filter is
/// available: NLTK's English list plus the discourse list.
/// Mirrored in data/stopwords_candidates.txt.
inline const stopword_set& candidate_stopwords()
{
    static const stopword_set set = [] {
        auto all = nltk_english_stopwords();
        const auto& extra = discourse_stopwords();
        all.insert(all.end(), extra.begin(), extra.end());
        return stopword_set{all};
    }();
    return set;
}

/// One word per line; blank lines and lines starting with '#' are skipped.
inline stopword_set load_stopwords(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open stopword file " + path);
    }
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        auto last = line.find_last_not_of(" \t\r");
        words.push_back(line.substr(first, last - first + 1));
    }
    return stopword_set{words};
}

/// tokenize -> optional stopword removal -> stem. Positions index the
/// tokenized stream and survive stopword removal, so gaps are possible.
inline std::vector<token> analyze(std::string_view text, bool drop_stopwords,
                                  const stopword_set& stopwords = index_stopwords())
{
    std::vector<token> out;
    auto words = tokenize(text);
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (drop_stopwords && stopwords.contains(words[i])) continue;
        auto s = stem(words[i]);
        out.push_back({std::move(words[i]), std::move(s), i});
    }
    return out;
}

/// Stemmed token sequence with no stopword removal; the matching key for phrases.
inline std::vector<std::string> stem_sequence(std::string_view text)
{
    std::vector<std::string> out;
    for (const auto& w : tokenize(text)) {
        out.push_back(stem(w));
    }
    return out;
}

}  // namespace kpir
