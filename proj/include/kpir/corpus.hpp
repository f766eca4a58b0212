#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "text.hpp"

namespace kpir {

struct document {
    std::string id;
    std::string title;
    std::string abstract;
    std::vector<std::string> author_keywords;
    std::vector<std::string> expansion_keyphrases;

    bool operator==(const document&) const = default;
};

struct query {
    std::string id;
    std::string text;
    std::vector<std::string> research_fields;

    bool operator==(const query&) const = default;
};

/// query id -> (doc id -> 0/1). Pairs not present are non-relevant.
class relevance_judgments {
  public:
    void set(const std::string& qid, const std::string& docid, int grade) { judged_[qid][docid] = grade; }

    bool is_relevant(const std::string& qid, const std::string& docid) const
    {
        auto q = judged_.find(qid);
        if (q == judged_.end()) return false;
        auto d = q->second.find(docid);
        return d != q->second.end() && d->second == 1;
    }

    std::size_t relevant_count(const std::string& qid) const
    {
        auto q = judged_.find(qid);
        if (q == judged_.end()) return 0;
        return static_cast<std::size_t>(std::count_if(q->second.begin(), q->second.end(),
                                                      [](const auto& kv) { return kv.second == 1; }));
    }

    /// Query ids with at least one judgment, sorted.
    std::vector<std::string> query_ids() const
    {
        std::vector<std::string> out;
        for (const auto& [qid, _] : judged_) out.push_back(qid);
        return out;
    }

    const std::map<std::string, std::map<std::string, int>>& entries() const { return judged_; }

  private:
    std::map<std::string, std::map<std::string, int>> judged_;
};

struct scored_phrase {
    std::string phrase;
    std::optional<double> score;

    bool operator==(const scored_phrase&) const = default;
};

/// doc id -> rank-ordered phrases, plus the file order of doc ids.
class keyphrase_predictions {
  public:
    void add(const std::string& docid, std::vector<scored_phrase> phrases)
    {
        if (!by_doc_.emplace(docid, std::move(phrases)).second) {
            throw data_error("duplicate document id in predictions: " + docid);
        }
        order_.push_back(docid);
    }

    const std::vector<scored_phrase>* find(const std::string& docid) const
    {
        auto it = by_doc_.find(docid);
        return it == by_doc_.end() ? nullptr : &it->second;
    }

    const std::vector<std::string>& doc_ids() const { return order_; }
    std::size_t size() const { return order_.size(); }

  private:
    std::unordered_map<std::string, std::vector<scored_phrase>> by_doc_;
    std::vector<std::string> order_;
};

struct field_config {
    bool include_title = true;
    bool include_abstract = true;
    bool include_author_keywords = false;
    int expansion_count = 0;

    static field_config ta(int n = 0) { return {true, true, false, n}; }
    static field_config tak(int n = 0) { return {true, true, true, n}; }

    /// N outside [0, 9] is allowed but outside the studied range.
    bool expansion_out_of_range() const { return expansion_count > 9; }

    void validate() const
    {
        if (expansion_count < 0) throw usage_error("expansion count must be >= 0");
        if (!include_title && !include_abstract && !include_author_keywords) {
            throw usage_error("field config indexes no field");
        }
    }

    std::string name() const
    {
        std::string s;
        if (include_title) s += "T";
        if (include_abstract) s += s.empty() ? "A" : "+A";
        if (include_author_keywords) s += s.empty() ? "K" : "+K";
        return s;
    }

    bool operator==(const field_config&) const = default;
};

namespace detail {

inline std::string required_string(const nlohmann::json& rec, const char* key, const std::string& source,
                                   std::size_t line)
{
    auto it = rec.find(key);
    if (it == rec.end()) throw line_error(source, line, std::string("missing field \"") + key + "\"");
    if (!it->is_string()) throw line_error(source, line, std::string("field \"") + key + "\" is not a string");
    return it->get<std::string>();
}

inline std::vector<std::string> string_list(const nlohmann::json& rec, const char* key, const std::string& source,
                                            std::size_t line)
{
    std::vector<std::string> out;
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) return out;
    if (!it->is_array()) throw line_error(source, line, std::string("field \"") + key + "\" is not an array");
    for (const auto& v : *it) {
        if (!v.is_string()) throw line_error(source, line, std::string("non-string entry in \"") + key + "\"");
        auto s = v.get<std::string>();
        if (s.find_first_not_of(" \t\r\n") == std::string::npos) {
            throw line_error(source, line, std::string("empty phrase in \"") + key + "\"");
        }
        out.push_back(std::move(s));
    }
    return out;
}

template <typename F>
void for_each_jsonl(const std::string& path, F&& on_record)
{
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw line_error(path, lineno, std::string("malformed JSON: ") + e.what());
        }
        if (!rec.is_object()) throw line_error(path, lineno, "record is not a JSON object");
        on_record(rec, lineno);
    }
}

inline std::string trim(const std::string& s)
{
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_fields(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ';')) {
        part = trim(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

}  // namespace detail

/// Corpus JSONL: {"id", "title", "abstract", "keywords"?}, one document per line.
inline std::vector<document> load_corpus(const std::string& path)
{
    std::vector<document> docs;
    std::unordered_set<std::string> seen;
    detail::for_each_jsonl(path, [&](const nlohmann::json& rec, std::size_t line) {
        document d;
        d.id = detail::required_string(rec, "id", path, line);
        if (d.id.empty()) throw line_error(path, line, "empty document id");
        d.title = detail::required_string(rec, "title", path, line);
        d.abstract = detail::required_string(rec, "abstract", path, line);
        d.author_keywords = detail::string_list(rec, "keywords", path, line);
        if (!seen.insert(d.id).second) throw line_error(path, line, "duplicate document id " + d.id);
        docs.push_back(std::move(d));
    });
    return docs;
}

/// Canonical JSONL line for a document; keywords are omitted when empty.
inline std::string serialize_document(const document& d)
{
    nlohmann::ordered_json rec;
    rec["id"] = d.id;
    rec["title"] = d.title;
    rec["abstract"] = d.abstract;
    if (!d.author_keywords.empty()) rec["keywords"] = d.author_keywords;
    return rec.dump();
}

inline void write_corpus(std::ostream& out, const std::vector<document>& docs)
{
    for (const auto& d : docs) out << serialize_document(d) << '\n';
}

enum class topic_format { trec, jsonl };

namespace detail {

// Tag names are matched case-insensitively. NTCIR-style closing tags are tolerated.
inline std::vector<query> parse_trec_topics(const std::string& text, const std::string& source)
{
    std::vector<query> out;
    std::string lower = to_lower(text);
    std::size_t pos = 0;
    auto next_block = [&](std::size_t from, std::size_t& begin, std::size_t& end) {
        auto a = lower.find("<top>", from);
        auto b = lower.find("<topic>", from);
        std::size_t open = std::min(a, b);
        if (open == std::string::npos) return false;
        std::size_t open_len = (open == a) ? 5 : 7;
        auto close = lower.find(open == a ? "</top>" : "</topic>", open);
        if (close == std::string::npos) throw data_error(source + ": unterminated topic block");
        begin = open + open_len;
        end = close;
        return true;
    };
    // Value of a tag runs until the next '<'.
    auto tag_value = [&](std::size_t begin, std::size_t end, std::initializer_list<const char*> tags)
        -> std::optional<std::string> {
        for (const char* tag : tags) {
            std::string open = std::string("<") + tag + ">";
            auto at = lower.find(open, begin);
            if (at == std::string::npos || at >= end) continue;
            auto value_begin = at + open.size();
            auto value_end = lower.find('<', value_begin);
            if (value_end == std::string::npos || value_end > end) value_end = end;
            return trim(text.substr(value_begin, value_end - value_begin));
        }
        return std::nullopt;
    };
    auto strip_label = [](std::string v, const char* label) {
        std::string l = to_lower(v);
        std::string lab = label;
        if (l.rfind(lab, 0) == 0) v = trim(v.substr(lab.size()));
        return v;
    };
    std::size_t begin = 0;
    std::size_t end = 0;
    while (next_block(pos, begin, end)) {
        query q;
        auto num = tag_value(begin, end, {"num", "topic-no"});
        if (!num || num->empty()) throw data_error(source + ": topic without number");
        q.id = strip_label(*num, "number:");
        auto desc = tag_value(begin, end, {"desc", "description"});
        if (!desc) throw data_error(source + ": topic " + q.id + " has no description");
        q.text = strip_label(*desc, "description:");
        if (q.text.empty()) throw data_error(source + ": topic " + q.id + " has an empty description");
        if (auto f = tag_value(begin, end, {"fields", "field"})) q.research_fields = split_fields(*f);
        out.push_back(std::move(q));
        pos = end;
    }
    return out;
}

}  // namespace detail

/// TREC-style topics (<top> <num> <desc> [<fields> a;b]) or JSONL {"id","text","fields"?}.
inline std::vector<query> load_topics(const std::string& path, topic_format format)
{
    std::vector<query> out;
    if (format == topic_format::jsonl) {
        detail::for_each_jsonl(path, [&](const nlohmann::json& rec, std::size_t line) {
            query q;
            q.id = detail::required_string(rec, "id", path, line);
            q.text = detail::required_string(rec, "text", path, line);
            if (q.id.empty()) throw line_error(path, line, "empty topic id");
            if (detail::trim(q.text).empty()) throw line_error(path, line, "topic without description text");
            q.research_fields = detail::string_list(rec, "fields", path, line);
            out.push_back(std::move(q));
        });
    } else {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        out = detail::parse_trec_topics(ss.str(), path);
    }
    std::unordered_set<std::string> seen;
    for (const auto& q : out) {
        if (!seen.insert(q.id).second) throw data_error(path + ": duplicate topic id " + q.id);
    }
    return out;
}

inline topic_format topic_format_for(const std::string& path)
{
    auto dot = path.rfind('.');
    if (dot != std::string::npos && to_lower(path.substr(dot)) == ".jsonl") return topic_format::jsonl;
    return topic_format::trec;
}

inline std::vector<query> load_topics(const std::string& path) { return load_topics(path, topic_format_for(path)); }

/// TREC qrels "qid iter docid grade". Grades >= threshold become relevant. With no
/// threshold the highest grade in the file is used, i.e. only fully relevant documents.
inline relevance_judgments load_qrels(const std::string& path, std::optional<int> binary_threshold = std::nullopt)
{
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);
    struct raw {
        std::string qid, docid;
        int grade;
    };
    std::vector<raw> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<std::string> cols;
        std::string c;
        while (ls >> c) cols.push_back(c);
        if (cols.empty()) continue;
        if (cols.size() != 4) throw line_error(path, lineno, "expected 4 columns \"qid iter docid grade\"");
        int grade = 0;
        try {
            std::size_t used = 0;
            grade = std::stoi(cols[3], &used);
            if (used != cols[3].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw line_error(path, lineno, "grade is not an integer: " + cols[3]);
        }
        rows.push_back({cols[0], cols[2], grade});
    }
    int threshold = 1;
    if (binary_threshold) {
        threshold = *binary_threshold;
    } else {
        for (const auto& r : rows) threshold = std::max(threshold, r.grade);
    }
    relevance_judgments out;
    for (const auto& r : rows) out.set(r.qid, r.docid, r.grade >= threshold ? 1 : 0);
    return out;
}

/// Predictions JSONL: {"id", "keyphrases": [...], "scores"?: [...]}.
inline keyphrase_predictions load_predictions(const std::string& path)
{
    keyphrase_predictions out;
    std::unordered_set<std::string> seen;
    detail::for_each_jsonl(path, [&](const nlohmann::json& rec, std::size_t line) {
        auto id = detail::required_string(rec, "id", path, line);
        if (!seen.insert(id).second) throw line_error(path, line, "duplicate document id " + id);
        if (!rec.contains("keyphrases")) throw line_error(path, line, "missing field \"keyphrases\"");
        auto phrases = detail::string_list(rec, "keyphrases", path, line);
        std::vector<double> scores;
        if (auto it = rec.find("scores"); it != rec.end() && !it->is_null()) {
            if (!it->is_array()) throw line_error(path, line, "field \"scores\" is not an array");
            for (const auto& v : *it) {
                if (!v.is_number()) throw line_error(path, line, "non-numeric score");
                scores.push_back(v.get<double>());
            }
            if (scores.size() != phrases.size()) {
                throw line_error(path, line, "\"scores\" and \"keyphrases\" differ in length");
            }
        }
        std::unordered_set<std::string> folded;
        std::vector<scored_phrase> list;
        for (std::size_t i = 0; i < phrases.size(); ++i) {
            if (!folded.insert(to_lower(phrases[i])).second) {
                throw line_error(path, line, "duplicate keyphrase \"" + phrases[i] + "\" in record " + id);
            }
            list.push_back({phrases[i], scores.empty() ? std::nullopt : std::optional<double>(scores[i])});
        }
        out.add(id, std::move(list));
    });
    return out;
}

inline std::string serialize_predictions_record(const std::string& docid, const std::vector<scored_phrase>& phrases)
{
    nlohmann::ordered_json rec;
    rec["id"] = docid;
    rec["keyphrases"] = nlohmann::ordered_json::array();
    bool has_scores = !phrases.empty() && std::all_of(phrases.begin(), phrases.end(),
                                                      [](const auto& p) { return p.score.has_value(); });
    for (const auto& p : phrases) rec["keyphrases"].push_back(p.phrase);
    if (has_scores) {
        rec["scores"] = nlohmann::ordered_json::array();
        for (const auto& p : phrases) rec["scores"].push_back(*p.score);
    }
    return rec.dump();
}

inline void write_predictions(std::ostream& out, const keyphrase_predictions& preds)
{
    for (const auto& id : preds.doc_ids()) out << serialize_predictions_record(id, *preds.find(id)) << '\n';
}

struct expansion_stats {
    std::size_t missing = 0;
};

/// Copy of doc whose expansion keyphrases are the first min(n, available)
/// predicted phrases. A document without predictions gets no expansion and is
/// counted in stats. With n == 0 the document is returned unchanged.
inline document expand_document(const document& doc, const keyphrase_predictions& preds, int n,
                                expansion_stats* stats = nullptr)
{
    if (n < 0) throw usage_error("expansion count must be >= 0");
    document out = doc;
    if (n == 0) return out;
    out.expansion_keyphrases.clear();
    const auto* list = preds.find(doc.id);
    if (list == nullptr) {
        if (stats != nullptr) ++stats->missing;
        return out;
    }
    auto take = std::min<std::size_t>(static_cast<std::size_t>(n), list->size());
    for (std::size_t i = 0; i < take; ++i) out.expansion_keyphrases.push_back((*list)[i].phrase);
    return out;
}

}  // namespace kpir
