#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "ranking.hpp"
#include "stats.hpp"
#include "text.hpp"

namespace kpir {

/// AP = (1/R) sum over relevant ranks k of precision@k; 0 when R = 0.
inline double average_precision(const ranking& r, const relevance_judgments& qrels)
{
    const auto total = qrels.relevant_count(r.query_id);
    if (total == 0) return 0.0;
    double sum = 0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < r.docs.size(); ++i) {
        if (qrels.is_relevant(r.query_id, r.docs[i].doc_id)) {
            ++seen;
            sum += static_cast<double>(seen) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(total);
}

/// Relevant documents among the first k, divided by k even for shorter rankings.
inline double precision_at_k(const ranking& r, const relevance_judgments& qrels, std::size_t k = 10)
{
    if (k < 1) throw usage_error("precision cutoff must be >= 1");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, r.docs.size()); ++i) {
        if (qrels.is_relevant(r.query_id, r.docs[i].doc_id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

struct query_metrics {
    std::string query_id;
    double ap = 0;
    double p10 = 0;

    bool operator==(const query_metrics&) const = default;
};

struct eval_report {
    std::vector<query_metrics> per_query;  // topic-set order
    double map = 0;
    double p_at_10 = 0;
    std::size_t n_queries = 0;

    std::vector<double> ap_values() const
    {
        std::vector<double> v;
        for (const auto& q : per_query) v.push_back(q.ap);
        return v;
    }

    /// Report restricted to a subset of query ids (kept in this report's order).
    eval_report subset(const std::vector<std::string>& ids) const
    {
        std::unordered_set<std::string> keep(ids.begin(), ids.end());
        eval_report out;
        for (const auto& q : per_query) {
            if (keep.count(q.query_id)) out.per_query.push_back(q);
        }
        out.n_queries = out.per_query.size();
        for (const auto& q : out.per_query) {
            out.map += q.ap;
            out.p_at_10 += q.p10;
        }
        if (out.n_queries > 0) {
            out.map /= static_cast<double>(out.n_queries);
            out.p_at_10 /= static_cast<double>(out.n_queries);
        }
        return out;
    }
};

/// Means over the whole topic set; topics without a ranking contribute 0.
/// A ranking for an unknown or repeated query id is an error.
inline eval_report evaluate_run(const std::vector<ranking>& run, const relevance_judgments& qrels,
                                const std::vector<std::string>& topic_ids)
{
    std::unordered_map<std::string, const ranking*> by_id;
    std::unordered_set<std::string> topics(topic_ids.begin(), topic_ids.end());
    for (const auto& r : run) {
        if (!topics.count(r.query_id)) throw data_error("run contains unknown query id " + r.query_id);
        if (!by_id.emplace(r.query_id, &r).second) throw data_error("run contains query " + r.query_id + " twice");
    }
    eval_report rep;
    for (const auto& qid : topic_ids) {
        query_metrics m{qid, 0, 0};
        if (auto it = by_id.find(qid); it != by_id.end()) {
            m.ap = average_precision(*it->second, qrels);
            m.p10 = precision_at_k(*it->second, qrels, 10);
        }
        rep.per_query.push_back(m);
    }
    return rep.subset(topic_ids);
}

inline eval_report evaluate_run(const std::vector<ranking>& run, const relevance_judgments& qrels,
                                const std::vector<query>& topics)
{
    std::vector<std::string> ids;
    for (const auto& q : topics) ids.push_back(q.id);
    return evaluate_run(run, qrels, ids);
}

inline std::string format_number(double v, int decimals = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

/// Per-query CSV: header "qid,ap,p10".
inline void write_per_query_csv(std::ostream& out, const eval_report& rep)
{
    out << "qid,ap,p10\n";
    for (const auto& q : rep.per_query) out << q.query_id << ',' << format_number(q.ap) << ',' << format_number(q.p10) << '\n';
}

inline std::vector<query_metrics> read_per_query_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);
    std::vector<query_metrics> out;
    std::string line;
    std::size_t lineno = 0;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("qid,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string qid, ap, p10;
        if (!std::getline(ss, qid, ',') || !std::getline(ss, ap, ',') || !std::getline(ss, p10, ',')) {
            throw line_error(path, lineno, "expected \"qid,ap,p10\"");
        }
        query_metrics m;
        m.query_id = qid;
        try {
            m.ap = std::stod(ap);
            m.p10 = std::stod(p10);
        } catch (const std::exception&) {
            throw line_error(path, lineno, "non-numeric metric");
        }
        if (!seen.insert(qid).second) throw line_error(path, lineno, "query " + qid + " listed twice");
        out.push_back(m);
    }
    return out;
}

inline std::string aggregate_json(const eval_report& rep)
{
    nlohmann::ordered_json j;
    j["map"] = rep.map;
    j["p_at_10"] = rep.p_at_10;
    j["n_queries"] = rep.n_queries;
    return j.dump(2);
}

enum class f1_denominator { k, predicted };

namespace detail {

inline std::string phrase_key(const std::string& phrase)
{
    std::string key;
    for (const auto& s : stem_sequence(phrase)) {
        if (!key.empty()) key += ' ';
        key += s;
    }
    return key;
}

}  // namespace detail

/// F1 over the top-k predictions. Phrases match when their stemmed, lowercased
/// token sequences are equal; each gold phrase can be matched once. Precision
/// divides by k by default, or by the number of predictions kept.
inline double f1_at_k(const std::vector<std::string>& predicted, const std::vector<std::string>& gold,
                      std::size_t k = 5, f1_denominator denominator = f1_denominator::k)
{
    if (k < 1) throw usage_error("k must be >= 1");
    std::set<std::string> gold_keys;
    for (const auto& g : gold) {
        auto key = detail::phrase_key(g);
        if (!key.empty()) gold_keys.insert(key);
    }
    if (gold_keys.empty()) throw data_error("F1 is undefined for an empty gold set");
    std::set<std::string> matched;
    const std::size_t kept = std::min(k, predicted.size());
    for (std::size_t i = 0; i < kept; ++i) {
        auto key = detail::phrase_key(predicted[i]);
        if (gold_keys.count(key)) matched.insert(key);
    }
    const double hits = static_cast<double>(matched.size());
    const double p_den = denominator == f1_denominator::k ? static_cast<double>(k) : static_cast<double>(kept);
    const double p = p_den > 0 ? hits / p_den : 0.0;
    const double r = hits / static_cast<double>(gold_keys.size());
    return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
}

namespace detail {

inline std::vector<std::string> document_stem_stream(const document& doc)
{
    auto hay = stem_sequence(doc.title);
    auto abs = stem_sequence(doc.abstract);
    hay.insert(hay.end(), abs.begin(), abs.end());
    return hay;
}

inline bool contains_sequence(const std::vector<std::string>& hay, const std::vector<std::string>& needle)
{
    return !needle.empty() && std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace detail

/// True when the phrase's stem sequence occurs contiguously in the stemmed
/// title + abstract stream (stopwords kept).
inline bool is_present(const std::string& phrase, const document& doc)
{
    return detail::contains_sequence(detail::document_stem_stream(doc), stem_sequence(phrase));
}

inline std::pair<std::vector<std::string>, std::vector<std::string>>
split_present_absent(const std::vector<std::string>& phrases, const document& doc)
{
    const auto hay = detail::document_stem_stream(doc);
    std::pair<std::vector<std::string>, std::vector<std::string>> out;
    for (const auto& p : phrases) {
        (detail::contains_sequence(hay, stem_sequence(p)) ? out.first : out.second).push_back(p);
    }
    return out;
}

/// Research field -> in-domain flag.
class domain_table {
  public:
    void set(const std::string& field, bool in_domain)
    {
        auto key = normalize(field);
        if (!in_.count(key)) order_.push_back(field);
        in_[key] = in_domain;
    }

    bool is_in(const std::string& field) const
    {
        auto it = in_.find(normalize(field));
        if (it == in_.end()) throw data_error("research field not in domain table: " + field);
        return it->second;
    }

    const std::vector<std::string>& fields() const { return order_; }

    /// The bundled eight-field table; mirrored in data/domain_fields.csv.
    static domain_table bundled()
    {
        domain_table t;
        t.set("Electricity, information and control", true);
        t.set("Chemistry", true);
        t.set("Architecture, civil engineering", false);
        t.set("Biology and agriculture", false);
        t.set("Science", true);
        t.set("Engineering", true);
        t.set("Medicine and dentistry", false);
        t.set("Cultural and social science", false);
        return t;
    }

    /// CSV lines "field,in|out"; the last comma separates the flag, so field
    /// names may contain commas. A header line "field,domain" is skipped.
    static domain_table load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open " + path);
        domain_table t;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
            auto comma = line.rfind(',');
            if (comma == std::string::npos) throw line_error(path, lineno, "expected \"field,in|out\"");
            auto field = detail::trim(line.substr(0, comma));
            auto flag = to_lower(detail::trim(line.substr(comma + 1)));
            if (lineno == 1 && to_lower(field) == "field") continue;
            if (flag != "in" && flag != "out") throw line_error(path, lineno, "flag must be \"in\" or \"out\"");
            t.set(field, flag == "in");
        }
        return t;
    }

  private:
    std::unordered_map<std::string, bool> in_;
    std::vector<std::string> order_;

    static std::string normalize(const std::string& field)
    {
        std::string out;
        bool space = false;
        for (char c : detail::trim(field)) {
            if (c == ' ' || c == '\t') {
                space = true;
                continue;
            }
            if (space && !out.empty()) out += ' ';
            space = false;
            out += detail::ascii_lower(c);
        }
        return out;
    }
};

/// A query is in-domain when any of its fields is marked in. Queries with no
/// fields are out-of-domain.
inline std::pair<std::vector<query>, std::vector<query>> split_queries_by_domain(const std::vector<query>& queries,
                                                                               const domain_table& table)
{
    std::pair<std::vector<query>, std::vector<query>> out;
    for (const auto& q : queries) {
        bool in = false;
        for (const auto& f : q.research_fields) in = table.is_in(f) || in;
        (in ? out.first : out.second).push_back(q);
    }
    return out;
}

}  // namespace kpir
