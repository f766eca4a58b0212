#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "index.hpp"
#include "parallel.hpp"
#include "text.hpp"

namespace kpir {

enum class retrieval_model { bm25, ql };

inline const char* model_name(retrieval_model m) { return m == retrieval_model::bm25 ? "bm25" : "ql"; }

inline retrieval_model parse_model(const std::string& s)
{
    auto l = to_lower(s);
    if (l == "bm25") return retrieval_model::bm25;
    if (l == "ql") return retrieval_model::ql;
    throw usage_error("unknown retrieval model: " + s);
}

/// Defaults are Anserini's: k1 = 0.9, b = 0.4, mu = 1000, 1000 results.
struct ranking_params {
    retrieval_model model = retrieval_model::bm25;
    double k1 = 0.9;
    double b = 0.4;
    double mu = 1000.0;
    std::size_t top_k = 1000;

    void validate() const
    {
        if (!(k1 >= 0)) throw usage_error("k1 must be >= 0");
        if (!(b >= 0 && b <= 1)) throw usage_error("b must be in [0, 1]");
        if (!(mu > 0)) throw usage_error("mu must be > 0");
        if (top_k < 1) throw usage_error("top_k must be >= 1");
    }
};

struct rm3_params {
    bool enabled = false;
    std::size_t fb_docs = 10;
    std::size_t fb_terms = 10;
    double orig_weight = 0.5;

    void validate() const
    {
        if (fb_docs < 1) throw usage_error("fb_docs must be >= 1");
        if (fb_terms < 1) throw usage_error("fb_terms must be >= 1");
        if (!(orig_weight >= 0 && orig_weight <= 1)) throw usage_error("orig_weight must be in [0, 1]");
    }
};

struct scored_doc {
    std::string doc_id;
    double score = 0;

    bool operator==(const scored_doc&) const = default;
};

/// Descending score, ties by ascending doc id.
struct ranking {
    std::string query_id;
    std::vector<scored_doc> docs;

    bool operator==(const ranking&) const = default;
};

/// Query term (stem) with a non-negative weight.
using weighted_terms = std::vector<std::pair<std::string, double>>;

/// Term-frequency weights c(t, q) of an analyzed query, sorted by stem.
inline weighted_terms count_terms(const std::vector<std::string>& stems)
{
    std::map<std::string, double> counts;
    for (const auto& s : stems) counts[s] += 1.0;
    return {counts.begin(), counts.end()};
}

namespace detail {

inline void sort_and_truncate(std::vector<scored_doc>& docs, std::size_t top_k)
{
    std::sort(docs.begin(), docs.end(), [](const scored_doc& a, const scored_doc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (docs.size() > top_k) docs.resize(top_k);
}

struct resolved_term {
    inverted_index::term_id id;
    double weight;
};

inline std::vector<resolved_term> resolve(const inverted_index& index, const weighted_terms& terms)
{
    std::map<std::string, double> merged;
    for (const auto& [s, w] : terms) {
        if (w < 0) throw usage_error("negative query term weight for " + s);
        merged[s] += w;
    }
    std::vector<resolved_term> out;
    for (const auto& [s, w] : merged) {
        auto id = index.lookup(s);
        if (id == inverted_index::no_term || w == 0) continue;
        out.push_back({id, w});
    }
    return out;
}

}  // namespace detail

/// BM25 with Lucene's idf ln(1 + (N - df + 0.5) / (df + 0.5)), generalised to
/// weighted query terms: score(d) = sum_t w_t * idf(t) * tf (k1 + 1) / (tf + k1 (1 - b + b dl / avgdl)).
/// Documents matching no query term are omitted.
inline std::vector<scored_doc> bm25_weighted(const inverted_index& index, const weighted_terms& terms, double k1,
                                             double b)
{
    auto resolved = detail::resolve(index, terms);
    if (resolved.empty()) return {};
    const double n_docs = static_cast<double>(index.doc_count());
    const double avgdl = index.avg_doc_len();
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<char> hit(index.doc_count(), 0);
    for (const auto& rt : resolved) {
        const double df = static_cast<double>(index.df(rt.id));
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const auto& p : index.postings(rt.id)) {
            const double tf = p.tf;
            const double norm = avgdl > 0 ? static_cast<double>(index.doc_len(p.doc)) / avgdl : 0.0;
            acc[p.doc] += rt.weight * idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
            hit[p.doc] = 1;
        }
    }
    std::vector<scored_doc> out;
    for (std::uint32_t d = 0; d < acc.size(); ++d) {
        if (hit[d]) out.push_back({index.doc_id(d), acc[d]});
    }
    return out;
}

/// Dirichlet-smoothed query likelihood generalised to weighted terms:
/// score(d) = sum_t w_t ln((tf + mu cf / |C|) / (dl + mu)). Terms absent from the
/// collection are dropped; only documents containing a query term are scored.
inline std::vector<scored_doc> ql_weighted(const inverted_index& index, const weighted_terms& terms, double mu)
{
    auto resolved = detail::resolve(index, terms);
    if (resolved.empty()) return {};
    const double clen = static_cast<double>(index.collection_len());
    std::vector<double> background(resolved.size());
    double weight_sum = 0;
    double base = 0;
    for (std::size_t i = 0; i < resolved.size(); ++i) {
        background[i] = mu * static_cast<double>(index.cf(resolved[i].id)) / clen;
        weight_sum += resolved[i].weight;
        base += resolved[i].weight * std::log(background[i]);
    }
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<char> hit(index.doc_count(), 0);
    for (std::size_t i = 0; i < resolved.size(); ++i) {
        for (const auto& p : index.postings(resolved[i].id)) {
            acc[p.doc] += resolved[i].weight * (std::log(p.tf + background[i]) - std::log(background[i]));
            hit[p.doc] = 1;
        }
    }
    std::vector<scored_doc> out;
    for (std::uint32_t d = 0; d < acc.size(); ++d) {
        if (!hit[d]) continue;
        const double score = base + acc[d] - weight_sum * std::log(static_cast<double>(index.doc_len(d)) + mu);
        out.push_back({index.doc_id(d), score});
    }
    return out;
}

inline std::vector<scored_doc> score_weighted(const inverted_index& index, const weighted_terms& terms,
                                              const ranking_params& params)
{
    auto docs = params.model == retrieval_model::bm25 ? bm25_weighted(index, terms, params.k1, params.b)
                                                      : ql_weighted(index, terms, params.mu);
    detail::sort_and_truncate(docs, params.top_k);
    return docs;
}

/// Unweighted BM25 over analyzed query stems (repeated stems count c(t, q) times).
inline ranking score_bm25(const inverted_index& index, const std::vector<std::string>& query_stems, double k1,
                          double b, std::size_t top_k = static_cast<std::size_t>(-1))
{
    ranking r;
    r.docs = bm25_weighted(index, count_terms(query_stems), k1, b);
    detail::sort_and_truncate(r.docs, top_k);
    return r;
}

inline ranking score_ql(const inverted_index& index, const std::vector<std::string>& query_stems, double mu,
                        std::size_t top_k = static_cast<std::size_t>(-1))
{
    ranking r;
    r.docs = ql_weighted(index, count_terms(query_stems), mu);
    detail::sort_and_truncate(r.docs, top_k);
    return r;
}

/// Relevance model estimated from the top feedback documents of a first pass.
struct relevance_model {
    weighted_terms feedback_terms;  // top fb_terms of P_RM1, renormalised to sum 1
    weighted_terms query_terms;     // interpolated final weights, sorted by stem
};

/// RM3 expansion: softmax-weighted RM1 over the top fb_docs documents, pruned to
/// fb_terms terms and renormalised, then interpolated with the original query
/// distribution: w(t) = lambda P_orig(t) + (1 - lambda) P_RM1(t).
inline relevance_model estimate_rm3(const inverted_index& index, const std::vector<std::string>& original_stems,
                                    const ranking& first_pass, const rm3_params& params)
{
    relevance_model rm;
    const std::size_t n_fb = std::min(params.fb_docs, first_pass.docs.size());
    double max_score = -HUGE_VAL;
    for (std::size_t i = 0; i < n_fb; ++i) max_score = std::max(max_score, first_pass.docs[i].score);
    std::vector<double> doc_weight(n_fb);
    double z = 0;
    for (std::size_t i = 0; i < n_fb; ++i) {
        doc_weight[i] = std::exp(first_pass.docs[i].score - max_score);
        z += doc_weight[i];
    }
    std::map<inverted_index::term_id, double> rm1;
    for (std::size_t i = 0; i < n_fb; ++i) {
        auto ord = index.ordinal(first_pass.docs[i].doc_id);
        if (!ord) throw data_error("feedback document not in index: " + first_pass.docs[i].doc_id);
        const double len = index.doc_len(*ord);
        if (len == 0) continue;
        for (auto [t, tf] : index.doc_terms(*ord)) rm1[t] += (doc_weight[i] / z) * (tf / len);
    }
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(rm1.size());
    for (auto [t, p] : rm1) ranked.emplace_back(index.term(t), p);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > params.fb_terms) ranked.resize(params.fb_terms);
    double kept = 0;
    for (const auto& [_, p] : ranked) kept += p;
    for (auto& [_, p] : ranked) p = kept > 0 ? p / kept : 0.0;
    std::sort(ranked.begin(), ranked.end());
    rm.feedback_terms = ranked;

    std::map<std::string, double> final_weights;
    if (!original_stems.empty()) {
        const double qlen = static_cast<double>(original_stems.size());
        for (const auto& s : original_stems) final_weights[s] += params.orig_weight / qlen;
    }
    for (const auto& [s, p] : ranked) final_weights[s] += (1.0 - params.orig_weight) * p;
    for (const auto& [s, w] : final_weights) {
        if (w > 0) rm.query_terms.emplace_back(s, w);
    }
    return rm;
}

inline ranking rm3_rerank(const inverted_index& index, const std::vector<std::string>& original_stems,
                          const ranking& first_pass, const ranking_params& scorer, const rm3_params& params)
{
    params.validate();
    if (first_pass.docs.empty()) return first_pass;
    auto rm = estimate_rm3(index, original_stems, first_pass, params);
    ranking out;
    out.query_id = first_pass.query_id;
    out.docs = score_weighted(index, rm.query_terms, scorer);
    return out;
}

inline std::vector<std::string> analyze_query(const std::string& text)
{
    std::vector<std::string> stems;
    for (auto& t : analyze(text, true)) stems.push_back(std::move(t.stem));
    return stems;
}

/// analyze -> first pass -> optional RM3 -> top_k.
inline ranking search(const inverted_index& index, const query& q, const ranking_params& params,
                      const rm3_params& rm3 = {})
{
    params.validate();
    auto stems = analyze_query(q.text);
    ranking first;
    first.query_id = q.id;
    auto full = params;
    if (rm3.enabled) full.top_k = static_cast<std::size_t>(-1);
    first.docs = score_weighted(index, count_terms(stems), full);
    if (!rm3.enabled) return first;
    auto out = rm3_rerank(index, stems, first, params, rm3);
    detail::sort_and_truncate(out.docs, params.top_k);
    return out;
}

/// Runs all topics; output order follows `topics`, independent of `threads`.
inline std::vector<ranking> search_all(const inverted_index& index, const std::vector<query>& topics,
                                       const ranking_params& params, const rm3_params& rm3 = {},
                                       unsigned threads = 1)
{
    std::vector<ranking> out(topics.size());
    parallel_for(topics.size(), threads, [&](std::size_t i) { out[i] = search(index, topics[i], params, rm3); });
    return out;
}

/// TREC run format: "qid Q0 docid rank score tag", rank from 1, score with 6 decimals.
inline void write_run(std::ostream& out, const std::vector<ranking>& run, const std::string& tag)
{
    char buf[64];
    for (const auto& r : run) {
        for (std::size_t i = 0; i < r.docs.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.6f", r.docs[i].score);
            out << r.query_id << " Q0 " << r.docs[i].doc_id << ' ' << (i + 1) << ' ' << buf << ' ' << tag << '\n';
        }
    }
}

inline std::string format_run(const std::vector<ranking>& run, const std::string& tag)
{
    std::ostringstream out;
    write_run(out, run, tag);
    return out.str();
}

/// Reads a run file. Each contiguous block of lines with the same qid becomes one
/// ranking ordered by the rank column; a qid that reappears later yields a second
/// ranking so that duplicates are caught downstream.
inline std::vector<ranking> read_run(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);
    std::vector<ranking> out;
    std::vector<std::pair<long, scored_doc>> block;
    std::unordered_set<std::string> block_docs;
    auto flush = [&] {
        if (out.empty() || block.empty()) return;
        std::stable_sort(block.begin(), block.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [_, d] : block) out.back().docs.push_back(std::move(d));
        block.clear();
        block_docs.clear();
    };
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<std::string> cols;
        std::string c;
        while (ls >> c) cols.push_back(c);
        if (cols.empty()) continue;
        if (cols.size() != 6) throw line_error(path, lineno, "expected 6 columns \"qid Q0 docid rank score tag\"");
        long rank = 0;
        double score = 0;
        try {
            rank = std::stol(cols[3]);
            score = std::stod(cols[4]);
        } catch (const std::exception&) {
            throw line_error(path, lineno, "bad rank or score");
        }
        if (out.empty() || out.back().query_id != cols[0]) {
            flush();
            out.push_back({cols[0], {}});
        }
        if (!block_docs.insert(cols[2]).second) {
            throw line_error(path, lineno, "document " + cols[2] + " listed twice for query " + cols[0]);
        }
        block.emplace_back(rank, scored_doc{cols[2], score});
    }
    flush();
    return out;
}

}  // namespace kpir
