#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "text.hpp"

// Unsupervised keyphrase extraction over a multipartite candidate graph:
// candidates -> topic clusters -> graph -> first-occurrence promotion -> PageRank.

namespace kpir::mprank {

struct params {
    double alpha = 1.1;
    double damping = 0.85;
    double tolerance = 1e-6;
    std::size_t max_len = 5;
    double tau = 0.25;
    int max_iterations = 1000;
    bool suffix_breaks = true;
    // position that scales the promotion bonus; see adjust_weights
    enum class promotion_position { promoted, source } promotion = promotion_position::promoted;
};

/// -ed / -ing / -ly forms of length > 5 stand in for the verbs, participles
/// and adverbs a part-of-speech filter would drop from noun-phrase candidates.
inline bool looks_non_nominal(const std::string& w)
{
    auto ends = [&](std::string_view suf) { return w.size() > 5 && w.ends_with(suf); };
    return ends("ed") || ends("ing") || ends("ly");
}

struct candidate {
    std::vector<std::string> surface;
    std::vector<std::string> stems;
    std::size_t first_position = 0;
    std::vector<std::size_t> occurrences;

    std::string text() const
    {
        std::string s;
        for (const auto& w : surface) {
            if (!s.empty()) s += ' ';
            s += w;
        }
        return s;
    }

    std::string key() const
    {
        std::string s;
        for (const auto& w : stems) {
            if (!s.empty()) s += ' ';
            s += w;
        }
        return s;
    }
};

/// Maximal runs of non-stopword tokens over title + abstract, broken by
/// punctuation and by the field boundary, each cut to max_len tokens from its
/// start. Identical stem sequences merge, keeping every occurrence.
inline std::vector<candidate> extract_candidates(const document& doc, const params& p = {},
                                                 const stopword_set& stopwords = candidate_stopwords())
{
    auto stream = tokenize_with_breaks(doc.title);
    auto abs = tokenize_with_breaks(doc.abstract);
    if (!abs.empty()) abs.front().break_before = true;
    stream.insert(stream.end(), abs.begin(), abs.end());

    std::vector<candidate> out;
    std::map<std::string, std::size_t> by_key;
    auto emit = [&](std::size_t begin, std::size_t end) {
        if (begin >= end) return;
        end = std::min(end, begin + p.max_len);
        candidate c;
        for (std::size_t i = begin; i < end; ++i) {
            c.surface.push_back(stream[i].surface);
            c.stems.push_back(stem(stream[i].surface));
        }
        auto key = c.key();
        auto it = by_key.find(key);
        if (it != by_key.end()) {
            out[it->second].occurrences.push_back(begin);
            return;
        }
        c.first_position = begin;
        c.occurrences.push_back(begin);
        by_key.emplace(key, out.size());
        out.push_back(std::move(c));
    };
    std::size_t run_start = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (stream[i].break_before) {
            emit(run_start, i);
            run_start = i;
        }
        if (stopwords.contains(stream[i].surface) || (p.suffix_breaks && looks_non_nominal(stream[i].surface))) {
            emit(run_start, i);
            run_start = i + 1;
        }
    }
    emit(run_start, stream.size());
    return out;
}

/// Jaccard similarity of the two candidates' stem sets.
inline double stem_jaccard(const candidate& a, const candidate& b)
{
    std::set<std::string> sa(a.stems.begin(), a.stems.end());
    std::set<std::string> sb(b.stems.begin(), b.stems.end());
    std::size_t common = 0;
    for (const auto& s : sa) common += sb.count(s);
    const std::size_t uni = sa.size() + sb.size() - common;
    return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

/// Average-linkage agglomerative clustering on stem-set Jaccard similarity,
/// merging while the best pair exceeds tau. Returns a topic id per candidate;
/// ids follow the lexicographic order of each topic's smallest stem sequence,
/// so the result does not depend on candidate order.
inline std::vector<std::size_t> cluster_topics(const std::vector<candidate>& cands, double tau)
{
    const std::size_t n = cands.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cands[a].key() < cands[b].key(); });

    // clusters indexed in canonical order; a cluster's smallest key is its first member
    std::vector<std::vector<std::size_t>> members(n);
    for (std::size_t i = 0; i < n; ++i) members[i] = {order[i]};
    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) sim[i][j] = sim[j][i] = stem_jaccard(cands[order[i]], cands[order[j]]);
    }
    std::vector<char> alive(n, 1);
    while (true) {
        double best = -1;
        std::size_t bi = n;
        std::size_t bj = n;
        // strict '>' keeps the first pair in canonical order on ties
        for (std::size_t i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (alive[j] && sim[i][j] > best) {
                    best = sim[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        if (bi == n || !(best > tau)) break;
        const double wi = static_cast<double>(members[bi].size());
        const double wj = static_cast<double>(members[bj].size());
        for (std::size_t k = 0; k < n; ++k) {
            if (!alive[k] || k == bi || k == bj) continue;
            sim[bi][k] = sim[k][bi] = (wi * sim[bi][k] + wj * sim[bj][k]) / (wi + wj);
        }
        members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
        members[bj].clear();
        alive[bj] = 0;
    }
    std::vector<std::size_t> topic(n, 0);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        for (auto m : members[i]) topic[m] = next;
        ++next;
    }
    return topic;
}

/// Directed weighted graph over candidates; weights[i][j] is the weight of i -> j.
struct topic_graph {
    std::vector<std::size_t> topic_of;
    std::vector<std::vector<double>> weights;

    std::size_t size() const { return topic_of.size(); }
};

/// w(i, j) = sum over occurrence pairs of 1 / |p_i - p_j| for candidates in
/// different topics; same-topic pairs get no edge.
inline topic_graph build_graph(const std::vector<candidate>& cands, const std::vector<std::size_t>& topics)
{
    const std::size_t n = cands.size();
    topic_graph g;
    g.topic_of = topics;
    g.weights.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (topics[i] == topics[j]) continue;
            double w = 0;
            for (auto pi : cands[i].occurrences) {
                for (auto pj : cands[j].occurrences) {
                    auto gap = pi > pj ? pi - pj : pj - pi;
                    if (gap > 0) w += 1.0 / static_cast<double>(gap);
                }
            }
            g.weights[i][j] = g.weights[j][i] = w;
        }
    }
    return g;
}

/// For each topic with >= 2 candidates, edges from every outside candidate c_i
/// into the topic's earliest candidate c_f gain
/// alpha * exp(1 / (1 + p)) * sum of w(i, k) over the topic's other candidates,
/// where p is first_position(c_f), or first_position(c_i) with the `source` variant.
inline void adjust_weights(topic_graph& g, const std::vector<candidate>& cands, double alpha,
                           params::promotion_position position = params::promotion_position::promoted)
{
    const std::size_t n = g.size();
    std::map<std::size_t, std::vector<std::size_t>> topics;
    for (std::size_t i = 0; i < n; ++i) topics[g.topic_of[i]].push_back(i);
    for (const auto& [topic, members] : topics) {
        if (members.size() < 2) continue;
        std::size_t first = members.front();
        for (auto m : members) {
            if (cands[m].first_position < cands[first].first_position) first = m;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (g.topic_of[i] == topic) continue;
            double sum = 0;
            for (auto k : members) {
                if (k != first) sum += g.weights[i][k];
            }
            const auto p = position == params::promotion_position::promoted ? cands[first].first_position
                                                                             : cands[i].first_position;
            g.weights[i][first] += alpha * std::exp(1.0 / (1.0 + static_cast<double>(p))) * sum;
        }
    }
}

/// Weighted PageRank on incoming edges with uniform teleport; dangling nodes
/// spread their mass uniformly. Iterates until max |delta| < tolerance.
inline std::vector<double> rank_candidates(const topic_graph& g, double damping, double tolerance,
                                           int max_iterations = 1000)
{
    const std::size_t n = g.size();
    if (n == 0) throw usage_error("cannot rank an empty graph");
    std::vector<double> out_weight(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) out_weight[j] += g.weights[j][i];
    }
    const double uniform = 1.0 / static_cast<double>(n);
    std::vector<double> s(n, uniform);
    std::vector<double> next(n);
    double residual = 0;
    for (int iter = 0; iter < max_iterations; ++iter) {
        double dangling = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (out_weight[j] == 0) dangling += s[j];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double in = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (out_weight[j] > 0 && g.weights[j][i] > 0) in += g.weights[j][i] / out_weight[j] * s[j];
            }
            next[i] = (1.0 - damping) * uniform + damping * (in + dangling * uniform);
        }
        residual = 0;
        for (std::size_t i = 0; i < n; ++i) residual = std::max(residual, std::fabs(next[i] - s[i]));
        s.swap(next);
        if (residual < tolerance) return s;
    }
    throw data_error("PageRank did not converge after " + std::to_string(max_iterations) +
                     " iterations (residual " + std::to_string(residual) + ")");
}

/// Top-n phrases, at most one per topic (the topic's best-scored candidate).
/// Ties break by first position, then lexicographically.
inline std::vector<scored_phrase> extract_keyphrases(const document& doc, std::size_t n, const params& p = {})
{
    if (n < 1) throw usage_error("number of keyphrases must be >= 1");
    auto cands = extract_candidates(doc, p);
    if (cands.empty()) return {};
    auto topics = cluster_topics(cands, p.tau);
    auto graph = build_graph(cands, topics);
    adjust_weights(graph, cands, p.alpha, p.promotion);
    auto scores = rank_candidates(graph, p.damping, p.tolerance, p.max_iterations);

    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (cands[a].first_position != cands[b].first_position)
            return cands[a].first_position < cands[b].first_position;
        return cands[a].text() < cands[b].text();
    };
    std::map<std::size_t, std::size_t> best_of_topic;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        auto [it, inserted] = best_of_topic.emplace(topics[i], i);
        if (!inserted && better(i, it->second)) it->second = i;
    }
    std::vector<std::size_t> picked;
    for (const auto& [_, i] : best_of_topic) picked.push_back(i);
    std::sort(picked.begin(), picked.end(), better);
    if (picked.size() > n) picked.resize(n);
    std::vector<scored_phrase> out;
    for (auto i : picked) out.push_back({cands[i].text(), scores[i]});
    return out;
}

/// Extracts for every document; records keep corpus order for any thread count.
inline keyphrase_predictions extract_all(const std::vector<document>& docs, std::size_t n, const params& p = {},
                                         unsigned threads = 1)
{
    std::vector<std::vector<scored_phrase>> lists(docs.size());
    parallel_for(docs.size(), threads, [&](std::size_t i) { lists[i] = extract_keyphrases(docs[i], n, p); });
    keyphrase_predictions out;
    for (std::size_t i = 0; i < docs.size(); ++i) out.add(docs[i].id, std::move(lists[i]));
    return out;
}

}  // namespace kpir::mprank
