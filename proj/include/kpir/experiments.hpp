#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "hash.hpp"
#include "index.hpp"
#include "mprank.hpp"
#include "parallel.hpp"
#include "ranking.hpp"
#include "stats.hpp"

namespace kpir {

enum class split_mode { none, present, absent, in_domain, out_domain };

inline const char* split_name(split_mode m)
{
    switch (m) {
    case split_mode::none: return "none";
    case split_mode::present: return "present";
    case split_mode::absent: return "absent";
    case split_mode::in_domain: return "in_domain";
    case split_mode::out_domain: return "out_domain";
    }
    return "none";
}

inline split_mode parse_split(const std::string& s)
{
    auto l = to_lower(s);
    for (auto m : {split_mode::none, split_mode::present, split_mode::absent, split_mode::in_domain,
                   split_mode::out_domain}) {
        if (l == split_name(m)) return m;
    }
    throw usage_error("unknown split \"" + s + "\" (expected none, present, absent, in_domain or out_domain)");
}

/// Predictions source value that selects mp-rank extraction over the corpus.
inline constexpr const char* internal_mprank = "internal-mprank";

struct experiment_spec {
    field_config fields = field_config::ta();  // expansion_count is the N of a single run
    std::string predictions;                   // path, internal_mprank, or empty
    ranking_params ranking;
    rm3_params rm3;
    split_mode split = split_mode::none;
    std::vector<int> n_values{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};  // used by sweep_n
    std::string output;
    bool allow_large_n = false;

    void validate() const
    {
        fields.validate();
        ranking.validate();
        rm3.validate();
        auto check_n = [&](int n) {
            if (n < 0) throw usage_error("N must be >= 0");
            if (n > 9 && !allow_large_n) {
                throw usage_error("N=" + std::to_string(n) + " is outside [0, 9]; pass --allow-large-n to permit it");
            }
        };
        check_n(fields.expansion_count);
        for (int n : n_values) check_n(n);
        if ((split == split_mode::present || split == split_mode::absent) && predictions.empty()) {
            throw usage_error(std::string("split ") + split_name(split) + " requires predictions");
        }
    }

    bool needs_predictions(int n) const
    {
        return n > 0 || split == split_mode::present || split == split_mode::absent;
    }

    std::string model_label() const { return std::string(model_name(ranking.model)) + (rm3.enabled ? "+rm3" : ""); }

    /// File-safe label, e.g. "bm25+rm3.ta.n5.present".
    std::string label(int n) const
    {
        std::string f = fields.include_author_keywords ? "tak" : "ta";
        if (!fields.include_title || !fields.include_abstract) f = to_lower(fields.name());
        std::erase(f, '+');
        auto s = model_label() + "." + f + ".n" + std::to_string(n);
        if (split != split_mode::none) s += std::string(".") + split_name(split);
        return s;
    }

    std::string label() const { return label(fields.expansion_count); }
};

/// Every parameter of a spec, in a fixed key order.
inline nlohmann::ordered_json spec_json(const experiment_spec& s)
{
    nlohmann::ordered_json j;
    j["fields"] = s.fields.include_author_keywords ? "tak" : "ta";
    j["include_title"] = s.fields.include_title;
    j["include_abstract"] = s.fields.include_abstract;
    j["include_author_keywords"] = s.fields.include_author_keywords;
    j["n"] = s.fields.expansion_count;
    j["n_values"] = s.n_values;
    j["predictions"] = s.predictions;
    j["model"] = model_name(s.ranking.model);
    j["k1"] = s.ranking.k1;
    j["b"] = s.ranking.b;
    j["mu"] = s.ranking.mu;
    j["top_k"] = s.ranking.top_k;
    j["rm3"] = s.rm3.enabled;
    j["fb_docs"] = s.rm3.fb_docs;
    j["fb_terms"] = s.rm3.fb_terms;
    j["orig_weight"] = s.rm3.orig_weight;
    j["split"] = split_name(s.split);
    j["allow_large_n"] = s.allow_large_n;
    return j;
}

inline std::string content_hash(const std::vector<document>& corpus);

struct experiment_inputs {
    std::vector<document> corpus;
    std::vector<query> topics;
    relevance_judgments qrels;
    std::optional<keyphrase_predictions> predictions;
    domain_table domains = domain_table::bundled();

    /// Content hash of the corpus, computed on first use. Do not modify the
    /// corpus afterwards.
    const std::string& corpus_key() const
    {
        if (corpus_key_.empty()) corpus_key_ = content_hash(corpus);
        return corpus_key_;
    }

  private:
    mutable std::string corpus_key_;
};

/// Loads or extracts the predictions named by the spec. Internal extraction
/// produces max(10, largest N) phrases per document.
inline std::optional<keyphrase_predictions> resolve_predictions(const experiment_spec& spec,
                                                                const std::vector<document>& corpus,
                                                                unsigned threads = 1)
{
    if (spec.predictions.empty()) return std::nullopt;
    if (spec.predictions == internal_mprank) {
        int most = std::max(10, spec.fields.expansion_count);
        for (int n : spec.n_values) most = std::max(most, n);
        return mprank::extract_all(corpus, static_cast<std::size_t>(most), {}, threads);
    }
    return load_predictions(spec.predictions);
}

/// Keeps, per document, only the present (or only the absent) predictions,
/// preserving their order. Documents missing from the corpus are dropped.
inline keyphrase_predictions filter_predictions(const keyphrase_predictions& preds,
                                                const std::vector<document>& corpus, bool keep_present,
                                                unsigned threads = 1)
{
    std::vector<std::vector<scored_phrase>> kept(corpus.size());
    std::vector<char> listed(corpus.size(), 0);
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        const auto* list = preds.find(corpus[i].id);
        if (list == nullptr) return;
        listed[i] = 1;
        const auto hay = detail::document_stem_stream(corpus[i]);
        for (const auto& p : *list) {
            if (detail::contains_sequence(hay, stem_sequence(p.phrase)) == keep_present) kept[i].push_back(p);
        }
    });
    keyphrase_predictions out;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (listed[i]) out.add(corpus[i].id, std::move(kept[i]));
    }
    return out;
}

inline std::string content_hash(const std::vector<document>& corpus)
{
    fnv1a h;
    for (const auto& d : corpus) h.field(serialize_document(d));
    return h.hex();
}

inline std::string content_hash(const keyphrase_predictions& preds)
{
    fnv1a h;
    for (const auto& id : preds.doc_ids()) h.field(serialize_predictions_record(id, *preds.find(id)));
    return h.hex();
}

/// Indexes keyed by (corpus, field config, N, predictions) content. With a
/// directory, snapshots are also written to and read from disk. Not thread-safe.
class index_cache {
  public:
    explicit index_cache(std::string directory = {}) : dir_(std::move(directory)) {}

    std::shared_ptr<const inverted_index> get(const std::vector<document>& corpus, const std::string& corpus_key,
                                              const field_config& config, const keyphrase_predictions* preds,
                                              unsigned threads = 1)
    {
        fnv1a h;
        h.field(corpus_key).field(config.name()).field(std::to_string(config.expansion_count));
        if (config.expansion_count > 0) {
            if (preds == nullptr) throw usage_error("expansion requires predictions");
            h.field(content_hash(*preds));
        }
        const auto key = h.hex();
        if (auto it = memory_.find(key); it != memory_.end()) {
            ++hits_;
            return it->second;
        }
        std::shared_ptr<const inverted_index> idx;
        const auto path = dir_.empty() ? std::string{} : (std::filesystem::path(dir_) / (key + ".kpidx")).string();
        if (!path.empty() && std::filesystem::exists(path)) {
            idx = std::make_shared<const inverted_index>(inverted_index::load_file(path));
            ++disk_hits_;
        } else {
            idx = std::make_shared<const inverted_index>(build_index(corpus, config, preds, threads));
            ++builds_;
            if (!path.empty()) {
                std::filesystem::create_directories(dir_);
                idx->save_file(path);
            }
        }
        memory_.emplace(key, idx);
        return idx;
    }

    std::size_t builds() const { return builds_; }
    std::size_t hits() const { return hits_; }
    std::size_t disk_hits() const { return disk_hits_; }

  private:
    std::string dir_;
    std::map<std::string, std::shared_ptr<const inverted_index>> memory_;
    std::size_t builds_ = 0;
    std::size_t hits_ = 0;
    std::size_t disk_hits_ = 0;
};

struct experiment_result {
    std::string label;
    std::vector<ranking> run;
    eval_report report;
};

/// A report line. Absent optionals print as "n/a".
struct report_row {
    std::string label;
    std::size_t n_queries = 0;
    std::optional<double> map;
    std::optional<double> p_at_10;
    std::optional<double> baseline_map;
    std::optional<t_test_result> test;

    bool significant() const { return test && test->significant_at_05; }
};

/// Row for `variant` with a paired t-test on per-query AP against `baseline`.
/// Both reports must cover the same queries in the same order.
inline report_row compare_reports(const std::string& label, const eval_report& variant, const eval_report& baseline)
{
    report_row row;
    row.label = label;
    row.n_queries = variant.n_queries;
    if (variant.n_queries == 0) return row;
    row.map = variant.map;
    row.p_at_10 = variant.p_at_10;
    row.baseline_map = baseline.map;
    if (variant.n_queries >= 2) {
        auto a = variant.ap_values();
        auto b = baseline.ap_values();
        row.test = paired_t_test(a, b);
    }
    return row;
}

namespace detail {

inline void require_predictions(const experiment_spec& spec, const experiment_inputs& in, int n)
{
    if (spec.needs_predictions(n) && !in.predictions) {
        throw usage_error("experiment " + spec.label(n) + " requires predictions (--predictions)");
    }
}

inline std::vector<query> domain_subset(const experiment_inputs& in, split_mode m)
{
    auto [inside, outside] = split_queries_by_domain(in.topics, in.domains);
    return m == split_mode::in_domain ? inside : outside;
}

inline std::vector<std::string> ids_of(const std::vector<query>& qs)
{
    std::vector<std::string> ids;
    for (const auto& q : qs) ids.push_back(q.id);
    return ids;
}

}  // namespace detail

/// Builds (or reuses) the index for the spec with N = `n`, searches every topic
/// and evaluates. Domain splits restrict the evaluation, not the retrieval.
inline experiment_result run_experiment(const experiment_spec& spec, int n, const experiment_inputs& in,
                                        index_cache& cache, unsigned threads = 1)
{
    spec.validate();
    detail::require_predictions(spec, in, n);
    auto config = spec.fields;
    config.expansion_count = n;

    std::optional<keyphrase_predictions> filtered;
    const keyphrase_predictions* preds = in.predictions ? &*in.predictions : nullptr;
    if (n > 0 && (spec.split == split_mode::present || spec.split == split_mode::absent)) {
        filtered = filter_predictions(*in.predictions, in.corpus, spec.split == split_mode::present, threads);
        preds = &*filtered;
    }

    auto index = cache.get(in.corpus, in.corpus_key(), config, n > 0 ? preds : nullptr, threads);
    experiment_result out;
    out.label = spec.label(n);
    out.run = search_all(*index, in.topics, spec.ranking, spec.rm3, threads);
    out.report = evaluate_run(out.run, in.qrels, in.topics);
    if (spec.split == split_mode::in_domain || spec.split == split_mode::out_domain) {
        out.report = out.report.subset(detail::ids_of(detail::domain_subset(in, spec.split)));
    }
    return out;
}

inline experiment_result run_experiment(const experiment_spec& spec, const experiment_inputs& in, index_cache& cache,
                                        unsigned threads = 1)
{
    return run_experiment(spec, spec.fields.expansion_count, in, cache, threads);
}

/// The spec's no-expansion, unsplit counterpart.
inline experiment_spec baseline_of(const experiment_spec& spec)
{
    auto b = spec;
    b.fields.expansion_count = 0;
    b.split = split_mode::none;
    return b;
}

struct experiment_outcome {
    std::vector<experiment_result> results;  // every run that was produced
    std::vector<report_row> rows;
};

/// One configuration against its N=0 baseline.
inline experiment_outcome run_with_baseline(const experiment_spec& spec, const experiment_inputs& in,
                                            index_cache& cache, unsigned threads = 1)
{
    experiment_outcome out;
    auto base = run_experiment(baseline_of(spec), in, cache, threads);
    auto variant = run_experiment(spec, in, cache, threads);
    auto base_report = base.report;
    if (spec.split == split_mode::in_domain || spec.split == split_mode::out_domain) {
        base_report = base_report.subset(detail::ids_of(detail::domain_subset(in, spec.split)));
    }
    report_row base_row;
    base_row.label = base.label;
    base_row.n_queries = base_report.n_queries;
    if (base_report.n_queries > 0) {
        base_row.map = base_report.map;
        base_row.p_at_10 = base_report.p_at_10;
    }
    out.rows.push_back(std::move(base_row));
    out.rows.push_back(compare_reports(variant.label, variant.report, base_report));
    out.results.push_back(std::move(base));
    out.results.push_back(std::move(variant));
    return out;
}

/// One row per N in spec.n_values; significance is tested against N=0.
inline experiment_outcome sweep_n(const experiment_spec& spec, const experiment_inputs& in, index_cache& cache,
                                  unsigned threads = 1)
{
    spec.validate();
    if (spec.n_values.empty()) throw usage_error("sweep needs at least one N value");
    experiment_outcome out;
    auto zero = run_experiment(spec, 0, in, cache, threads);
    for (int n : spec.n_values) {
        auto r = n == 0 ? zero : run_experiment(spec, n, in, cache, threads);
        auto row = compare_reports("N=" + std::to_string(n), r.report, zero.report);
        out.rows.push_back(std::move(row));
        out.results.push_back(std::move(r));
    }
    return out;
}

enum class split_kind { present_absent, domain };

/// Two rows: present and absent expansions, or in- and out-of-domain queries,
/// each against its own N=0 baseline.
inline experiment_outcome split_report(const experiment_spec& spec, split_kind kind, const experiment_inputs& in,
                                       index_cache& cache, unsigned threads = 1)
{
    experiment_outcome out;
    auto base_spec = baseline_of(spec);
    auto base = run_experiment(base_spec, in, cache, threads);
    if (kind == split_kind::present_absent) {
        for (auto m : {split_mode::present, split_mode::absent}) {
            auto s = spec;
            s.split = m;
            auto r = run_experiment(s, in, cache, threads);
            out.rows.push_back(compare_reports(r.label, r.report, base.report));
            out.results.push_back(std::move(r));
        }
    } else {
        auto s = spec;
        s.split = split_mode::none;
        auto r = run_experiment(s, in, cache, threads);
        for (auto m : {split_mode::in_domain, split_mode::out_domain}) {
            auto ids = detail::ids_of(detail::domain_subset(in, m));
            out.rows.push_back(compare_reports(s.label() + "." + split_name(m), r.report.subset(ids),
                                               base.report.subset(ids)));
        }
        out.results.push_back(std::move(r));
    }
    out.results.insert(out.results.begin(), std::move(base));
    return out;
}

namespace detail {

inline std::string opt_number(const std::optional<double>& v)
{
    return v ? format_number(*v) : "n/a";
}

inline std::string percent(const std::optional<double>& v)
{
    return v ? format_number(*v * 100.0, 2) : "n/a";
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const std::vector<report_row>& rows)
{
    out << "label,n_queries,map,p10,baseline_map,t,p_value,significant\n";
    for (const auto& r : rows) {
        out << r.label << ',' << r.n_queries << ',' << detail::opt_number(r.map) << ','
            << detail::opt_number(r.p_at_10) << ',' << detail::opt_number(r.baseline_map) << ',';
        if (r.test) {
            out << format_number(r.test->t_statistic) << ',' << format_number(r.test->p_value) << ','
                << (r.significant() ? "yes" : "no");
        } else {
            out << "n/a,n/a,n/a";
        }
        out << '\n';
    }
}

/// Aligned Markdown table; MAP and P@10 as percentages, "†" marks p < 0.05
/// against the baseline.
inline void write_report_markdown(std::ostream& out, const std::vector<report_row>& rows)
{
    std::vector<std::vector<std::string>> cells{{"Configuration", "Queries", "MAP", "P@10", "Baseline MAP", "p"}};
    for (const auto& r : rows) {
        auto map = detail::percent(r.map);
        if (r.significant()) map += "†";
        cells.push_back({r.label, std::to_string(r.n_queries), map, detail::percent(r.p_at_10),
                         detail::percent(r.baseline_map), r.test ? format_number(r.test->p_value, 4) : "n/a"});
    }
    // display width: "†" is three bytes but one column
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char c : s) w += (c & 0xC0) != 0x80;
        return w;
    };
    std::vector<std::size_t> widths(cells[0].size(), 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
    }
    auto line = [&](const std::vector<std::string>& row) {
        out << '|';
        for (std::size_t c = 0; c < row.size(); ++c) {
            const auto pad = std::string(widths[c] - width(row[c]), ' ');
            out << ' ' << (c == 0 ? row[c] + pad : pad + row[c]) << " |";
        }
        out << '\n';
    };
    line(cells[0]);
    out << '|';
    for (std::size_t c = 0; c < widths.size(); ++c) {
        out << ' ' << (c == 0 ? ":" : "") << std::string(widths[c] - 1, '-') << (c == 0 ? "" : ":") << " |";
    }
    out << '\n';
    for (std::size_t i = 1; i < cells.size(); ++i) line(cells[i]);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out << content;
    if (!out) throw data_error("failed writing " + path.string());
}

/// Writes, under `dir`: <label>.run, <label>.per_query.csv and
/// <label>.aggregate.json per result, then report.csv, report.md and
/// manifest.json.
inline void write_outcome(const std::string& dir, const experiment_outcome& outcome,
                          const nlohmann::ordered_json& manifest)
{
    if (dir.empty()) throw usage_error("an output directory is required (--out)");
    std::filesystem::create_directories(dir);
    const std::filesystem::path root(dir);
    std::map<std::string, bool> written;
    for (const auto& r : outcome.results) {
        if (written[r.label]) continue;
        written[r.label] = true;
        write_text_file(root / (r.label + ".run"), format_run(r.run, r.label));
        std::ostringstream csv;
        write_per_query_csv(csv, r.report);
        write_text_file(root / (r.label + ".per_query.csv"), csv.str());
        write_text_file(root / (r.label + ".aggregate.json"), aggregate_json(r.report) + "\n");
    }
    std::ostringstream csv, md;
    write_report_csv(csv, outcome.rows);
    write_report_markdown(md, outcome.rows);
    write_text_file(root / "report.csv", csv.str());
    write_text_file(root / "report.md", md.str());
    write_text_file(root / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace kpir
