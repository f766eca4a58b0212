#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "text.hpp"

namespace kpir {

struct posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;

    bool operator==(const posting&) const = default;
};

struct term_statistics {
    std::uint64_t df = 0;
    std::uint64_t cf = 0;

    bool operator==(const term_statistics&) const = default;
};

/// Immutable bag-of-words index: postings by stem, per-document lengths and a
/// forward view (term ids per document) used by relevance feedback.
class inverted_index {
  public:
    using term_id = std::uint32_t;
    static constexpr term_id no_term = static_cast<term_id>(-1);

    std::size_t doc_count() const { return doc_ids_.size(); }
    std::uint64_t collection_len() const { return collection_len_; }
    double avg_doc_len() const
    {
        return doc_ids_.empty() ? 0.0 : static_cast<double>(collection_len_) / static_cast<double>(doc_ids_.size());
    }
    std::uint32_t doc_len(std::uint32_t doc) const { return doc_len_[doc]; }
    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_[doc]; }

    std::optional<std::uint32_t> ordinal(const std::string& id) const
    {
        auto it = ordinal_.find(id);
        if (it == ordinal_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t term_count() const { return terms_.size(); }
    const std::string& term(term_id t) const { return terms_[t]; }

    term_id lookup(const std::string& stem) const
    {
        auto it = term_ids_.find(stem);
        return it == term_ids_.end() ? no_term : it->second;
    }

    std::span<const posting> postings(term_id t) const
    {
        if (t == no_term) return {};
        return postings_[t];
    }
    std::span<const posting> postings(const std::string& stem) const { return postings(lookup(stem)); }

    /// (term id, tf) pairs of one document, sorted by term id.
    std::span<const std::pair<term_id, std::uint32_t>> doc_terms(std::uint32_t doc) const { return forward_[doc]; }

    term_statistics stats(const std::string& stem) const
    {
        auto t = lookup(stem);
        if (t == no_term) return {};
        return {postings_[t].size(), cf_[t]};
    }

    std::uint64_t cf(term_id t) const { return t == no_term ? 0 : cf_[t]; }
    std::uint64_t df(term_id t) const { return t == no_term ? 0 : postings_[t].size(); }

    const field_config& config() const { return config_; }
    /// Documents that requested expansion but had no predictions.
    std::size_t missing_expansions() const { return missing_expansions_; }

    /// Accounting invariants; returns one message per violation.
    std::vector<std::string> audit() const
    {
        std::vector<std::string> problems;
        std::uint64_t cf_total = 0;
        for (term_id t = 0; t < terms_.size(); ++t) {
            const auto& list = postings_[t];
            if (list.empty() || list.size() > doc_count()) problems.push_back("df out of range for " + terms_[t]);
            std::uint64_t sum = 0;
            for (std::size_t i = 0; i < list.size(); ++i) {
                if (list[i].tf < 1) problems.push_back("tf < 1 for " + terms_[t]);
                if (i > 0 && list[i - 1].doc >= list[i].doc) problems.push_back("unsorted postings for " + terms_[t]);
                sum += list[i].tf;
            }
            if (sum != cf_[t]) problems.push_back("cf mismatch for " + terms_[t]);
            cf_total += cf_[t];
            if (t > 0 && terms_[t - 1] >= terms_[t]) problems.push_back("dictionary not sorted at " + terms_[t]);
        }
        std::uint64_t len_total = 0;
        for (std::uint32_t d = 0; d < doc_count(); ++d) {
            len_total += doc_len_[d];
            std::uint64_t fwd = 0;
            for (auto [t, tf] : forward_[d]) fwd += tf;
            if (fwd != doc_len_[d]) problems.push_back("forward length mismatch for " + doc_ids_[d]);
        }
        if (len_total != collection_len_) problems.push_back("sum of doc_len != collection_len");
        if (cf_total != collection_len_) problems.push_back("sum of cf != collection_len");
        return problems;
    }

    /// Flat snapshot: "KPIRIDX1", version, field config, doc table, dictionary with
    /// postings. Integers are little-endian fixed width.
    void save(std::ostream& out) const
    {
        out.write("KPIRIDX1", 8);
        put_u32(out, format_version);
        put_u32(out, config_.include_title ? 1 : 0);
        put_u32(out, config_.include_abstract ? 1 : 0);
        put_u32(out, config_.include_author_keywords ? 1 : 0);
        put_u32(out, static_cast<std::uint32_t>(config_.expansion_count));
        put_u64(out, missing_expansions_);
        put_u64(out, doc_ids_.size());
        for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
            put_str(out, doc_ids_[d]);
            put_u32(out, doc_len_[d]);
        }
        put_u64(out, terms_.size());
        for (std::size_t t = 0; t < terms_.size(); ++t) {
            put_str(out, terms_[t]);
            put_u64(out, postings_[t].size());
            for (const auto& p : postings_[t]) {
                put_u32(out, p.doc);
                put_u32(out, p.tf);
            }
        }
    }

    std::string serialize() const
    {
        std::ostringstream out;
        save(out);
        return out.str();
    }

    static inverted_index load(std::istream& in)
    {
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, "KPIRIDX1", 8) != 0) throw data_error("not an index snapshot");
        if (get_u32(in) != format_version) throw data_error("unsupported index snapshot version");
        inverted_index idx;
        idx.config_.include_title = get_u32(in) != 0;
        idx.config_.include_abstract = get_u32(in) != 0;
        idx.config_.include_author_keywords = get_u32(in) != 0;
        idx.config_.expansion_count = static_cast<int>(get_u32(in));
        idx.missing_expansions_ = get_u64(in);
        auto n_docs = get_u64(in);
        for (std::uint64_t d = 0; d < n_docs; ++d) {
            idx.doc_ids_.push_back(get_str(in));
            idx.doc_len_.push_back(get_u32(in));
        }
        auto n_terms = get_u64(in);
        idx.terms_.reserve(n_terms);
        idx.postings_.resize(n_terms);
        for (std::uint64_t t = 0; t < n_terms; ++t) {
            idx.terms_.push_back(get_str(in));
            auto df = get_u64(in);
            if (df == 0 || df > n_docs) throw data_error("index snapshot: bad document frequency");
            auto& list = idx.postings_[t];
            list.reserve(df);
            for (std::uint64_t i = 0; i < df; ++i) {
                posting p;
                p.doc = get_u32(in);
                p.tf = get_u32(in);
                if (p.doc >= n_docs) throw data_error("index snapshot: posting refers to unknown document");
                list.push_back(p);
            }
        }
        idx.finish();
        return idx;
    }

    static inverted_index load_file(const std::string& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw data_error("cannot open " + path);
        return load(in);
    }

    void save_file(const std::string& path) const
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw data_error("cannot write " + path);
        save(out);
    }

    bool operator==(const inverted_index& other) const
    {
        return config_ == other.config_ && doc_ids_ == other.doc_ids_ && doc_len_ == other.doc_len_ &&
               terms_ == other.terms_ && postings_ == other.postings_;
    }

  private:
    static constexpr std::uint32_t format_version = 1;

    field_config config_;
    std::size_t missing_expansions_ = 0;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_len_;
    std::uint64_t collection_len_ = 0;
    std::vector<std::string> terms_;
    std::vector<std::vector<posting>> postings_;
    std::vector<std::uint64_t> cf_;
    std::unordered_map<std::string, term_id> term_ids_;
    std::unordered_map<std::string, std::uint32_t> ordinal_;
    std::vector<std::vector<std::pair<term_id, std::uint32_t>>> forward_;

    // Derives lookup tables, cf, collection length and the forward view.
    void finish()
    {
        cf_.assign(terms_.size(), 0);
        term_ids_.clear();
        forward_.assign(doc_ids_.size(), {});
        for (term_id t = 0; t < terms_.size(); ++t) {
            term_ids_.emplace(terms_[t], t);
            for (const auto& p : postings_[t]) {
                cf_[t] += p.tf;
                forward_[p.doc].emplace_back(t, p.tf);
            }
        }
        collection_len_ = 0;
        ordinal_.clear();
        for (std::uint32_t d = 0; d < doc_ids_.size(); ++d) {
            collection_len_ += doc_len_[d];
            ordinal_.emplace(doc_ids_[d], d);
        }
    }

    static void put_u32(std::ostream& out, std::uint32_t v)
    {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    static void put_u64(std::ostream& out, std::uint64_t v)
    {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
    static void put_str(std::ostream& out, const std::string& s)
    {
        put_u32(out, static_cast<std::uint32_t>(s.size()));
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    static std::uint32_t get_u32(std::istream& in)
    {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw data_error("truncated index snapshot");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    static std::uint64_t get_u64(std::istream& in)
    {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw data_error("truncated index snapshot");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    static std::string get_str(std::istream& in)
    {
        auto len = get_u32(in);
        if (len > (1u << 20)) throw data_error("index snapshot: string longer than 1 MiB");
        std::string s(len, '\0');
        in.read(s.data(), len);
        if (!in) throw data_error("truncated index snapshot");
        return s;
    }

    friend inverted_index build_index(const std::vector<document>&, const field_config&,
                                      const keyphrase_predictions*, unsigned);
};

/// Stems of the indexed stream of one document, in stream order: enabled
/// fields, then any attached expansion keyphrases. Stopwords removed.
inline std::vector<std::string> indexed_stems(const document& doc, const field_config& config)
{
    std::vector<std::string> out;
    auto add = [&](const std::string& text) {
        for (auto& t : analyze(text, true)) out.push_back(std::move(t.stem));
    };
    if (config.include_title) add(doc.title);
    if (config.include_abstract) add(doc.abstract);
    if (config.include_author_keywords) {
        for (const auto& k : doc.author_keywords) add(k);
    }
    for (const auto& k : doc.expansion_keyphrases) add(k);
    return out;
}

/// Builds the index. When config.expansion_count > 0 every document is first
/// expanded with its top-N predictions. Output does not depend on `threads`.
inline inverted_index build_index(const std::vector<document>& corpus, const field_config& config,
                                  const keyphrase_predictions* predictions = nullptr, unsigned threads = 1)
{
    if (corpus.empty()) throw data_error("cannot index an empty corpus");
    config.validate();
    if (config.expansion_count > 0 && predictions == nullptr) {
        throw usage_error("expansion count " + std::to_string(config.expansion_count) + " requires predictions");
    }

    inverted_index idx;
    idx.config_ = config;
    std::unordered_map<std::string, std::vector<posting>> building;

    constexpr std::size_t block = 4096;
    std::vector<std::vector<std::pair<std::string, std::uint32_t>>> counts;
    std::vector<std::uint32_t> lens;
    std::vector<std::size_t> missing;
    for (std::size_t start = 0; start < corpus.size(); start += block) {
        std::size_t n = std::min(block, corpus.size() - start);
        counts.assign(n, {});
        lens.assign(n, 0);
        missing.assign(n, 0);
        parallel_for(n, threads, [&](std::size_t i) {
            const document& src = corpus[start + i];
            std::vector<std::string> stems;
            if (config.expansion_count > 0) {
                expansion_stats st;
                stems = indexed_stems(expand_document(src, *predictions, config.expansion_count, &st), config);
                missing[i] = st.missing;
            } else {
                stems = indexed_stems(src, config);
            }
            lens[i] = static_cast<std::uint32_t>(stems.size());
            std::sort(stems.begin(), stems.end());
            auto& out = counts[i];
            for (std::size_t a = 0; a < stems.size();) {
                std::size_t b = a;
                while (b < stems.size() && stems[b] == stems[a]) ++b;
                out.emplace_back(std::move(stems[a]), static_cast<std::uint32_t>(b - a));
                a = b;
            }
        });
        for (std::size_t i = 0; i < n; ++i) {
            auto ord = static_cast<std::uint32_t>(start + i);
            idx.doc_ids_.push_back(corpus[start + i].id);
            idx.doc_len_.push_back(lens[i]);
            idx.missing_expansions_ += missing[i];
            for (auto& [s, tf] : counts[i]) building[s].push_back({ord, tf});
        }
    }

    idx.terms_.reserve(building.size());
    for (const auto& [s, _] : building) idx.terms_.push_back(s);
    std::sort(idx.terms_.begin(), idx.terms_.end());
    idx.postings_.reserve(idx.terms_.size());
    for (const auto& s : idx.terms_) idx.postings_.push_back(std::move(building[s]));
    idx.finish();
    return idx;
}

/// (df, cf) of a raw word after analysis; unseen words and stopwords give (0, 0).
inline term_statistics term_stats(const inverted_index& index, const std::string& word)
{
    auto tokens = analyze(word, true);
    if (tokens.size() != 1) return {};
    return index.stats(tokens.front().stem);
}

}  // namespace kpir
