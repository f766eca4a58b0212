// kpir: document expansion with keyphrases for scientific retrieval.
//
//   kpir index      --corpus docs.jsonl --fields ta [--predictions p.jsonl --n 5] --out docs.kpidx
//   kpir search     (--index docs.kpidx | --corpus docs.jsonl ...) --topics t.txt [--rm3] --out run.txt
//   kpir extract    --corpus docs.jsonl --n 10 --out preds.jsonl
//   kpir evaluate   --run run.txt --qrels q.txt [--topics t.txt] [--out dir]
//   kpir ttest      a.per_query.csv b.per_query.csv
//   kpir sweep      --config configs/sweep.toml
//   kpir experiment --config configs/table.toml --split present_absent

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <kpir/kpir.hpp>

namespace fs = std::filesystem;

namespace {

struct options {
    std::string config;
    std::string corpus;
    std::string topics;
    std::string qrels;
    std::string predictions;
    std::string fields = "ta";
    int n = 0;
    std::vector<int> n_values{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::string model = "bm25";
    bool rm3 = false;
    double k1 = 0.9;
    double b = 0.4;
    double mu = 1000.0;
    std::size_t fb_docs = 10;
    std::size_t fb_terms = 10;
    double orig_weight = 0.5;
    std::size_t top_k = 1000;
    std::string out;
    unsigned threads = 1;
    std::uint64_t seed = 0;
    std::string index;
    std::string run;
    std::string tag;
    std::string split = "none";
    std::string domains;
    std::string index_cache;
    std::optional<int> rel_threshold;
    bool allow_large_n = false;
    std::string per_query;
    // mp-rank
    double alpha = 1.1;
    double tau = 0.25;
    double damping = 0.85;
    std::string promotion = "promoted";
    int extract_n = 10;
    std::vector<std::string> ttest_files;
};

// Keys whose values are file paths; relative values in a config file resolve
// against the config file's directory.
const std::vector<std::string> path_keys{"corpus", "topics", "qrels", "predictions", "out",
                                         "index",  "run",    "domains", "index-cache"};

void apply_config(CLI::App& sub, const std::string& path)
{
    if (path.empty()) return;
    if (!fs::exists(path)) throw kpir::usage_error("config file not found: " + path);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML{}.from_file(path);
    } catch (const CLI::Error& e) {
        throw kpir::data_error(path + ": " + e.what());
    }
    const auto base = fs::path(path).parent_path();
    for (auto& item : items) {
        if (!item.parents.empty()) throw kpir::usage_error(path + ": sections are not supported (" + item.fullname() + ")");
        if (item.name == "config") throw kpir::usage_error(path + ": config files cannot include other configs");
        auto* opt = sub.get_option_no_throw("--" + item.name);
        if (opt == nullptr) throw kpir::usage_error(path + ": unknown key \"" + item.name + "\" for " + sub.get_name());
        if (opt->count() > 0) continue;  // the command line wins
        auto inputs = item.inputs;
        if (std::find(path_keys.begin(), path_keys.end(), item.name) != path_keys.end()) {
            for (auto& v : inputs) {
                if (!v.empty() && v != kpir::internal_mprank && fs::path(v).is_relative()) v = (base / v).lexically_normal().string();
            }
        }
        try {
            opt->add_result(inputs);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw kpir::usage_error(path + ": bad value for \"" + item.name + "\": " + e.what());
        }
    }
}

void add_config(CLI::App* sub, options& o)
{
    sub->add_option("--config", o.config,
                    "TOML file whose keys are long flag names (e.g. k1 = 1.2); command-line flags take precedence");
}

void add_threads(CLI::App* sub, options& o)
{
    sub->add_option("--threads", o.threads, "Worker threads; outputs do not depend on it")
        ->capture_default_str()
        ->check(CLI::Range(1u, 1024u));
}

void add_index_build(CLI::App* sub, options& o)
{
    sub->add_option("--corpus", o.corpus, "Corpus JSONL (id, title, abstract, keywords)");
    sub->add_option("--fields", o.fields, "Indexed fields: ta = title+abstract, tak = title+abstract+keywords")
        ->capture_default_str()
        ->check(CLI::IsMember({"ta", "tak"}));
    sub->add_option("--predictions", o.predictions,
                    std::string("Predictions JSONL, or \"") + kpir::internal_mprank + "\" to extract with mp-rank");
    sub->add_option("--n", o.n, "Predicted keyphrases appended per document")->capture_default_str();
    sub->add_flag("--allow-large-n", o.allow_large_n, "Permit N > 9");
}

void add_retrieval(CLI::App* sub, options& o)
{
    sub->add_option("--model", o.model, "Retrieval model")->capture_default_str()->check(CLI::IsMember({"bm25", "ql"}));
    sub->add_flag("--rm3", o.rm3, "Enable RM3 pseudo-relevance feedback (default off)");
    sub->add_option("--k1", o.k1, "BM25 k1")->capture_default_str();
    sub->add_option("--b", o.b, "BM25 b")->capture_default_str();
    sub->add_option("--mu", o.mu, "Dirichlet prior for query likelihood")->capture_default_str();
    sub->add_option("--fb-docs", o.fb_docs, "RM3 feedback documents")->capture_default_str();
    sub->add_option("--fb-terms", o.fb_terms, "RM3 feedback terms")->capture_default_str();
    sub->add_option("--orig-weight", o.orig_weight, "RM3 weight of the original query")->capture_default_str();
    sub->add_option("--top-k", o.top_k, "Documents retrieved per query")->capture_default_str();
}

void add_seed(CLI::App* sub, options& o)
{
    sub->add_option("--seed", o.seed, "Reserved; every step is deterministic")->capture_default_str();
}

kpir::field_config field_config_of(const options& o)
{
    auto f = o.fields == "tak" ? kpir::field_config::tak(o.n) : kpir::field_config::ta(o.n);
    return f;
}

kpir::experiment_spec spec_of(const options& o)
{
    kpir::experiment_spec s;
    s.fields = field_config_of(o);
    s.predictions = o.predictions;
    s.ranking.model = kpir::parse_model(o.model);
    s.ranking.k1 = o.k1;
    s.ranking.b = o.b;
    s.ranking.mu = o.mu;
    s.ranking.top_k = o.top_k;
    s.rm3.enabled = o.rm3;
    s.rm3.fb_docs = o.fb_docs;
    s.rm3.fb_terms = o.fb_terms;
    s.rm3.orig_weight = o.orig_weight;
    s.n_values = o.n_values;
    s.output = o.out;
    s.allow_large_n = o.allow_large_n;
    return s;
}

void require(const std::string& value, const char* flag)
{
    if (value.empty()) throw kpir::usage_error(std::string(flag) + " is required");
}

kpir::relevance_judgments load_qrels(const options& o)
{
    require(o.qrels, "--qrels");
    return kpir::load_qrels(o.qrels, o.rel_threshold);
}

void warn_missing(std::size_t missing)
{
    if (missing > 0) std::cerr << "warning: " << missing << " documents had no predictions and were not expanded\n";
}

void write_output(const std::string& path, const std::string& content)
{
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    kpir::write_text_file(path, content);
}

nlohmann::ordered_json input_entry(const std::string& path)
{
    nlohmann::ordered_json j;
    j["path"] = path;
    j["fnv1a"] = kpir::hash_file(path);
    return j;
}

nlohmann::ordered_json manifest_of(const std::string& command, const options& o, const kpir::experiment_spec& spec)
{
    nlohmann::ordered_json m;
    m["tool"] = "kpir";
    m["command"] = command;
    m["parameters"] = kpir::spec_json(spec);
    m["parameters"]["seed"] = o.seed;
    m["parameters"]["rel_threshold"] = o.rel_threshold ? nlohmann::ordered_json(*o.rel_threshold) : nlohmann::ordered_json("max");
    nlohmann::ordered_json inputs;
    inputs["corpus"] = input_entry(o.corpus);
    inputs["topics"] = input_entry(o.topics);
    inputs["qrels"] = input_entry(o.qrels);
    if (!o.predictions.empty() && o.predictions != kpir::internal_mprank) inputs["predictions"] = input_entry(o.predictions);
    inputs["domains"] = o.domains.empty() ? nlohmann::ordered_json("bundled") : input_entry(o.domains);
    m["inputs"] = inputs;
    return m;
}

kpir::experiment_inputs load_inputs(const options& o, const kpir::experiment_spec& spec)
{
    require(o.corpus, "--corpus");
    require(o.topics, "--topics");
    kpir::experiment_inputs in;
    in.corpus = kpir::load_corpus(o.corpus);
    in.topics = kpir::load_topics(o.topics);
    in.qrels = load_qrels(o);
    in.predictions = kpir::resolve_predictions(spec, in.corpus, o.threads);
    if (!o.domains.empty()) in.domains = kpir::domain_table::load(o.domains);
    return in;
}

int cmd_index(const options& o)
{
    require(o.corpus, "--corpus");
    require(o.out, "--out");
    auto config = field_config_of(o);
    kpir::experiment_spec spec;
    spec.fields = config;
    spec.predictions = o.predictions;
    spec.allow_large_n = o.allow_large_n;
    spec.n_values = {o.n};
    spec.validate();
    auto corpus = kpir::load_corpus(o.corpus);
    auto preds = kpir::resolve_predictions(spec, corpus, o.threads);
    if (config.expansion_count > 0 && !preds) throw kpir::usage_error("--n > 0 requires --predictions");
    auto idx = kpir::build_index(corpus, config, preds ? &*preds : nullptr, o.threads);
    warn_missing(idx.missing_expansions());
    idx.save_file(o.out);
    std::cout << "indexed " << idx.doc_count() << " documents, " << idx.term_count() << " terms, "
              << idx.collection_len() << " tokens (" << config.name() << ", N=" << config.expansion_count << ")\n";
    return 0;
}

int cmd_search(const options& o)
{
    require(o.topics, "--topics");
    auto spec = spec_of(o);
    spec.validate();
    std::optional<kpir::inverted_index> idx;
    if (!o.index.empty()) {
        idx = kpir::inverted_index::load_file(o.index);
    } else {
        require(o.corpus, "--corpus (or --index)");
        auto corpus = kpir::load_corpus(o.corpus);
        auto preds = kpir::resolve_predictions(spec, corpus, o.threads);
        if (spec.fields.expansion_count > 0 && !preds) throw kpir::usage_error("--n > 0 requires --predictions");
        idx = kpir::build_index(corpus, spec.fields, preds ? &*preds : nullptr, o.threads);
        warn_missing(idx->missing_expansions());
    }
    auto topics = kpir::load_topics(o.topics);
    auto run = kpir::search_all(*idx, topics, spec.ranking, spec.rm3, o.threads);
    write_output(o.out, kpir::format_run(run, o.tag.empty() ? spec.model_label() : o.tag));
    return 0;
}

int cmd_extract(const options& o)
{
    require(o.corpus, "--corpus");
    if (o.extract_n < 1) throw kpir::usage_error("--n must be >= 1 for extract");
    kpir::mprank::params p;
    p.alpha = o.alpha;
    p.tau = o.tau;
    p.damping = o.damping;
    p.promotion = o.promotion == "source" ? kpir::mprank::params::promotion_position::source
                                          : kpir::mprank::params::promotion_position::promoted;
    auto corpus = kpir::load_corpus(o.corpus);
    auto preds = kpir::mprank::extract_all(corpus, static_cast<std::size_t>(o.extract_n), p, o.threads);
    std::ostringstream out;
    kpir::write_predictions(out, preds);
    write_output(o.out, out.str());
    return 0;
}

int cmd_evaluate(const options& o)
{
    require(o.run, "--run");
    auto qrels = load_qrels(o);
    auto run = kpir::read_run(o.run);
    std::vector<std::string> ids;
    if (!o.topics.empty()) {
        for (const auto& q : kpir::load_topics(o.topics)) ids.push_back(q.id);
    } else {
        ids = qrels.query_ids();
    }
    auto rep = kpir::evaluate_run(run, qrels, ids);
    std::cout << "map\t" << kpir::format_number(rep.map, 4) << "\nP_10\t" << kpir::format_number(rep.p_at_10, 4)
              << "\nqueries\t" << rep.n_queries << '\n';
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        std::ostringstream csv;
        kpir::write_per_query_csv(csv, rep);
        kpir::write_text_file(fs::path(o.out) / "per_query.csv", csv.str());
        kpir::write_text_file(fs::path(o.out) / "aggregate.json", kpir::aggregate_json(rep) + "\n");
    }
    return 0;
}

int cmd_ttest(const options& o)
{
    if (o.ttest_files.size() != 2) throw kpir::usage_error("ttest needs exactly two per-query CSV files");
    auto a = kpir::read_per_query_csv(o.ttest_files[0]);
    auto b = kpir::read_per_query_csv(o.ttest_files[1]);
    std::map<std::string, double> b_ap;
    for (const auto& m : b) b_ap[m.query_id] = m.ap;
    if (a.size() != b.size()) throw kpir::data_error("per-query files cover different query sets");
    std::vector<double> xs, ys;
    for (const auto& m : a) {
        auto it = b_ap.find(m.query_id);
        if (it == b_ap.end()) throw kpir::data_error("query " + m.query_id + " missing from " + o.ttest_files[1]);
        xs.push_back(m.ap);
        ys.push_back(it->second);
    }
    auto r = kpir::paired_t_test(xs, ys);
    std::cout << "t\t" << kpir::format_number(r.t_statistic) << "\ndf\t" << r.degrees_of_freedom << "\np\t"
              << kpir::format_number(r.p_value) << "\nsignificant_at_0.05\t" << (r.significant_at_05 ? "yes" : "no")
              << '\n';
    return 0;
}

int cmd_sweep(const options& o)
{
    auto spec = spec_of(o);
    spec.split = kpir::parse_split(o.split);
    if (spec.split == kpir::split_mode::in_domain || spec.split == kpir::split_mode::out_domain) {
        throw kpir::usage_error("sweep supports --split none, present or absent");
    }
    if (spec.predictions.empty()) throw kpir::usage_error("sweep requires --predictions");
    spec.validate();
    require(o.out, "--out");
    auto in = load_inputs(o, spec);
    kpir::index_cache cache(o.index_cache);
    auto outcome = kpir::sweep_n(spec, in, cache, o.threads);
    kpir::write_outcome(o.out, outcome, manifest_of("sweep", o, spec));
    std::ostringstream md;
    kpir::write_report_markdown(md, outcome.rows);
    std::cout << md.str();
    return 0;
}

int cmd_experiment(const options& o)
{
    auto spec = spec_of(o);
    require(o.out, "--out");
    std::optional<kpir::split_kind> kind;
    if (o.split == "present_absent") {
        kind = kpir::split_kind::present_absent;
        spec.split = kpir::split_mode::present;  // validated as a prediction-bearing split
    } else if (o.split == "domain") {
        kind = kpir::split_kind::domain;
    } else {
        spec.split = kpir::parse_split(o.split);
    }
    spec.validate();
    if (kind) spec.split = kpir::split_mode::none;
    auto in = load_inputs(o, spec);
    kpir::index_cache cache(o.index_cache);
    auto outcome = kind ? kpir::split_report(spec, *kind, in, cache, o.threads)
                        : kpir::run_with_baseline(spec, in, cache, o.threads);
    auto manifest = manifest_of("experiment", o, spec);
    manifest["parameters"]["split"] = o.split;
    kpir::write_outcome(o.out, outcome, manifest);
    std::ostringstream md;
    kpir::write_report_markdown(md, outcome.rows);
    std::cout << md.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Keyphrase document expansion for scientific retrieval"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "kpir 1.0.0");
    options o;

    auto* index = app.add_subcommand("index", "Build an index snapshot");
    add_config(index, o);
    add_index_build(index, o);
    index->add_option("--out", o.out, "Snapshot path");
    add_threads(index, o);
    add_seed(index, o);

    auto* search = app.add_subcommand("search", "Retrieve topics and write a TREC run");
    add_config(search, o);
    search->add_option("--index", o.index, "Index snapshot from `kpir index` (otherwise built from --corpus)");
    add_index_build(search, o);
    search->add_option("--topics", o.topics, "Topics: TREC-style tagged file or JSONL (.jsonl)");
    add_retrieval(search, o);
    search->add_option("--tag", o.tag, "Run tag (default: model label)");
    search->add_option("--out", o.out, "Run file path (default: standard output)");
    add_threads(search, o);
    add_seed(search, o);

    auto* extract = app.add_subcommand("extract", "Extract keyphrases with mp-rank to predictions JSONL");
    add_config(extract, o);
    extract->add_option("--corpus", o.corpus, "Corpus JSONL");
    extract->add_option("--n", o.extract_n, "Keyphrases per document")->capture_default_str();
    extract->add_option("--alpha", o.alpha, "Weight of the first-occurrence promotion")->capture_default_str();
    extract->add_option("--tau", o.tau, "Topic clustering similarity threshold")->capture_default_str();
    extract->add_option("--damping", o.damping, "Random-walk damping factor")->capture_default_str();
    extract->add_option("--promotion", o.promotion, "Position scaling the promotion: promoted or source candidate")
        ->capture_default_str()
        ->check(CLI::IsMember({"promoted", "source"}));
    extract->add_option("--out", o.out, "Predictions path (default: standard output)");
    add_threads(extract, o);
    add_seed(extract, o);

    auto* evaluate = app.add_subcommand("evaluate", "Compute MAP and P@10 of a run");
    add_config(evaluate, o);
    evaluate->add_option("--run", o.run, "TREC run file");
    evaluate->add_option("--qrels", o.qrels, "TREC qrels file");
    evaluate->add_option("--topics", o.topics, "Topic set defining the averaged queries (default: queries in qrels)");
    evaluate->add_option("--rel-threshold", o.rel_threshold, "Minimum relevant grade (default: highest grade in qrels)");
    evaluate->add_option("--out", o.out, "Directory for per_query.csv and aggregate.json");

    auto* ttest = app.add_subcommand("ttest", "Paired t-test on per-query AP of two runs");
    ttest->add_option("files", o.ttest_files, "Two per-query CSV files (qid,ap,p10)")->expected(2);

    auto add_experiment_flags = [&](CLI::App* sub) {
        add_config(sub, o);
        add_index_build(sub, o);
        sub->add_option("--topics", o.topics, "Topics file");
        sub->add_option("--qrels", o.qrels, "Qrels file");
        sub->add_option("--rel-threshold", o.rel_threshold, "Minimum relevant grade (default: highest grade in qrels)");
        sub->add_option("--domains", o.domains, "Research-field domain CSV (field,in|out; default: bundled table)");
        sub->add_option("--index-cache", o.index_cache, "Directory for cached index snapshots");
        add_retrieval(sub, o);
        sub->add_option("--out", o.out, "Output directory");
        add_threads(sub, o);
        add_seed(sub, o);
    };

    auto* sweep = app.add_subcommand("sweep", "MAP as a function of the number of appended keyphrases");
    add_experiment_flags(sweep);
    sweep->add_option("--n-values", o.n_values, "Values of N")->capture_default_str()->delimiter(',');
    sweep->add_option("--split", o.split, "Expand with all, only present, or only absent predictions")
        ->capture_default_str()
        ->check(CLI::IsMember({"none", "present", "absent"}));

    auto* experiment = app.add_subcommand("experiment", "One configuration against its unexpanded baseline");
    add_experiment_flags(experiment);
    experiment->add_option("--split", o.split,
                           "none, present, absent, in_domain, out_domain, or present_absent / domain for two-row reports")
        ->capture_default_str()
        ->check(CLI::IsMember({"none", "present", "absent", "in_domain", "out_domain", "present_absent", "domain"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        auto code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        auto* sub = app.get_subcommands().front();
        apply_config(*sub, o.config);
        const auto name = sub->get_name();
        if (name == "index") return cmd_index(o);
        if (name == "search") return cmd_search(o);
        if (name == "extract") return cmd_extract(o);
        if (name == "evaluate") return cmd_evaluate(o);
        if (name == "ttest") return cmd_ttest(o);
        if (name == "sweep") return cmd_sweep(o);
        return cmd_experiment(o);
    } catch (const kpir::usage_error& e) {
        std::cerr << "kpir: " << e.what() << '\n';
        return 1;
    } catch (const kpir::data_error& e) {
        std::cerr << "kpir: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "kpir: " << e.what() << '\n';
        return 2;
    }
}
