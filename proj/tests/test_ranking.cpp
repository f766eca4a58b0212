#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include <kpir/corpus.hpp>
#include <kpir/index.hpp>
#include <kpir/ranking.hpp>

#include "support.hpp"

using namespace kpir;

namespace {

void check_against(const ranking& got, const nlohmann::json& expected)
{
    INFO("query " << got.query_id);
    REQUIRE(got.docs.size() == expected.size());
    for (std::size_t i = 0; i < got.docs.size(); ++i) {
        CHECK(got.docs[i].doc_id == expected[i][0].get<std::string>());
        CHECK(std::abs(got.docs[i].score - expected[i][1].get<double>()) < 1e-6);
    }
}

struct fixture_set {
    std::vector<document> docs;
    std::vector<query> topics;
};

fixture_set abc() { return {load_corpus(test::fixture("abc_corpus.jsonl")), load_topics(test::fixture("abc_topics.jsonl"))}; }
fixture_set mini() { return {load_corpus(test::fixture("mini_corpus.jsonl")), load_topics(test::fixture("mini_topics.txt"))}; }

ranking_params with_model(retrieval_model m)
{
    ranking_params p;
    p.model = m;
    return p;
}

}  // namespace

TEST_CASE("BM25, QL and RM3 match the oracle on the three-document corpus")
{
    auto f = abc();
    auto idx = build_index(f.docs, field_config::ta());
    for (auto m : {retrieval_model::bm25, retrieval_model::ql}) {
        for (bool rm3 : {false, true}) {
            const std::string label = std::string(model_name(m)) + (rm3 ? "+rm3" : "");
            rm3_params r;
            r.enabled = rm3;
            for (const auto& q : f.topics) {
                DYNAMIC_SECTION(label << " " << q.id)
                {
                    check_against(search(idx, q, with_model(m), r), test::oracle()["abc"][label][q.id]);
                }
            }
        }
    }
}

TEST_CASE("BM25 hand example orders d0 above d2 for query beta")
{
    auto f = abc();
    auto idx = build_index(f.docs, field_config::ta());
    auto r = score_bm25(idx, {"beta"}, 0.9, 0.4);
    REQUIRE(r.docs.size() == 2);
    CHECK(r.docs[0].doc_id == "d0");
    CHECK(r.docs[1].doc_id == "d2");
    const double idf = std::log(1.0 + (3.0 - 2.0 + 0.5) / (2.0 + 0.5));
    const double avgdl = 8.0 / 3.0;
    const double d0 = idf * 2 * 1.9 / (2 + 0.9 * (0.6 + 0.4 * 3 / avgdl));
    CHECK(r.docs[0].score == Catch::Approx(d0).epsilon(1e-12));
}

TEST_CASE("RM3 with two feedback documents and two terms matches the oracle")
{
    auto f = abc();
    auto idx = build_index(f.docs, field_config::ta());
    rm3_params r{true, 2, 2, 0.5};
    for (auto m : {retrieval_model::bm25, retrieval_model::ql}) {
        const auto& expected = test::oracle()["abc"][std::string(model_name(m)) + "+rm3_small"];
        for (const auto& q : f.topics) {
            DYNAMIC_SECTION(model_name(m) << " " << q.id)
            {
                auto stems = analyze_query(q.text);
                auto first = score_weighted(idx, count_terms(stems), with_model(m));
                ranking fp{q.id, first};
                if (!first.empty()) {
                    auto rm = estimate_rm3(idx, stems, fp, r);
                    const auto& rm1 = expected[q.id]["rm1"];
                    REQUIRE(rm.feedback_terms.size() == rm1.size());
                    for (const auto& [t, w] : rm.feedback_terms) CHECK(w == Catch::Approx(rm1[t].get<double>()).epsilon(1e-12));
                    const auto& weights = expected[q.id]["weights"];
                    REQUIRE(rm.query_terms.size() == weights.size());
                    for (const auto& [t, w] : rm.query_terms) CHECK(w == Catch::Approx(weights[t].get<double>()).epsilon(1e-12));
                }
                check_against(search(idx, q, with_model(m), r), expected[q.id]["ranking"]);
            }
        }
    }
}

TEST_CASE("mini corpus runs match the oracle")
{
    auto f = mini();
    auto idx = build_index(f.docs, field_config::ta());
    for (auto m : {retrieval_model::bm25, retrieval_model::ql}) {
        for (bool rm3 : {false, true}) {
            const std::string label = std::string(model_name(m)) + (rm3 ? "+rm3" : "");
            rm3_params r;
            r.enabled = rm3;
            const auto& runs = test::oracle()["mini"][label + ".ta.n0"]["run"];
            for (const auto& q : f.topics) check_against(search(idx, q, with_model(m), r), runs[q.id]);
        }
    }
}

TEST_CASE("RM3 with lambda 1 keeps the first-pass order")
{
    for (const auto& f : {abc(), mini()}) {
        auto idx = build_index(f.docs, field_config::ta());
        for (auto m : {retrieval_model::bm25, retrieval_model::ql}) {
            for (const auto& q : f.topics) {
                auto first = search(idx, q, with_model(m));
                auto again = search(idx, q, with_model(m), rm3_params{true, 10, 10, 1.0});
                REQUIRE(first.docs.size() == again.docs.size());
                for (std::size_t i = 0; i < first.docs.size(); ++i) CHECK(first.docs[i].doc_id == again.docs[i].doc_id);
            }
        }
    }
}

TEST_CASE("degenerate queries give empty rankings")
{
    auto idx = build_index(abc().docs, field_config::ta());
    for (auto m : {retrieval_model::bm25, retrieval_model::ql}) {
        for (bool rm3 : {false, true}) {
            rm3_params r;
            r.enabled = rm3;
            CHECK(search(idx, {"q", "delta epsilon", {}}, with_model(m), r).docs.empty());
            CHECK(search(idx, {"q", "", {}}, with_model(m), r).docs.empty());
            CHECK(search(idx, {"q", "the of and", {}}, with_model(m), r).docs.empty());
        }
    }
}

TEST_CASE("BM25 with b = 0 ignores document length")
{
    std::vector<document> docs{{"a", "", "alpha beta", {}, {}}, {"b", "", "alpha beta", {}, {}}, {"c", "", "gamma", {}, {}}};
    auto before = score_bm25(build_index(docs, field_config::ta()), {"alpha"}, 0.9, 0.0);
    docs[1].abstract += " zeta zeta zeta zeta zeta zeta";
    auto after = score_bm25(build_index(docs, field_config::ta()), {"alpha"}, 0.9, 0.0);
    REQUIRE(after.docs.size() == 2);
    CHECK(after.docs[0].score == Catch::Approx(after.docs[1].score).epsilon(1e-15));
    CHECK(after.docs[0].score == Catch::Approx(before.docs[0].score).epsilon(1e-15));
    auto normalised = score_bm25(build_index(docs, field_config::ta()), {"alpha"}, 0.9, 0.4);
    CHECK(normalised.docs[0].doc_id == "a");
    CHECK(normalised.docs[0].score > normalised.docs[1].score);
}

TEST_CASE("BM25 with b = 0 is monotone in tf")
{
    std::vector<document> docs{{"t1", "", "alpha", {}, {}}, {"t2", "", "alpha alpha", {}, {}}, {"t3", "", "alpha alpha alpha", {}, {}},
                               {"x", "", "beta", {}, {}}};
    auto r = score_bm25(build_index(docs, field_config::ta()), {"alpha"}, 0.9, 0.0);
    REQUIRE(r.docs.size() == 3);
    CHECK(r.docs[0].doc_id == "t3");
    CHECK(r.docs[1].doc_id == "t2");
    CHECK(r.docs[2].doc_id == "t1");
}

TEST_CASE("QL scores converge as mu grows")
{
    auto idx = build_index(abc().docs, field_config::ta());
    auto r = score_ql(idx, {"beta", "gamma"}, 1e9);
    REQUIRE(r.docs.size() == 3);
    for (std::size_t i = 1; i < r.docs.size(); ++i) CHECK(std::abs(r.docs[i].score - r.docs[0].score) < 1e-6);
}

TEST_CASE("weighted scoring with equal weights scales the unweighted scores")
{
    auto idx = build_index(mini().docs, field_config::ta());
    const std::vector<std::string> stems{"retriev", "model"};
    auto plain_bm25 = score_bm25(idx, stems, 0.9, 0.4);
    auto plain_ql = score_ql(idx, stems, 1000);
    weighted_terms w{{"model", 0.5}, {"retriev", 0.5}};
    auto bm25 = bm25_weighted(idx, w, 0.9, 0.4);
    auto ql = ql_weighted(idx, w, 1000);
    std::map<std::string, double> b, q;
    for (const auto& d : bm25) b[d.doc_id] = d.score;
    for (const auto& d : ql) q[d.doc_id] = d.score;
    for (const auto& d : plain_bm25.docs) CHECK(b[d.doc_id] * 2 == Catch::Approx(d.score).epsilon(1e-9));
    for (const auto& d : plain_ql.docs) CHECK(q[d.doc_id] * 2 == Catch::Approx(d.score).epsilon(1e-9));
}

TEST_CASE("search plumbing")
{
    auto f = mini();
    auto idx = build_index(f.docs, field_config::ta());
    const auto& q = f.topics[0];
    SECTION("RM3 disabled equals the bare scorer")
    {
        auto r = search(idx, q, with_model(retrieval_model::bm25));
        CHECK(r.docs == score_bm25(idx, analyze_query(q.text), 0.9, 0.4).docs);
    }
    SECTION("top_k truncates")
    {
        auto p = with_model(retrieval_model::ql);
        p.top_k = 1;
        CHECK(search(idx, q, p).docs.size() <= 1);
        CHECK(search(idx, q, p, rm3_params{true, 10, 10, 0.5}).docs.size() <= 1);
    }
    SECTION("more feedback documents than results is fine")
    {
        CHECK_NOTHROW(search(idx, q, with_model(retrieval_model::bm25), rm3_params{true, 500, 3, 0.5}));
    }
    SECTION("invalid parameters")
    {
        auto p = with_model(retrieval_model::bm25);
        p.b = 1.5;
        CHECK_THROWS_AS(search(idx, q, p), usage_error);
        p = with_model(retrieval_model::ql);
        p.mu = 0;
        CHECK_THROWS_AS(search(idx, q, p), usage_error);
        CHECK_THROWS_AS(search(idx, q, with_model(retrieval_model::bm25), rm3_params{true, 0, 10, 0.5}), usage_error);
        CHECK_THROWS_AS(search(idx, q, with_model(retrieval_model::bm25), rm3_params{true, 10, 10, 1.5}), usage_error);
    }
    CHECK(parse_model("BM25") == retrieval_model::bm25);
    CHECK_THROWS_AS(parse_model("tfidf"), usage_error);
}

TEST_CASE("ties break by ascending doc id")
{
    std::vector<document> docs{{"z", "", "alpha", {}, {}}, {"a", "", "alpha", {}, {}}, {"m", "", "alpha", {}, {}}, {"q", "", "beta", {}, {}}};
    auto idx = build_index(docs, field_config::ta());
    for (auto m : {retrieval_model::bm25, retrieval_model::ql}) {
        auto r = search(idx, {"1", "alpha", {}}, with_model(m));
        REQUIRE(r.docs.size() == 3);
        CHECK(r.docs[0].doc_id == "a");
        CHECK(r.docs[1].doc_id == "m");
        CHECK(r.docs[2].doc_id == "z");
    }
}

TEST_CASE("rankings are well formed and thread independent")
{
    auto f = mini();
    auto idx = build_index(f.docs, field_config::ta());
    rm3_params r;
    r.enabled = true;
    auto one = search_all(idx, f.topics, with_model(retrieval_model::bm25), r, 1);
    auto many = search_all(idx, f.topics, with_model(retrieval_model::bm25), r, 8);
    CHECK(one == many);
    for (const auto& rk : one) {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < rk.docs.size(); ++i) {
            CHECK(seen.insert(rk.docs[i].doc_id).second);
            if (i > 0) CHECK(rk.docs[i].score <= rk.docs[i - 1].score);
        }
    }
}

TEST_CASE("run files round-trip")
{
    auto f = mini();
    auto idx = build_index(f.docs, field_config::ta());
    auto run = search_all(idx, f.topics, with_model(retrieval_model::bm25));
    auto text = format_run(run, "bm25");
    CHECK(text.find("0101 Q0 m1 1 ") == 0);
    test::temp_dir dir;
    auto back = read_run(dir.write("r.txt", text));
    REQUIRE(back.size() == run.size());
    for (std::size_t i = 0; i < run.size(); ++i) {
        CHECK(back[i].query_id == run[i].query_id);
        REQUIRE(back[i].docs.size() == run[i].docs.size());
        for (std::size_t j = 0; j < run[i].docs.size(); ++j) CHECK(back[i].docs[j].doc_id == run[i].docs[j].doc_id);
    }
    CHECK(format_run(back, "bm25") == text);
    CHECK_THROWS_AS(read_run(dir.write("dup.txt", "q Q0 d 1 2.0 t\nq Q0 d 2 1.0 t\n")), data_error);
    CHECK_THROWS_AS(read_run(dir.write("bad.txt", "q Q0 d one 2.0 t\n")), data_error);
}
