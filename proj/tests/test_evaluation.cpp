#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include <kpir/evaluation.hpp>

#ifdef KPIR_HAVE_BOOST_MATH
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#endif

#include "support.hpp"

using namespace kpir;

namespace {

ranking make_ranking(const std::string& qid, std::initializer_list<const char*> docs)
{
    ranking r{qid, {}};
    double s = static_cast<double>(docs.size());
    for (const char* d : docs) r.docs.push_back({d, s--});
    return r;
}

relevance_judgments judgments(std::initializer_list<std::tuple<const char*, const char*, int>> rows)
{
    relevance_judgments q;
    for (const auto& [qid, doc, g] : rows) q.set(qid, doc, g);
    return q;
}

}  // namespace

TEST_CASE("average precision")
{
    auto qrels = judgments({{"q", "a", 1}, {"q", "c", 1}, {"q", "b", 0}});
    CHECK(average_precision(make_ranking("q", {"a", "b", "c"}), qrels) == Catch::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(average_precision(make_ranking("q", {"b", "a", "c"}), qrels) == Catch::Approx((0.5 + 2.0 / 3.0) / 2).epsilon(1e-15));
    SECTION("unretrieved relevant documents count against recall")
    {
        CHECK(average_precision(make_ranking("q", {"a", "b"}), qrels) == Catch::Approx(0.5).epsilon(1e-15));
        CHECK(average_precision(make_ranking("q", {}), qrels) == 0.0);
    }
    SECTION("no relevant documents gives zero")
    {
        CHECK(average_precision(make_ranking("other", {"a"}), qrels) == 0.0);
    }
    SECTION("perfect ranking gives one")
    {
        CHECK(average_precision(make_ranking("q", {"c", "a", "b"}), qrels) == 1.0);
    }
}

TEST_CASE("precision at 10 divides by the cutoff")
{
    auto qrels = judgments({{"q", "a", 1}, {"q", "c", 1}});
    CHECK(precision_at_k(make_ranking("q", {"a", "b", "c"}), qrels) == Catch::Approx(0.2));
    CHECK(precision_at_k(make_ranking("q", {"a", "b", "c"}), qrels, 1) == 1.0);
    CHECK(precision_at_k(make_ranking("q", {"b", "a"}), qrels, 1) == 0.0);
    CHECK_THROWS_AS(precision_at_k(make_ranking("q", {"a"}), qrels, 0), usage_error);
    ranking eleven = make_ranking("q", {"x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10", "a"});
    CHECK(precision_at_k(eleven, qrels) == 0.0);
}

TEST_CASE("evaluate_run averages over the topic set")
{
    auto qrels = judgments({{"q1", "a", 1}, {"q2", "b", 1}, {"q3", "c", 1}});
    std::vector<ranking> run{make_ranking("q1", {"a"}), make_ranking("q2", {"x", "b"})};
    auto rep = evaluate_run(run, qrels, std::vector<std::string>{"q1", "q2", "q3"});
    REQUIRE(rep.n_queries == 3);
    CHECK(rep.per_query[2].query_id == "q3");
    CHECK(rep.per_query[2].ap == 0.0);
    CHECK(rep.map == Catch::Approx(0.5));
    CHECK(rep.p_at_10 == Catch::Approx(0.2 / 3));
    SECTION("subsets recompute the means")
    {
        auto sub = rep.subset({"q2", "q1"});
        CHECK(sub.n_queries == 2);
        CHECK(sub.per_query[0].query_id == "q1");
        CHECK(sub.map == Catch::Approx(0.75));
        auto empty = rep.subset({});
        CHECK(empty.n_queries == 0);
        CHECK(empty.map == 0.0);
    }
    SECTION("unknown and repeated queries are errors")
    {
        run.push_back(make_ranking("q9", {"a"}));
        CHECK_THROWS_AS(evaluate_run(run, qrels, std::vector<std::string>{"q1", "q2", "q3"}), data_error);
        run.back() = make_ranking("q1", {"a"});
        CHECK_THROWS_AS(evaluate_run(run, qrels, std::vector<std::string>{"q1", "q2", "q3"}), data_error);
    }
}

TEST_CASE("evaluation of the mini corpus matches the oracle")
{
    auto qrels = load_qrels(test::fixture("mini_qrels.txt"));
    auto topics = load_topics(test::fixture("mini_topics.txt"));
    for (const char* label : {"bm25.ta.n0", "ql+rm3.ta.n0", "bm25.tak.n0"}) {
        const auto& expected = test::oracle()["mini"][label];
        std::vector<ranking> run;
        for (const auto& q : topics) {
            ranking r{q.id, {}};
            for (const auto& d : expected["run"][q.id]) r.docs.push_back({d[0].get<std::string>(), d[1].get<double>()});
            run.push_back(r);
        }
        auto rep = evaluate_run(run, qrels, topics);
        CHECK(rep.map == Catch::Approx(expected["map"].get<double>()).epsilon(1e-12));
        CHECK(rep.p_at_10 == Catch::Approx(expected["p_at_10"].get<double>()).epsilon(1e-12));
        for (const auto& m : rep.per_query) CHECK(m.ap == Catch::Approx(expected["ap"][m.query_id].get<double>()).epsilon(1e-12));
    }
}

TEST_CASE("per-query CSV and aggregate JSON")
{
    auto qrels = judgments({{"q1", "a", 1}, {"q2", "b", 1}});
    auto rep = evaluate_run({make_ranking("q1", {"x", "a"}), make_ranking("q2", {"b"})}, qrels,
                            std::vector<std::string>{"q1", "q2"});
    std::ostringstream csv;
    write_per_query_csv(csv, rep);
    CHECK(csv.str() == "qid,ap,p10\nq1,0.500000,0.100000\nq2,1.000000,0.100000\n");
    test::temp_dir dir;
    auto back = read_per_query_csv(dir.write("pq.csv", csv.str()));
    CHECK(back == rep.per_query);
    CHECK_THROWS_AS(read_per_query_csv(dir.write("dup.csv", "qid,ap,p10\nq1,0.5,0.1\nq1,0.5,0.1\n")), data_error);
    CHECK_THROWS_AS(read_per_query_csv(dir.write("bad.csv", "qid,ap,p10\nq1,x,0.1\n")), data_error);
    auto j = nlohmann::json::parse(aggregate_json(rep));
    CHECK(j["map"].get<double>() == Catch::Approx(0.75));
    CHECK(j["n_queries"].get<int>() == 2);
    CHECK(format_number(0.1234565, 4) == "0.1235");
}

TEST_CASE("regularized incomplete beta")
{
    for (double x : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
        CHECK(incomplete_beta(1, 1, x) == Catch::Approx(x).margin(1e-14));
        CHECK(incomplete_beta(3.5, 1, x) == Catch::Approx(std::pow(x, 3.5)).margin(1e-13));
        CHECK(incomplete_beta(1, 2.5, x) == Catch::Approx(1 - std::pow(1 - x, 2.5)).margin(1e-13));
    }
    CHECK(incomplete_beta(7, 7, 0.5) == Catch::Approx(0.5).margin(1e-14));
    // scipy.special.betainc
    CHECK(incomplete_beta(2.5, 0.5, 0.3) == Catch::Approx(0.018927124071945658).epsilon(1e-12));
    CHECK(incomplete_beta(10, 3, 0.8) == Catch::Approx(0.5583457484800002).epsilon(1e-12));
    CHECK(incomplete_beta(0.7, 12, 0.05) == Catch::Approx(0.6146636584999626).epsilon(1e-12));
    CHECK(incomplete_beta(50, 50, 0.48) == Catch::Approx(0.3448872378754365).epsilon(1e-11));
    CHECK(incomplete_beta(1.5, 2.5, 0.999) == Catch::Approx(0.9999999356016206).epsilon(1e-12));
#ifdef KPIR_HAVE_BOOST_MATH
    for (double a : {0.5, 1.5, 4.0, 20.0}) {
        for (double b : {0.5, 2.0, 9.0}) {
            for (double x : {0.01, 0.2, 0.5, 0.8, 0.99}) {
                CHECK(incomplete_beta(a, b, x) == Catch::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-11));
            }
        }
    }
#endif
}

TEST_CASE("paired t-test")
{
    std::vector<double> a{2, 4, 6, 8, 10}, b{1, 2, 3, 4, 5};
    auto r = paired_t_test(a, b);
    CHECK(r.degrees_of_freedom == 4);
    CHECK(r.t_statistic == Catch::Approx(4.242640687119285).epsilon(1e-12));
    CHECK(r.p_value == Catch::Approx(0.013235599563682695).epsilon(1e-9));
    CHECK(r.significant_at_05);
    auto back = paired_t_test(b, a);
    CHECK(back.t_statistic == Catch::Approx(-r.t_statistic));
    CHECK(back.p_value == Catch::Approx(r.p_value));

    std::vector<double> c{0.5, 0.2, 0.9, 0.4, 0.7, 0.3}, d{0.4, 0.25, 0.6, 0.35, 0.5, 0.3};
    auto s = paired_t_test(c, d);
    CHECK(s.t_statistic == Catch::Approx(1.8786728732554487).epsilon(1e-10));
    CHECK(s.p_value == Catch::Approx(0.11907947556121057).epsilon(1e-9));
    CHECK_FALSE(s.significant_at_05);
#ifdef KPIR_HAVE_BOOST_MATH
    boost::math::students_t dist(5);
    CHECK(s.p_value == Catch::Approx(2 * boost::math::cdf(boost::math::complement(dist, s.t_statistic))).epsilon(1e-10));
#endif

    SECTION("degenerate inputs")
    {
        auto same = paired_t_test(a, a);
        CHECK(same.t_statistic == 0.0);
        CHECK(same.p_value == 1.0);
        std::vector<double> shifted{3, 5, 7, 9, 11};
        auto constant = paired_t_test(shifted, a);
        CHECK(std::isinf(constant.t_statistic));
        CHECK(constant.p_value == 0.0);
        CHECK_THROWS_AS(paired_t_test(std::vector<double>{1}, std::vector<double>{2}), data_error);
        CHECK_THROWS_AS(paired_t_test(a, std::vector<double>{1, 2}), data_error);
    }
}

TEST_CASE("F1 at k")
{
    std::vector<std::string> gold{"grammatical inference", "knowledge acquisition", "logic programming", "concept learning"};
    SECTION("two of four gold phrases at k = 5")
    {
        std::vector<std::string> pred{"grammatical inference", "documents", "Knowledge Acquisitions", "large scale", "system"};
        CHECK(f1_at_k(pred, gold) == Catch::Approx(2 * 0.4 * 0.5 / 0.9));
    }
    SECTION("identical lists")
    {
        CHECK(f1_at_k(gold, gold, 4) == Catch::Approx(1.0));
        CHECK(f1_at_k(gold, gold, 5, f1_denominator::predicted) == Catch::Approx(1.0));
        CHECK(f1_at_k(gold, gold, 5) == Catch::Approx(2 * 0.8 / 1.8));
    }
    SECTION("repeated predictions match once")
    {
        std::vector<std::string> pred{"concept learning", "concept learnings", "concept learning"};
        CHECK(f1_at_k(pred, gold, 3, f1_denominator::predicted) == Catch::Approx(2 * (1.0 / 3) * 0.25 / (1.0 / 3 + 0.25)));
    }
    SECTION("no overlap and invalid inputs")
    {
        CHECK(f1_at_k({"x"}, gold) == 0.0);
        CHECK(f1_at_k({}, gold) == 0.0);
        CHECK_THROWS_AS(f1_at_k(gold, {}), data_error);
        CHECK_THROWS_AS(f1_at_k(gold, gold, 0), usage_error);
    }
}

TEST_CASE("present and absent keyphrases")
{
    auto doc = load_corpus(test::fixture("sample_corpus.jsonl")).at(0);
    CHECK(is_present("grammatical inference", doc));
    CHECK(is_present("Grammatical Inferences", doc));
    CHECK(is_present("acquire knowledge", doc));
    CHECK(is_present("concept acquisition", doc));
    CHECK_FALSE(is_present("concept learning", doc));
    CHECK_FALSE(is_present("knowledge representation", doc));
    CHECK_FALSE(is_present("inference grammatical", doc));
    CHECK_FALSE(is_present("", doc));
    SECTION("stopwords must match too")
    {
        CHECK(is_present("knowledge from large scale", doc));
        CHECK_FALSE(is_present("knowledge large scale", doc));
    }
    SECTION("matches may span the title and abstract boundary")
    {
        CHECK(is_present("documents the purpose", doc));
    }
    SECTION("mini predictions match the oracle flags")
    {
        auto docs = load_corpus(test::fixture("mini_corpus.jsonl"));
        auto preds = load_predictions(test::fixture("mini_predictions.jsonl"));
        for (const auto& d : docs) {
            const auto& flags = test::oracle()["mini"]["present_flags"][d.id];
            const auto* list = preds.find(d.id);
            REQUIRE(list != nullptr);
            std::vector<std::string> phrases;
            for (const auto& p : *list) phrases.push_back(p.phrase);
            auto [present, absent] = split_present_absent(phrases, d);
            std::size_t expected_present = 0;
            for (std::size_t i = 0; i < phrases.size(); ++i) {
                CHECK(is_present(phrases[i], d) == flags[i].get<bool>());
                expected_present += flags[i].get<bool>() ? 1 : 0;
            }
            CHECK(present.size() == expected_present);
            CHECK(present.size() + absent.size() == phrases.size());
        }
    }
}

TEST_CASE("domain table")
{
    auto bundled = domain_table::bundled();
    REQUIRE(bundled.fields().size() == 8);
    auto loaded = domain_table::load(std::string(KPIR_DATA) + "/domain_fields.csv");
    REQUIRE(loaded.fields() == bundled.fields());
    for (const auto& f : bundled.fields()) CHECK(loaded.is_in(f) == bundled.is_in(f));
    CHECK(bundled.is_in("electricity,  information and control"));
    CHECK(bundled.is_in("SCIENCE"));
    CHECK_FALSE(bundled.is_in("Medicine and dentistry"));
    CHECK_THROWS_AS(bundled.is_in("Astrology"), data_error);

    test::temp_dir dir;
    CHECK_THROWS_AS(domain_table::load(dir.write("bad.csv", "Chemistry,maybe\n")), data_error);
    CHECK_THROWS_AS(domain_table::load(dir / "missing.csv"), data_error);

    SECTION("query split")
    {
        std::vector<query> qs;
        const std::vector<std::string> in_fields{"Chemistry", "Science", "Engineering", "Electricity, information and control"};
        const std::vector<std::string> out_fields{"Medicine and dentistry", "Biology and agriculture",
                                                  "Cultural and social science", "Architecture, civil engineering"};
        for (int i = 0; i < 49; ++i) {
            query q{"q" + std::to_string(i), "text", {}};
            if (i < 27) {
                q.research_fields = {out_fields[static_cast<std::size_t>(i) % 4], in_fields[static_cast<std::size_t>(i) % 4]};
            } else if (i < 47) {
                q.research_fields = {out_fields[static_cast<std::size_t>(i) % 4]};
            }
            qs.push_back(q);
        }
        auto [in, out] = split_queries_by_domain(qs, bundled);
        CHECK(in.size() == 27);
        CHECK(out.size() == 22);
        CHECK(in.front().id == "q0");
        CHECK(out.back().id == "q48");
    }
    SECTION("mini topics")
    {
        auto [in, out] = split_queries_by_domain(load_topics(test::fixture("mini_topics.txt")), bundled);
        std::vector<std::string> in_ids, out_ids;
        for (const auto& q : in) in_ids.push_back(q.id);
        for (const auto& q : out) out_ids.push_back(q.id);
        CHECK(in_ids == test::oracle()["mini"]["bm25.ta.n5.in_domain"]["ids"].get<std::vector<std::string>>());
        CHECK(out_ids == test::oracle()["mini"]["bm25.ta.n5.out_domain"]["ids"].get<std::vector<std::string>>());
    }
}
