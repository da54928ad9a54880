#include <catch2/catch_amalgamated.hpp>

#include "catekit/evaluation.hpp"
#include "catekit/rng.hpp"

#include <cmath>
#include <sstream>

using namespace catekit;

TEST_CASE("pehe hand computations") {
    std::vector<bool> all{true, true};
    CHECK(pehe({1, 1}, {1, 1}, all) == 0.0);
    CHECK_THAT(pehe({1, 1}, {-1, 1}, all), Catch::Matchers::WithinRel(std::sqrt(2.0), 1e-12));
    CHECK(pehe({1, 1}, {-1, 1}, {false, true}) == 0.0);
    CHECK_THROWS_AS(pehe({1, 1}, {-1, 1}, {false, false}), std::invalid_argument);
}

TEST_CASE("pehe is invariant under joint permutation") {
    Rng rng(3);
    std::vector<double> pred(20), truth(20);
    std::vector<bool> mask(20);
    for (std::size_t i = 0; i < 20; ++i) {
        pred[i] = rng.normal();
        truth[i] = rng.normal();
        mask[i] = rng.bernoulli(0.7);
    }
    mask[0] = true;
    const double base = pehe(pred, truth, mask);
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<double> pred2(20), truth2(20);
    std::vector<bool> mask2(20);
    for (std::size_t i = 0; i < 20; ++i) {
        pred2[i] = pred[order[i]];
        truth2[i] = truth[order[i]];
        mask2[i] = mask[order[i]];
    }
    CHECK_THAT(pehe(pred2, truth2, mask2), Catch::Matchers::WithinRel(base, 1e-12));
}

TEST_CASE("ate error reports absolute and squared error") {
    std::vector<bool> all{true, true};
    CHECK(ate_error({1, 1}, {1, 1}, all).absolute == 0.0);
    // means cancel
    CHECK(ate_error({2, 0}, {1, 1}, all).absolute == 0.0);
    const auto e = ate_error({2, 2}, {1, 1}, all);
    CHECK(e.absolute == 1.0);
    CHECK(e.squared == 1.0);
}

TEST_CASE("recommendation error rate counting") {
    std::vector<bool> all{true, true, true, true};
    CHECK(recommendation_error_rate({1, 0, 1, 0}, {1, -1, 2, -3}, all) == 0.0);
    CHECK(recommendation_error_rate({0, 1, 0, 1}, {1, -1, 2, -3}, all) == 1.0);
    CHECK(recommendation_error_rate({1, 0, 0, 0}, {1, -1, 2, -3}, all) == 0.25);
    CHECK_THROWS_AS(recommendation_error_rate({1}, {1.0}, std::vector<bool>{false}),
                    std::invalid_argument);
}

TEST_CASE("sweep over the rejection grid") {
    Rng rng(9);
    const std::size_t n_train = 80, n_test = 60;
    std::vector<double> train_scores(n_train), test_scores(n_test), pred(n_test), truth(n_test);
    for (auto& s : train_scores) s = rng.uniform();
    for (std::size_t i = 0; i < n_test; ++i) {
        test_scores[i] = rng.uniform();
        truth[i] = rng.normal();
        pred[i] = truth[i] + 0.3 * rng.normal();
    }
    const EvalCurve curve = sweep(PolicyKind::epistemic, train_scores, test_scores, pred, truth);
    REQUIRE(curve.points.size() == 21);
    CHECK(curve.points.front().r_nominal == 0.0);
    CHECK(curve.points.back().r_nominal == 1.0);

    // r = 0 reproduces the unrejected metrics bit for bit
    std::vector<bool> all(n_test, true);
    std::vector<int> recs;
    for (double c : pred) recs.push_back(recommend(c));
    REQUIRE(curve.points[0].pehe.has_value());
    CHECK(*curve.points[0].pehe == pehe(pred, truth, all));
    CHECK(*curve.points[0].rec_error == recommendation_error_rate(recs, truth, all));

    // retained sets shrink (nesting) so realized rates are nondecreasing
    for (std::size_t p = 1; p < curve.points.size(); ++p) {
        CHECK(curve.points[p].r_realized >= curve.points[p - 1].r_realized);
    }

    // the full-rejection point is absent-valued
    CHECK_FALSE(curve.points.back().pehe.has_value());
    CHECK_FALSE(curve.points.back().rec_error.has_value());
}

TEST_CASE("aggregate across replications") {
    EvalCurve a, b;
    a.policy = b.policy = PolicyKind::random;
    EvalPoint p1;
    p1.r_nominal = 0.0;
    p1.rec_error = 0.1;
    p1.pehe = 1.0;
    EvalPoint p2 = p1;
    p2.rec_error = 0.3;
    p2.pehe = 1.0;
    a.points = {p1};
    b.points = {p2};

    SECTION("two curves: mean and SE") {
        const auto agg = aggregate({a, b});
        REQUIRE(agg.size() == 1);
        CHECK_THAT(agg[0].rec_error_mean, Catch::Matchers::WithinRel(0.2, 1e-12));
        CHECK_THAT(agg[0].rec_error_se, Catch::Matchers::WithinRel(0.1, 1e-12));
        CHECK(agg[0].pehe_se == 0.0);
        CHECK(agg[0].rec_error_count == 2);
    }
    SECTION("single replication: SE is zero by convention") {
        const auto agg = aggregate({a});
        CHECK(agg[0].rec_error_se == 0.0);
        CHECK(agg[0].rec_error_count == 1);
    }
    SECTION("identical curves agree with either") {
        const auto agg = aggregate({a, a});
        CHECK(agg[0].rec_error_mean == 0.1);
        CHECK(agg[0].rec_error_se == 0.0);
    }
    SECTION("absent points are excluded pairwise") {
        EvalPoint absent;
        absent.r_nominal = 0.0;
        EvalCurve c;
        c.policy = PolicyKind::random;
        c.points = {absent};
        const auto agg = aggregate({a, c});
        CHECK(agg[0].rec_error_count == 1);
        CHECK(agg[0].rec_error_mean == 0.1);
    }
}

TEST_CASE("results csv round trip") {
    std::vector<ResultRow> rows;
    ResultRow r;
    r.dataset = "toy1d";
    r.model = "tlearner";
    r.policy = "epistemic";
    r.replication = 3;
    r.r_nominal = 0.25;
    r.r_realized = 0.23;
    r.rec_error = 0.125;
    r.pehe = 1.5;
    rows.push_back(r);
    r.replication = 4;
    r.rec_error.reset();
    r.pehe.reset();
    rows.push_back(r);

    std::ostringstream os;
    write_result_rows(os, rows);
    const auto path = std::string("/tmp/catekit_results_test.csv");
    {
        std::ofstream f(path);
        f << os.str();
    }
    const auto back = read_result_rows(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].dataset == "toy1d");
    CHECK(back[0].replication == 3);
    CHECK(back[0].rec_error.has_value());
    CHECK(*back[0].pehe == 1.5);
    CHECK_FALSE(back[1].rec_error.has_value());
    CHECK_FALSE(back[1].pehe.has_value());
}
