#include <catch2/catch_amalgamated.hpp>

#include "catekit/rng.hpp"
#include "catekit/uncertainty.hpp"

#include <cmath>
#include <vector>

using namespace catekit;

namespace {

McOutcomeSamples make_samples(std::size_t m, std::size_t k, std::size_t n, Rng& rng,
                              double scale = 1.0) {
    McOutcomeSamples s;
    s.draw_count = m;
    s.inner_draw_count = k;
    s.mu0 = Tensor(Shape{m, n});
    s.mu1 = Tensor(Shape{m, n});
    s.y0 = Tensor(Shape{m * k, n});
    s.y1 = Tensor(Shape{m * k, n});
    for (auto& v : s.mu0.values()) v = scale * rng.uniform(-2, 2);
    for (auto& v : s.mu1.values()) v = scale * rng.uniform(-2, 2);
    for (auto& v : s.y0.values()) v = scale * rng.uniform(-2, 2);
    for (auto& v : s.y1.values()) v = scale * rng.uniform(-2, 2);
    return s;
}

// independent oracle: the raw two-term estimator E[d^2] - E[d]^2, evaluated
// in extended precision
double two_term_variance_oracle(const std::vector<double>& diffs) {
    long double s1 = 0.0L, s2 = 0.0L;
    for (double d : diffs) {
        s1 += d;
        s2 += static_cast<long double>(d) * d;
    }
    const auto m = static_cast<long double>(diffs.size());
    return static_cast<double>(s2 / m - (s1 / m) * (s1 / m));
}

}  // namespace

TEST_CASE("epistemic variance: trivial and derived cases") {
    McOutcomeSamples s;
    s.draw_count = 2;
    s.inner_draw_count = 1;
    SECTION("all draws identical gives zero") {
        s.mu0 = Tensor(Shape{2, 3}, 0.4);
        s.mu1 = Tensor(Shape{2, 3}, 0.9);
        s.y0 = s.mu0;
        s.y1 = s.mu1;
        for (double v : epistemic_variance(s)) CHECK(v == 0.0);
    }
    SECTION("diffs [1,-1] give variance 1") {
        s.mu1 = Tensor::matrix(2, 1, {1.0, 0.0});
        s.mu0 = Tensor::matrix(2, 1, {0.0, 1.0});
        s.y0 = s.mu0;
        s.y1 = s.mu1;
        const auto v = epistemic_variance(s);
        CHECK_THAT(v[0], Catch::Matchers::WithinAbs(1.0, 1e-15));
    }
    SECTION("fewer than two draws is an error") {
        s.draw_count = 1;
        s.mu0 = Tensor(Shape{1, 2});
        s.mu1 = Tensor(Shape{1, 2});
        s.y0 = s.mu0;
        s.y1 = s.mu1;
        CHECK_THROWS_AS(epistemic_variance(s), std::invalid_argument);
    }
}

TEST_CASE("variance estimators match the two-term oracle on random tables") {
    Rng rng(77);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t m = 2 + rng.below(16);
        const std::size_t n = 1 + rng.below(5);
        McOutcomeSamples s = make_samples(m, 1, n, rng);
        const auto epi = epistemic_variance(s);
        const auto pred = predictive_variance(s);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> mu_diffs, y_diffs;
            for (std::size_t j = 0; j < m; ++j) {
                mu_diffs.push_back(s.mu1.at(j, i) - s.mu0.at(j, i));
                y_diffs.push_back(s.y1.at(j, i) - s.y0.at(j, i));
            }
            CHECK_THAT(epi[i], Catch::Matchers::WithinAbs(two_term_variance_oracle(mu_diffs), 1e-12));
            CHECK_THAT(pred[i], Catch::Matchers::WithinAbs(two_term_variance_oracle(y_diffs), 1e-12));
        }
    }
}

TEST_CASE("variance scales quadratically and ignores draw order") {
    Rng rng(31);
    McOutcomeSamples s = make_samples(12, 1, 4, rng);
    const auto base = epistemic_variance(s);

    McOutcomeSamples scaled = s;
    const double c = 3.7;
    for (auto& v : scaled.mu0.values()) v *= c;
    for (auto& v : scaled.mu1.values()) v *= c;
    const auto up = epistemic_variance(scaled);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK_THAT(up[i], Catch::Matchers::WithinRel(c * c * base[i], 1e-10));
    }

    // permute draw rows
    McOutcomeSamples perm = s;
    std::vector<std::size_t> order(12);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t j = 0; j < order.size(); ++j) {
        for (std::size_t i = 0; i < 4; ++i) {
            perm.mu0.at(j, i) = s.mu0.at(order[j], i);
            perm.mu1.at(j, i) = s.mu1.at(order[j], i);
        }
    }
    const auto shuffled = epistemic_variance(perm);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK_THAT(shuffled[i], Catch::Matchers::WithinAbs(base[i], 1e-13));
    }
}

TEST_CASE("predictive variance of independent bernoulli arms") {
    // constant means, Bernoulli(0.5) outcomes per arm: Var(Y1-Y0) = 0.5
    Rng rng(5);
    const std::size_t m = 10000;
    McOutcomeSamples s;
    s.draw_count = m;
    s.inner_draw_count = 1;
    s.mu0 = Tensor(Shape{m, 1}, 0.5);
    s.mu1 = Tensor(Shape{m, 1}, 0.5);
    s.y0 = Tensor(Shape{m, 1});
    s.y1 = Tensor(Shape{m, 1});
    for (auto& v : s.y0.values()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    for (auto& v : s.y1.values()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    // 3 standard errors of the variance estimate at M=1e4
    CHECK_THAT(predictive_variance(s)[0], Catch::Matchers::WithinAbs(0.5, 0.02));
    for (double v : predictive_variance(s)) CHECK(v >= 0.0);
}

TEST_CASE("grouped decomposition: identity and degenerate cases") {
    SECTION("zero within-group spread means aleatoric 0") {
        Rng rng(9);
        McOutcomeSamples s = make_samples(6, 3, 2, rng);
        // make all inner draws equal to the group's first row
        for (std::size_t j = 0; j < 6; ++j) {
            for (std::size_t r = 1; r < 3; ++r) {
                for (std::size_t i = 0; i < 2; ++i) {
                    s.y0.at(j * 3 + r, i) = s.y0.at(j * 3, i);
                    s.y1.at(j * 3 + r, i) = s.y1.at(j * 3, i);
                }
            }
        }
        const auto report = decompose_variance(s, 3);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(report.aleatoric[i] == 0.0);
            CHECK(report.total[i] == report.epistemic[i]);
        }
    }
    SECTION("zero between-group spread means epistemic 0") {
        Rng rng(10);
        McOutcomeSamples s = make_samples(5, 4, 2, rng);
        // copy group 0 pattern into every group
        for (std::size_t j = 1; j < 5; ++j) {
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t i = 0; i < 2; ++i) {
                    s.y0.at(j * 4 + r, i) = s.y0.at(r, i);
                    s.y1.at(j * 4 + r, i) = s.y1.at(r, i);
                }
            }
        }
        const auto report = decompose_variance(s, 4);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK_THAT(report.epistemic[i], Catch::Matchers::WithinAbs(0.0, 1e-14));
            CHECK_THAT(report.total[i], Catch::Matchers::WithinAbs(report.aleatoric[i], 1e-14));
        }
    }
    SECTION("random table matches brute-force law of total variance") {
        Rng rng(11);
        McOutcomeSamples s = make_samples(8, 8, 3, rng);
        const auto report = decompose_variance(s, 8);
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<double> all;
            for (std::size_t row = 0; row < 64; ++row) all.push_back(s.y1.at(row, i) - s.y0.at(row, i));
            CHECK_THAT(report.total[i],
                       Catch::Matchers::WithinAbs(two_term_variance_oracle(all), 1e-12));
            CHECK_THAT(report.total[i],
                       Catch::Matchers::WithinAbs(report.epistemic[i] + report.aleatoric[i], 1e-12));
            CHECK(report.epistemic[i] >= 0.0);
            CHECK(report.aleatoric[i] >= 0.0);
        }
    }
    SECTION("K < 2 is an error") {
        Rng rng(12);
        McOutcomeSamples s = make_samples(4, 1, 2, rng);
        CHECK_THROWS_AS(decompose_variance(s, 1), std::invalid_argument);
    }
}

TEST_CASE("mutual information analytic cases") {
    CHECK(mutual_information({0.5, 0.5, 0.5}) == 0.0);
    CHECK_THAT(mutual_information({0.0, 0.0, 1.0, 1.0}),
               Catch::Matchers::WithinRel(std::log(2.0), 1e-12));
    CHECK(mutual_information({0.73}) == 0.0);
    CHECK_THROWS_AS(mutual_information({}), std::invalid_argument);

    // bounds: 0 <= MI <= ln 2 on random draws
    Rng rng(13);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> draws(1 + rng.below(20));
        for (auto& p : draws) p = rng.uniform();
        const double mi = mutual_information(draws);
        CHECK(mi >= 0.0);
        CHECK(mi <= std::log(2.0) + 1e-12);
    }
}

TEST_CASE("cate estimate") {
    McOutcomeSamples s;
    s.draw_count = 3;
    s.inner_draw_count = 1;
    s.mu1 = Tensor(Shape{3, 2}, 1.0);
    s.mu0 = Tensor(Shape{3, 2}, 0.0);
    s.y0 = Tensor(Shape{3, 2});
    s.y1 = Tensor(Shape{3, 2}, 1.0);
    const auto est = cate_estimate(s);
    CHECK(est[0] == 1.0);
    CHECK(est[1] == 1.0);

    Rng rng(14);
    McOutcomeSamples r = make_samples(9, 1, 3, rng);
    const auto got = cate_estimate(r);
    for (std::size_t i = 0; i < 3; ++i) {
        long double acc = 0.0L;
        for (std::size_t j = 0; j < 9; ++j) acc += r.mu1.at(j, i) - r.mu0.at(j, i);
        CHECK_THAT(got[i], Catch::Matchers::WithinAbs(static_cast<double>(acc / 9.0L), 1e-14));
    }
}
