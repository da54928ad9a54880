// One-dimensional overlap toy benchmark: control units live on [-6,-1],
// treated units on [1,6], so each arm's far side is a non-overlap region and
// the gap (-1,1) is out-of-distribution for both. Outcome probabilities are
// opposite-slope logistics, so the true effect changes sign across the
// support.
#pragma once

#include "catekit/dataset.hpp"
#include "catekit/rng.hpp"

#include <cmath>
#include <vector>

namespace catekit {

constexpr double kToy1dControlLo = -6.0, kToy1dControlHi = -1.0;
constexpr double kToy1dTreatedLo = 1.0, kToy1dTreatedHi = 6.0;

inline double toy1d_mu0(double x) { return 1.0 / (1.0 + std::exp(-0.8 * x)); }
inline double toy1d_mu1(double x) { return 1.0 / (1.0 + std::exp(0.8 * x)); }

// strata: 0 = control support, 1 = treated support
inline CateDataset generate_toy1d(Rng& rng, std::size_t n_per_region) {
    CateDataset ds;
    ds.outcome = OutcomeKind::binary;
    ds.feature_names = {"x"};
    const std::size_t n = 2 * n_per_region;
    ds.X = Tensor(Shape{n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        const bool treated = i >= n_per_region;
        const double x = treated ? rng.uniform(kToy1dTreatedLo, kToy1dTreatedHi)
                                 : rng.uniform(kToy1dControlLo, kToy1dControlHi);
        const double mu0 = toy1d_mu0(x), mu1 = toy1d_mu1(x);
        ds.X.at(i, 0) = x;
        ds.t.push_back(treated ? 1 : 0);
        ds.y.push_back(rng.bernoulli(treated ? mu1 : mu0) ? 1.0 : 0.0);
        ds.mu0_true.push_back(mu0);
        ds.mu1_true.push_back(mu1);
        ds.cate_true.push_back(mu1 - mu0);
        ds.strata.push_back(treated ? 1 : 0);
    }
    ds.validate();
    return ds;
}

}  // namespace catekit
