// Shared pieces of the concrete estimators: batches, arm splits, the MMD
// penalty, and the MC sample container plumbing.
#pragma once

#include "catekit/autodiff.hpp"
#include "catekit/dataset.hpp"
#include "catekit/losses.hpp"
#include "catekit/nn.hpp"
#include "catekit/rng.hpp"
#include "catekit/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace catekit {

struct Batch {
    Tensor X;               // n x D
    Tensor y;               // n x 1
    std::vector<int> t;

    std::size_t size() const { return t.size(); }
};

inline Batch make_batch(const CateDataset& ds, const std::vector<std::size_t>& rows) {
    Batch b;
    const std::size_t d = ds.feature_count();
    b.X = Tensor(Shape{rows.size(), d});
    b.y = Tensor(Shape{rows.size(), 1});
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t j = 0; j < d; ++j) b.X.at(k, j) = ds.X.at(rows[k], j);
        b.y.at(k, 0) = ds.y[rows[k]];
        b.t.push_back(ds.t[rows[k]]);
    }
    return b;
}

namespace detail {
inline void push_zero_grads(const Mlp& net, std::vector<Tensor>& grads) {
    for (const auto& l : net.layers) {
        grads.emplace_back(l.weights.shape());
        grads.emplace_back(l.bias.shape());
    }
}
}  // namespace detail

inline std::vector<std::size_t> arm_rows(const std::vector<int>& t, int arm) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == arm) rows.push_back(i);
    }
    return rows;
}

inline Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows) {
    Tensor out(Shape{rows.size(), m.cols()});
    for (std::size_t k = 0; k < rows.size(); ++k)
        for (std::size_t j = 0; j < m.cols(); ++j) out.at(k, j) = m.at(rows[k], j);
    return out;
}

// ---- maximum mean discrepancy ------------------------------------------------

// Biased squared MMD with an RBF kernel of the given bandwidth sigma.
inline double mmd2(const Tensor& repr_a, const Tensor& repr_b, double bandwidth) {
    if (repr_a.rank() != 2 || repr_b.rank() != 2 || repr_a.cols() != repr_b.cols()) {
        throw std::invalid_argument("mmd2: representation shape mismatch");
    }
    if (repr_a.rows() == 0 || repr_b.rows() == 0) {
        throw std::invalid_argument("mmd2: empty representation set");
    }
    if (bandwidth <= 0.0) throw std::invalid_argument("mmd2: bandwidth must be positive");
    const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    auto mean_kernel = [gamma](const Tensor& u, const Tensor& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < u.rows(); ++i) {
            for (std::size_t j = 0; j < v.rows(); ++j) {
                double d2 = 0.0;
                for (std::size_t k = 0; k < u.cols(); ++k) {
                    const double d = u.at(i, k) - v.at(j, k);
                    d2 += d * d;
                }
                s += std::exp(-gamma * d2);
            }
        }
        return s / static_cast<double>(u.rows() * v.rows());
    };
    const double m = mean_kernel(repr_a, repr_a) + mean_kernel(repr_b, repr_b) -
                     2.0 * mean_kernel(repr_a, repr_b);
    return std::max(0.0, m);
}

// Median-heuristic bandwidth: sigma = sqrt(median(pairwise squared dist)/2).
inline double median_heuristic_bandwidth(const Tensor& repr_a, const Tensor& repr_b) {
    std::vector<double> d2s;
    d2s.reserve(repr_a.rows() * repr_b.rows());
    for (std::size_t i = 0; i < repr_a.rows(); ++i) {
        for (std::size_t j = 0; j < repr_b.rows(); ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < repr_a.cols(); ++k) {
                const double d = repr_a.at(i, k) - repr_b.at(j, k);
                d2 += d * d;
            }
            d2s.push_back(d2);
        }
    }
    if (d2s.empty()) return 1.0;
    std::nth_element(d2s.begin(), d2s.begin() + static_cast<std::ptrdiff_t>(d2s.size() / 2),
                     d2s.end());
    const double med = d2s[d2s.size() / 2];
    return std::max(std::sqrt(med / 2.0), 1e-6);
}

// Recorded version used in the CFR training objective.
inline Var mmd2_var(Tape& tape, Var repr_a, Var repr_b, double bandwidth) {
    const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    Var kaa = tape.mean(tape.exp(tape.scale(tape.pairwise_sqdist(repr_a, repr_a), -gamma)));
    Var kbb = tape.mean(tape.exp(tape.scale(tape.pairwise_sqdist(repr_b, repr_b), -gamma)));
    Var kab = tape.mean(tape.exp(tape.scale(tape.pairwise_sqdist(repr_a, repr_b), -gamma)));
    return tape.add(tape.add(kaa, kbb), tape.scale(kab, -2.0));
}

// ---- MC sample assembly -------------------------------------------------------

struct McAccumulator {
    McOutcomeSamples samples;

    McAccumulator(std::size_t m, std::size_t k, std::size_t n) {
        samples.draw_count = m;
        samples.inner_draw_count = k;
        samples.mu0 = Tensor(Shape{m, n});
        samples.mu1 = Tensor(Shape{m, n});
        samples.y0 = Tensor(Shape{m * k, n});
        samples.y1 = Tensor(Shape{m * k, n});
    }

    // mu columns are (n x 1) network outputs for draw j
    void set_mu(std::size_t j, const Tensor& mu0_col, const Tensor& mu1_col) {
        for (std::size_t i = 0; i < mu0_col.size(); ++i) {
            samples.mu0.at(j, i) = mu0_col[i];
            samples.mu1.at(j, i) = mu1_col[i];
        }
    }

    // draw K outcome samples per unit around the draw-j means
    void sample_outcomes(std::size_t j, const Tensor& mu0_col, const Tensor& mu1_col,
                         OutcomeKind kind, double sd0, double sd1, Rng& rng) {
        const std::size_t k = samples.inner_draw_count;
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t row = j * k + r;
            for (std::size_t i = 0; i < mu0_col.size(); ++i) {
                if (kind == OutcomeKind::binary) {
                    samples.y0.at(row, i) = rng.bernoulli(std::clamp(mu0_col[i], 0.0, 1.0)) ? 1.0 : 0.0;
                    samples.y1.at(row, i) = rng.bernoulli(std::clamp(mu1_col[i], 0.0, 1.0)) ? 1.0 : 0.0;
                } else {
                    samples.y0.at(row, i) = rng.normal(mu0_col[i], sd0);
                    samples.y1.at(row, i) = rng.normal(mu1_col[i], sd1);
                }
            }
        }
    }
};

}  // namespace catekit
