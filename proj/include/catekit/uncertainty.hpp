// Epistemic / aleatoric / total uncertainty of the treatment-effect estimate,
// computed from Monte-Carlo dropout samples.
//
// Conventions: population (1/M) variances throughout, so the grouped
// decomposition "total = epistemic + aleatoric" is an exact identity, and
// entropies are in nats.
#pragma once

#include "catekit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

// M posterior draws per unit and arm. mu0/mu1 hold the expected-outcome
// draws (M x N); y0/y1 hold output-distribution draws grouped by parameter
// draw, K consecutive rows per draw ((M*K) x N).
struct McOutcomeSamples {
    Tensor mu0, mu1;
    Tensor y0, y1;
    std::size_t draw_count = 0;        // M
    std::size_t inner_draw_count = 1;  // K

    std::size_t unit_count() const { return mu0.rank() == 2 ? mu0.cols() : 0; }

    void validate() const {
        if (mu0.rank() != 2 || !mu0.same_shape(mu1)) {
            throw std::invalid_argument("McOutcomeSamples: mu draws must be matching M x N matrices");
        }
        if (!y0.same_shape(y1) || y0.rank() != 2 || y0.cols() != mu0.cols()) {
            throw std::invalid_argument("McOutcomeSamples: y draws must be (M*K) x N matrices");
        }
        if (mu0.rows() != draw_count || y0.rows() != draw_count * inner_draw_count) {
            throw std::invalid_argument("McOutcomeSamples: row counts disagree with M=" +
                                        std::to_string(draw_count) + ", K=" +
                                        std::to_string(inner_draw_count));
        }
        if (!mu0.all_finite() || !mu1.all_finite() || !y0.all_finite() || !y1.all_finite()) {
            throw std::invalid_argument("McOutcomeSamples: non-finite draw");
        }
    }
};

struct UncertaintyReport {
    std::vector<double> epistemic;   // Var over parameter draws of the CATE estimate
    std::vector<double> total;       // predictive variance of Y1 - Y0
    std::vector<double> aleatoric;   // expected within-draw outcome variance
    std::vector<double> cate;        // posterior-mean CATE estimate
    std::vector<double> mutual_info; // per-arm BALD summed over arms; binary outcomes only
};

namespace detail {
// Two-pass population variance of diffs across rows, one result per column.
// Means are accumulated relative to the first row's diff so identical draws
// give exactly zero variance.
inline std::vector<double> column_diff_variance(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> mean(n, 0.0), var(n, 0.0);
    for (std::size_t j = 1; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            mean[i] += (a.at(j, i) - b.at(j, i)) - (a.at(0, i) - b.at(0, i));
        }
    for (std::size_t i = 0; i < n; ++i) {
        mean[i] = (a.at(0, i) - b.at(0, i)) + mean[i] / static_cast<double>(m);
    }
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (a.at(j, i) - b.at(j, i)) - mean[i];
            var[i] += d * d;
        }
    for (auto& x : var) x /= static_cast<double>(m);
    return var;
}
}  // namespace detail

// Variance over parameter draws of mu1 - mu0, per unit (the sample-based
// epistemic estimator, in its numerically stable two-pass form).
inline std::vector<double> epistemic_variance(const McOutcomeSamples& samples) {
    samples.validate();
    if (samples.draw_count < 2) {
        throw std::invalid_argument("epistemic_variance requires at least 2 draws");
    }
    return detail::column_diff_variance(samples.mu1, samples.mu0);
}

// Same estimator over output-distribution draws y1 - y0.
inline std::vector<double> predictive_variance(const McOutcomeSamples& samples) {
    samples.validate();
    if (samples.y0.rows() < 2) {
        throw std::invalid_argument("predictive_variance requires at least 2 draws");
    }
    return detail::column_diff_variance(samples.y1, samples.y0);
}

inline std::vector<double> cate_estimate(const McOutcomeSamples& samples) {
    samples.validate();
    if (samples.draw_count < 1) throw std::invalid_argument("cate_estimate requires draws");
    const std::size_t m = samples.mu0.rows(), n = samples.mu0.cols();
    std::vector<double> mean(n, 0.0);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) mean[i] += samples.mu1.at(j, i) - samples.mu0.at(j, i);
    for (auto& x : mean) x /= static_cast<double>(m);
    return mean;
}

// BALD mutual information for a single unit's binary-outcome probability
// draws: H(mean p) - mean H(p), in nats.
inline double mutual_information(const std::vector<double>& p_samples) {
    if (p_samples.empty()) throw std::invalid_argument("mutual_information of empty draws");
    auto entropy = [](double p) {
        p = std::clamp(p, 0.0, 1.0);
        double h = 0.0;
        if (p > 0.0) h -= p * std::log(p);
        if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
        return h;
    };
    double mean_p = 0.0, mean_h = 0.0;
    for (double p : p_samples) {
        mean_p += p;
        mean_h += entropy(p);
    }
    mean_p /= static_cast<double>(p_samples.size());
    mean_h /= static_cast<double>(p_samples.size());
    return std::max(0.0, entropy(mean_p) - mean_h);
}

// Law-of-total-variance decomposition over y draws grouped by parameter draw.
// Requires K >= 2 inner draws per group; the identity
// total == epistemic + aleatoric holds exactly.
inline UncertaintyReport decompose_variance(const McOutcomeSamples& samples, std::size_t k) {
    samples.validate();
    if (k < 2) throw std::invalid_argument("decompose_variance: aleatoric undefined for K < 2");
    if (k != samples.inner_draw_count) {
        throw std::invalid_argument("decompose_variance: K=" + std::to_string(k) +
                                    " but samples carry K=" + std::to_string(samples.inner_draw_count));
    }
    const std::size_t m = samples.draw_count;
    const std::size_t n = samples.unit_count();
    UncertaintyReport report;
    report.total = predictive_variance(samples);
    report.cate = cate_estimate(samples);
    report.epistemic.assign(n, 0.0);
    report.aleatoric.assign(n, 0.0);
    std::vector<double> group_means(m);
    for (std::size_t i = 0; i < n; ++i) {
        double grand = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            // mean computed relative to the group's first value, so a group of
            // identical draws yields its value exactly
            const double base = samples.y1.at(j * k, i) - samples.y0.at(j * k, i);
            double shift = 0.0;
            for (std::size_t r = 1; r < k; ++r) {
                const std::size_t row = j * k + r;
                shift += (samples.y1.at(row, i) - samples.y0.at(row, i)) - base;
            }
            const double gm = base + shift / static_cast<double>(k);
            group_means[j] = gm;
            grand += gm;
        }
        grand /= static_cast<double>(m);
        double between = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double d = group_means[j] - grand;
            between += d * d;
        }
        between /= static_cast<double>(m);
        double within = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t r = 0; r < k; ++r) {
                const std::size_t row = j * k + r;
                const double d = (samples.y1.at(row, i) - samples.y0.at(row, i)) - group_means[j];
                within += d * d;
            }
        }
        within /= static_cast<double>(m * k);
        report.epistemic[i] = between;
        report.aleatoric[i] = within;
        // keep the decomposition identity exact in floating point
        report.total[i] = between + within;
    }
    return report;
}

}  // namespace catekit
