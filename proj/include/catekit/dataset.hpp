// Observational CATE dataset: covariates, binary treatments, factual
// outcomes, and (for synthetic benchmarks) the ground-truth expected
// potential outcomes.
#pragma once

#include "catekit/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

enum class OutcomeKind { binary, continuous };

inline const char* to_string(OutcomeKind k) {
    return k == OutcomeKind::binary ? "binary" : "continuous";
}

struct CateDataset {
    Tensor X;                // N x D
    std::vector<int> t;      // binary treatment
    std::vector<double> y;   // factual outcome
    std::vector<double> mu0_true;  // empty when unknown
    std::vector<double> mu1_true;
    std::vector<double> cate_true;
    std::vector<std::string> feature_names;
    OutcomeKind outcome = OutcomeKind::continuous;
    // generator metadata (digit class for CEMNIST, region for toy data);
    // never shown to models
    std::vector<int> strata;

    std::size_t size() const { return t.size(); }
    std::size_t feature_count() const { return X.rank() == 2 ? X.cols() : 0; }
    bool has_ground_truth() const { return !mu0_true.empty() && !mu1_true.empty(); }

    void validate() const {
        const std::size_t n = t.size();
        if (n == 0) throw std::invalid_argument("dataset is empty");
        if (X.rank() != 2 || X.rows() != n || y.size() != n) {
            throw std::invalid_argument("dataset row counts disagree");
        }
        for (int ti : t) {
            if (ti != 0 && ti != 1) {
                throw std::invalid_argument("treatment value " + std::to_string(ti) +
                                            " is not binary");
            }
        }
        if (!mu0_true.empty() && (mu0_true.size() != n || mu1_true.size() != n)) {
            throw std::invalid_argument("ground-truth outcome length mismatch");
        }
        if (!cate_true.empty()) {
            if (cate_true.size() != n) throw std::invalid_argument("cate_true length mismatch");
            if (has_ground_truth()) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (cate_true[i] != mu1_true[i] - mu0_true[i]) {
                        throw std::invalid_argument("cate_true differs from mu1_true - mu0_true at row " +
                                                    std::to_string(i));
                    }
                }
            }
        }
        if (!strata.empty() && strata.size() != n) {
            throw std::invalid_argument("strata length mismatch");
        }
        if (!X.all_finite()) throw std::invalid_argument("non-finite covariate");
    }

    CateDataset subset(const std::vector<std::size_t>& rows) const {
        CateDataset out;
        out.outcome = outcome;
        out.feature_names = feature_names;
        const std::size_t d = feature_count();
        out.X = Tensor(Shape{rows.size(), d});
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const std::size_t i = rows[k];
            for (std::size_t j = 0; j < d; ++j) out.X.at(k, j) = X.at(i, j);
            out.t.push_back(t[i]);
            out.y.push_back(y[i]);
            if (!mu0_true.empty()) out.mu0_true.push_back(mu0_true[i]);
            if (!mu1_true.empty()) out.mu1_true.push_back(mu1_true[i]);
            if (!cate_true.empty()) out.cate_true.push_back(cate_true[i]);
            if (!strata.empty()) out.strata.push_back(strata[i]);
        }
        return out;
    }

    std::size_t treated_count() const {
        std::size_t c = 0;
        for (int ti : t) c += ti == 1;
        return c;
    }
};

// Affine outcome normalization fitted on training outcomes only.
struct OutcomeScaler {
    double mean = 0.0;
    double stddev = 1.0;

    double apply(double y) const { return (y - mean) / stddev; }
    double invert(double z) const { return z * stddev + mean; }
};

inline OutcomeScaler normalize_outcomes(const std::vector<double>& train_y) {
    if (train_y.empty()) throw std::invalid_argument("normalize_outcomes on empty outcomes");
    double mean = 0.0;
    for (double v : train_y) mean += v;
    mean /= static_cast<double>(train_y.size());
    double var = 0.0;
    for (double v : train_y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(train_y.size());
    const double sd = std::sqrt(var);
    if (sd <= 0.0) throw std::invalid_argument("normalize_outcomes: zero outcome variance");
    return OutcomeScaler{mean, sd};
}

struct Replication {
    CateDataset train;
    CateDataset test;
    std::uint64_t seed = 0;
    std::optional<OutcomeScaler> normalization;
};

}  // namespace catekit
