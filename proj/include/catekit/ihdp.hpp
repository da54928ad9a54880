// IHDP benchmark loader and the covariate-shift transform.
//
// On-disk format: one CSV per replication named ihdp_rep_<k>.csv (k from 1),
// columns in order x1..x25, t, y_factual, y_cfactual, mu0, mu1, with 747
// rows. A conversion recipe from the published array bundle is in the repo
// docs. Each replication is split into 75 test rows and 672 training rows
// with the replication's own deterministic stream.
#pragma once

#include "catekit/csv.hpp"
#include "catekit/dataset.hpp"
#include "catekit/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

constexpr std::size_t kIhdpCovariates = 25;
constexpr std::size_t kIhdpTestSize = 75;

inline std::string ihdp_replication_path(const std::string& dir, std::size_t k) {
    return dir + "/ihdp_rep_" + std::to_string(k) + ".csv";
}

inline CateDataset load_ihdp_csv(const std::string& path) {
    CsvTable table = read_csv(path);
    if (table.header.size() != kIhdpCovariates + 5) {
        throw std::invalid_argument("ihdp: expected " + std::to_string(kIhdpCovariates + 5) +
                                    " columns, got " + std::to_string(table.header.size()) + " in " +
                                    path);
    }
    CsvColumnMap map;
    map.treatment = table.header[kIhdpCovariates];
    map.outcome = table.header[kIhdpCovariates + 1];
    map.ignore = {table.header[kIhdpCovariates + 2]};  // counterfactual outcome, unused
    map.mu0 = table.header[kIhdpCovariates + 3];
    map.mu1 = table.header[kIhdpCovariates + 4];
    map.outcome_kind = OutcomeKind::continuous;
    return dataset_from_table(table, map);
}

inline std::vector<Replication> load_ihdp(const std::string& dir, std::size_t replication_count,
                                          std::uint64_t seed = 0,
                                          std::size_t test_size = kIhdpTestSize) {
    std::vector<Replication> reps;
    reps.reserve(replication_count);
    Rng root(seed);
    for (std::size_t k = 1; k <= replication_count; ++k) {
        CateDataset all = load_ihdp_csv(ihdp_replication_path(dir, k));
        if (all.size() <= test_size) {
            throw std::invalid_argument("ihdp: replication " + std::to_string(k) + " has only " +
                                        std::to_string(all.size()) + " rows");
        }
        Rng stream = root.split(k);
        std::vector<std::size_t> order(all.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        stream.shuffle(order);
        std::vector<std::size_t> test_rows(order.begin(), order.begin() + test_size);
        std::vector<std::size_t> train_rows(order.begin() + test_size, order.end());
        std::sort(test_rows.begin(), test_rows.end());
        std::sort(train_rows.begin(), train_rows.end());
        Replication rep;
        rep.seed = stream.seed();
        rep.train = all.subset(train_rows);
        rep.test = all.subset(test_rows);
        reps.push_back(std::move(rep));
    }
    return reps;
}

// Covariate-shift variant: drop training rows where the given binary feature
// takes drop_value, then hide that feature column from both splits. Test
// rows are untouched.
inline Replication make_covariate_shift(const Replication& rep, std::size_t feature_index,
                                        double drop_value = 0.0) {
    const std::size_t d = rep.train.feature_count();
    if (feature_index >= d) {
        throw std::invalid_argument("covariate shift: feature index " +
                                    std::to_string(feature_index) + " out of range");
    }
    for (const CateDataset* ds : {&rep.train, &rep.test}) {
        for (std::size_t i = 0; i < ds->size(); ++i) {
            const double v = ds->X.at(i, feature_index);
            if (v != 0.0 && v != 1.0) {
                throw std::invalid_argument("covariate shift: feature " +
                                            std::to_string(feature_index) + " is not binary (value " +
                                            format_double(v) + ")");
            }
        }
    }
    auto drop_column = [feature_index](const CateDataset& ds) {
        CateDataset out = ds;
        out.X = Tensor(Shape{ds.size(), ds.feature_count() - 1});
        for (std::size_t i = 0; i < ds.size(); ++i) {
            std::size_t jj = 0;
            for (std::size_t j = 0; j < ds.feature_count(); ++j) {
                if (j == feature_index) continue;
                out.X.at(i, jj++) = ds.X.at(i, j);
            }
        }
        if (!out.feature_names.empty()) {
            out.feature_names.erase(out.feature_names.begin() +
                                    static_cast<std::ptrdiff_t>(feature_index));
        }
        return out;
    };

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < rep.train.size(); ++i) {
        if (rep.train.X.at(i, feature_index) != drop_value) kept.push_back(i);
    }
    if (kept.empty()) throw std::invalid_argument("covariate shift drops every training row");

    Replication out;
    out.seed = rep.seed;
    out.normalization = rep.normalization;
    out.train = drop_column(rep.train.subset(kept));
    out.test = drop_column(rep.test);
    return out;
}

}  // namespace catekit
