// Evaluation metrics, rejection-rate sweeps and cross-replication
// aggregation.
//
// Results CSV schema (one row per grid point):
//   dataset,model,policy,replication,r_nominal,r_realized,rec_error,pehe
// Grid points where every test unit is withheld carry empty metric cells
// rather than fabricated zeros.
#pragma once

#include "catekit/policies.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

inline std::vector<double> default_rejection_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(static_cast<double>(i) * 0.05);
    return grid;
}

// Root of the mean squared difference between predicted and true effects
// over retained units.
inline double pehe(const std::vector<double>& pred_cate, const std::vector<double>& cate_true,
                   const std::vector<bool>& retained) {
    if (pred_cate.size() != cate_true.size() || pred_cate.size() != retained.size()) {
        throw std::invalid_argument("pehe: length mismatch");
    }
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred_cate.size(); ++i) {
        if (!retained[i]) continue;
        const double d = pred_cate[i] - cate_true[i];
        s += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("pehe: no retained units");
    return std::sqrt(s / static_cast<double>(n));
}

struct AteError {
    double absolute = 0.0;
    double squared = 0.0;
};

inline AteError ate_error(const std::vector<double>& pred_cate, const std::vector<double>& cate_true,
                          const std::vector<bool>& retained) {
    if (pred_cate.size() != cate_true.size() || pred_cate.size() != retained.size()) {
        throw std::invalid_argument("ate_error: length mismatch");
    }
    double sp = 0.0, st = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred_cate.size(); ++i) {
        if (!retained[i]) continue;
        sp += pred_cate[i];
        st += cate_true[i];
        ++n;
    }
    if (n == 0) throw std::invalid_argument("ate_error: no retained units");
    const double diff = (sp - st) / static_cast<double>(n);
    return AteError{std::abs(diff), diff * diff};
}

// Fraction of retained units whose recommendation disagrees with the true
// effect's sign (zero effects recommend control, matching recommend()).
inline double recommendation_error_rate(const std::vector<int>& recommendations,
                                        const std::vector<double>& cate_true,
                                        const std::vector<bool>& retained) {
    if (recommendations.size() != cate_true.size() || recommendations.size() != retained.size()) {
        throw std::invalid_argument("recommendation_error_rate: length mismatch");
    }
    std::size_t wrong = 0, n = 0;
    for (std::size_t i = 0; i < recommendations.size(); ++i) {
        if (!retained[i]) continue;
        const int best = cate_true[i] > 0.0 ? 1 : 0;
        wrong += recommendations[i] != best;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("recommendation_error_rate: no retained units");
    return static_cast<double>(wrong) / static_cast<double>(n);
}

struct EvalPoint {
    double r_nominal = 0.0;
    double r_realized = 0.0;
    std::optional<double> rec_error;
    std::optional<double> pehe;
};

struct EvalCurve {
    PolicyKind policy = PolicyKind::random;
    std::vector<EvalPoint> points;
};

// Fit a threshold per grid point on the training scores, apply it to the
// test scores, and compute both metrics over the retained test units.
inline EvalCurve sweep(PolicyKind kind, const std::vector<double>& train_scores,
                       const std::vector<double>& test_scores,
                       const std::vector<double>& test_pred_cate,
                       const std::vector<double>& test_cate_true,
                       const std::vector<double>& grid = default_rejection_grid()) {
    if (test_scores.size() != test_pred_cate.size() || test_scores.size() != test_cate_true.size()) {
        throw std::invalid_argument("sweep: test length mismatch");
    }
    std::vector<int> recommendations;
    recommendations.reserve(test_pred_cate.size());
    for (double c : test_pred_cate) recommendations.push_back(recommend(c));

    EvalCurve curve;
    curve.policy = kind;
    for (double r : grid) {
        const double threshold = fit_threshold(train_scores, r);
        const RejectionDecision d = apply_threshold(kind, test_scores, threshold, r);
        EvalPoint pt;
        pt.r_nominal = r;
        pt.r_realized = d.realized_rate;
        std::vector<bool> retained(d.withheld.size());
        bool any = false;
        for (std::size_t i = 0; i < d.withheld.size(); ++i) {
            retained[i] = !d.withheld[i];
            any = any || retained[i];
        }
        if (any) {
            pt.rec_error = recommendation_error_rate(recommendations, test_cate_true, retained);
            pt.pehe = pehe(test_pred_cate, test_cate_true, retained);
        }
        curve.points.push_back(pt);
    }
    return curve;
}

struct AggregatePoint {
    double r_nominal = 0.0;
    double rec_error_mean = 0.0, rec_error_se = 0.0;
    double pehe_mean = 0.0, pehe_se = 0.0;
    std::size_t rec_error_count = 0;  // replications contributing to each metric
    std::size_t pehe_count = 0;
};

// Pointwise mean and standard error (sample std / sqrt(R)) across curves;
// absent points are excluded per metric. A single replication reports SE 0.
inline std::vector<AggregatePoint> aggregate(const std::vector<EvalCurve>& curves) {
    if (curves.empty()) throw std::invalid_argument("aggregate: no curves");
    const std::size_t npts = curves.front().points.size();
    for (const auto& c : curves) {
        if (c.points.size() != npts) throw std::invalid_argument("aggregate: grid length mismatch");
    }
    std::vector<AggregatePoint> out(npts);
    for (std::size_t p = 0; p < npts; ++p) {
        out[p].r_nominal = curves.front().points[p].r_nominal;
        auto fold = [&](auto getter, double& mean, double& se, std::size_t& count) {
            std::vector<double> vals;
            for (const auto& c : curves) {
                const auto v = getter(c.points[p]);
                if (v.has_value()) vals.push_back(*v);
            }
            count = vals.size();
            if (vals.empty()) return;
            double m = 0.0;
            for (double v : vals) m += v;
            m /= static_cast<double>(vals.size());
            mean = m;
            if (vals.size() < 2) {
                se = 0.0;
                return;
            }
            double var = 0.0;
            for (double v : vals) var += (v - m) * (v - m);
            var /= static_cast<double>(vals.size() - 1);
            se = std::sqrt(var / static_cast<double>(vals.size()));
        };
        fold([](const EvalPoint& pt) { return pt.rec_error; }, out[p].rec_error_mean,
             out[p].rec_error_se, out[p].rec_error_count);
        fold([](const EvalPoint& pt) { return pt.pehe; }, out[p].pehe_mean, out[p].pehe_se,
             out[p].pehe_count);
    }
    return out;
}

// ---- results CSV ---------------------------------------------------------------

struct ResultRow {
    std::string dataset;
    std::string model;
    std::string policy;
    std::size_t replication = 0;
    double r_nominal = 0.0;
    double r_realized = 0.0;
    std::optional<double> rec_error;
    std::optional<double> pehe;
};

inline const char* kResultsCsvHeader = "dataset,model,policy,replication,r_nominal,r_realized,rec_error,pehe";

inline void write_result_rows(std::ostream& os, const std::vector<ResultRow>& rows,
                              bool with_header = true) {
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };
    if (with_header) os << kResultsCsvHeader << "\n";
    for (const auto& r : rows) {
        os << r.dataset << "," << r.model << "," << r.policy << "," << r.replication << ","
           << fmt(r.r_nominal) << "," << fmt(r.r_realized) << ","
           << (r.rec_error ? fmt(*r.rec_error) : "") << "," << (r.pehe ? fmt(*r.pehe) : "") << "\n";
    }
}

inline std::vector<ResultRow> read_result_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open results csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty results csv: " + path);
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 8) cells.emplace_back();
        ResultRow r;
        r.dataset = cells[0];
        r.model = cells[1];
        r.policy = cells[2];
        r.replication = std::stoul(cells[3]);
        r.r_nominal = std::stod(cells[4]);
        r.r_realized = std::stod(cells[5]);
        if (!cells[6].empty()) r.rec_error = std::stod(cells[6]);
        if (!cells[7].empty()) r.pehe = std::stod(cells[7]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ResultRow> curve_to_rows(const std::string& dataset, const std::string& model,
                                            const EvalCurve& curve, std::size_t replication) {
    std::vector<ResultRow> rows;
    for (const auto& pt : curve.points) {
        ResultRow r;
        r.dataset = dataset;
        r.model = model;
        r.policy = to_string(curve.policy);
        r.replication = replication;
        r.r_nominal = pt.r_nominal;
        r.r_realized = pt.r_realized;
        r.rec_error = pt.rec_error;
        r.pehe = pt.pehe;
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace catekit
