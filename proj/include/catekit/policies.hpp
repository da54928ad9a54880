// Recommendation-withholding (rejection) policies.
//
// Every policy is reduced to a per-unit score where higher means "withhold
// first": epistemic / predictive use the CATE uncertainty directly,
// propensity quantiles use the two-sided distance from the median of the
// training propensity distribution, propensity trimming uses the signed
// distance to the common-support interval, and random uses seeded uniforms.
// Thresholds are always fitted on training scores and applied to test
// scores; realized test rejection rates may deviate from the nominal rate.
#pragma once

#include "catekit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

enum class PolicyKind { epistemic, predictive, propensity_quantiles, propensity_trimming, random };

inline const char* to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::epistemic: return "epistemic";
        case PolicyKind::predictive: return "predictive";
        case PolicyKind::propensity_quantiles: return "propensity_quantiles";
        case PolicyKind::propensity_trimming: return "propensity_trimming";
        case PolicyKind::random: return "random";
    }
    return "?";
}

inline PolicyKind parse_policy_kind(const std::string& s) {
    if (s == "epistemic") return PolicyKind::epistemic;
    if (s == "predictive") return PolicyKind::predictive;
    if (s == "propensity_quantiles") return PolicyKind::propensity_quantiles;
    if (s == "propensity_trimming") return PolicyKind::propensity_trimming;
    if (s == "random") return PolicyKind::random;
    throw std::invalid_argument("unknown policy kind: " + s);
}

struct RejectionDecision {
    PolicyKind kind = PolicyKind::random;
    std::vector<double> scores;
    double threshold = 0.0;
    std::vector<bool> withheld;
    double nominal_rate = 0.0;
    double realized_rate = 0.0;

    std::size_t withheld_count() const {
        return static_cast<std::size_t>(std::count(withheld.begin(), withheld.end(), true));
    }
};

// Empirical (1 - r) quantile: with k = round(r*N) units to reject, the
// threshold is the (N-k)-th smallest score; -infinity when everything goes.
inline double fit_threshold(const std::vector<double>& train_scores, double r_rej) {
    if (train_scores.empty()) throw std::invalid_argument("fit_threshold on empty scores");
    if (r_rej < 0.0 || r_rej > 1.0) {
        throw std::invalid_argument("rejection rate " + std::to_string(r_rej) + " outside [0,1]");
    }
    const std::size_t n = train_scores.size();
    const std::size_t reject = static_cast<std::size_t>(std::llround(r_rej * static_cast<double>(n)));
    const std::size_t keep = n - std::min(reject, n);
    if (keep == 0) return -std::numeric_limits<double>::infinity();
    std::vector<double> sorted = train_scores;
    std::sort(sorted.begin(), sorted.end());
    return sorted[keep - 1];
}

// Withhold where score > threshold; among units tied exactly at the
// threshold, withhold in stable input order until round(r*N) is reached.
inline RejectionDecision apply_threshold(PolicyKind kind, const std::vector<double>& scores,
                                         double threshold, double r_rej) {
    if (scores.empty()) throw std::invalid_argument("apply_threshold on empty scores");
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("non-finite policy score");
    }
    RejectionDecision d;
    d.kind = kind;
    d.scores = scores;
    d.threshold = threshold;
    d.nominal_rate = r_rej;
    d.withheld.assign(scores.size(), false);
    std::size_t count = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > threshold) {
            d.withheld[i] = true;
            ++count;
        }
    }
    const std::size_t target =
        static_cast<std::size_t>(std::llround(r_rej * static_cast<double>(scores.size())));
    for (std::size_t i = 0; i < scores.size() && count < target; ++i) {
        if (!d.withheld[i] && scores[i] == threshold) {
            d.withheld[i] = true;
            ++count;
        }
    }
    d.realized_rate = static_cast<double>(count) / static_cast<double>(scores.size());
    return d;
}

// ---- propensity-based scores ------------------------------------------------

// Common-support interval by the minima-maxima rule over the two arms'
// training propensities.
struct CommonSupport {
    double lo = 0.0;
    double hi = 1.0;
};

inline CommonSupport common_support(const std::vector<double>& treated_propensities,
                                    const std::vector<double>& control_propensities) {
    if (treated_propensities.empty() || control_propensities.empty()) {
        throw std::invalid_argument("common_support requires units in both arms");
    }
    auto [tmin, tmax] = std::minmax_element(treated_propensities.begin(), treated_propensities.end());
    auto [cmin, cmax] = std::minmax_element(control_propensities.begin(), control_propensities.end());
    return CommonSupport{std::max(*tmin, *cmin), std::min(*tmax, *cmax)};
}

// Signed distance outside the common-support interval: positive outside
// (larger rejects first), inside units carry the negative margin to the
// nearest boundary so a fixed rejection rate can still be met.
inline double trimming_score(double propensity, const CommonSupport& support) {
    return std::max(support.lo - propensity, propensity - support.hi);
}

inline double trimming_score(double propensity, const std::vector<double>& treated_propensities,
                             const std::vector<double>& control_propensities) {
    return trimming_score(propensity, common_support(treated_propensities, control_propensities));
}

// Two-sided quantile score: absolute distance of the unit's mid-rank in the
// training propensity distribution from 0.5. Thresholding the top r of these
// scores rejects outside the [r/2, 1-r/2] training quantiles.
inline double quantile_band_score(double propensity, const std::vector<double>& sorted_train) {
    if (sorted_train.empty()) throw std::invalid_argument("quantile_band_score: empty training set");
    const auto lower = std::lower_bound(sorted_train.begin(), sorted_train.end(), propensity);
    const auto upper = std::upper_bound(sorted_train.begin(), sorted_train.end(), propensity);
    const double below = static_cast<double>(lower - sorted_train.begin());
    const double equal = static_cast<double>(upper - lower);
    const double cdf = (below + 0.5 * equal) / static_cast<double>(sorted_train.size());
    return std::abs(cdf - 0.5);
}

inline std::vector<double> random_scores(Rng& rng, std::size_t n) {
    std::vector<double> s(n);
    for (auto& x : s) x = rng.uniform();
    return s;
}

// ---- recommendation ---------------------------------------------------------

// Treat when the estimated effect is strictly positive; an exact zero
// recommends control.
inline int recommend(double cate_value) {
    if (std::isnan(cate_value)) throw std::invalid_argument("recommend on NaN CATE estimate");
    return cate_value > 0.0 ? 1 : 0;
}

// ---- export -----------------------------------------------------------------

inline void write_policy_csv(std::ostream& os, const RejectionDecision& d,
                             const std::vector<int>& recommendations) {
    if (recommendations.size() != d.scores.size()) {
        throw std::invalid_argument("write_policy_csv: recommendation count mismatch");
    }
    os << "unit_id,score,threshold,withheld,recommendation\n";
    char buf[64];
    for (std::size_t i = 0; i < d.scores.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", d.scores[i]);
        os << i << "," << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", d.threshold);
        os << buf << "," << (d.withheld[i] ? 1 : 0) << "," << recommendations[i] << "\n";
    }
}

}  // namespace catekit
