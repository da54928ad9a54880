// One experiment replication end to end: train the requested estimators on
// the replication's training split, draw MC posterior samples for the
// training and test sets, score every requested rejection policy (thresholds
// are always fitted on training scores) and sweep the rejection grid.
#pragma once

#include "catekit/evaluation.hpp"
#include "catekit/models/propensity.hpp"
#include "catekit/models/train.hpp"
#include "catekit/policies.hpp"

#include <atomic>
#include <map>
#include <optional>
#include <thread>
#include <vector>

namespace catekit {

struct ExperimentSpec {
    std::string dataset_name = "dataset";
    std::vector<EstimatorKind> models{EstimatorKind::tlearner};
    std::vector<PolicyKind> policies{PolicyKind::epistemic, PolicyKind::propensity_trimming,
                                     PolicyKind::random};
    TrainConfig train;
    ModelConfig model;
    TrainConfig propensity_train;  // the propensity model may use its own budget
    std::vector<double> propensity_l2_grid = default_propensity_l2_grid();
    std::vector<double> grid = default_rejection_grid();

    bool needs_propensity() const {
        for (PolicyKind p : policies) {
            if (p == PolicyKind::propensity_quantiles || p == PolicyKind::propensity_trimming) {
                return true;
            }
        }
        return false;
    }
};

struct PolicyScoreSet {
    std::vector<double> train;
    std::vector<double> test;
};

struct ModelRun {
    EstimatorKind kind = EstimatorKind::tlearner;
    TrainedEstimator trained;
    std::vector<double> test_cate;  // posterior-mean CATE in outcome units
    std::map<PolicyKind, PolicyScoreSet> scores;
    std::map<PolicyKind, EvalCurve> curves;
};

struct ReplicationOutcome {
    std::size_t index = 0;
    std::vector<ModelRun> models;
    std::vector<double> train_propensity;  // empty unless a propensity policy ran
    std::vector<double> test_propensity;

    std::vector<ResultRow> result_rows(const std::string& dataset_name) const {
        std::vector<ResultRow> rows;
        for (const auto& run : models) {
            for (const auto& [policy, curve] : run.curves) {
                auto part = curve_to_rows(dataset_name, to_string(run.kind), curve, index);
                rows.insert(rows.end(), part.begin(), part.end());
            }
        }
        return rows;
    }
};

namespace detail {
inline void unnormalize_samples(McOutcomeSamples& s, const OutcomeScaler& scaler) {
    for (Tensor* m : {&s.mu0, &s.mu1, &s.y0, &s.y1}) {
        for (auto& v : m->values()) v = scaler.invert(v);
    }
}
}  // namespace detail

inline ReplicationOutcome run_replication(const Replication& rep, const ExperimentSpec& spec,
                                          std::size_t replication_index, Rng rng) {
    rep.train.validate();
    rep.test.validate();
    if (!rep.test.has_ground_truth()) {
        throw std::invalid_argument("replication test split lacks ground-truth effects; "
                                    "metrics cannot be computed");
    }

    ReplicationOutcome out;
    out.index = replication_index;

    // continuous outcomes are normalized on the training split only;
    // predictions are mapped back before any metric is computed
    std::optional<OutcomeScaler> scaler;
    CateDataset train = rep.train;
    if (train.outcome == OutcomeKind::continuous) {
        scaler = normalize_outcomes(train.y);
        for (auto& y : train.y) y = scaler->apply(y);
    }

    if (spec.needs_propensity()) {
        Rng prop_rng = rng.split(1000);
        const PropensityModel prop =
            train_propensity(train, spec.propensity_train, spec.model, prop_rng,
                             spec.propensity_l2_grid);
        Rng score_rng = rng.split(1001);
        out.train_propensity =
            predict_propensity(prop, train.X, spec.propensity_train.mc_samples, score_rng);
        out.test_propensity =
            predict_propensity(prop, rep.test.X, spec.propensity_train.mc_samples, score_rng);
    }

    std::vector<double> sorted_train_props = out.train_propensity;
    std::sort(sorted_train_props.begin(), sorted_train_props.end());
    CommonSupport support;
    if (!out.train_propensity.empty()) {
        std::vector<double> treated_props, control_props;
        for (std::size_t i = 0; i < train.size(); ++i) {
            (train.t[i] == 1 ? treated_props : control_props).push_back(out.train_propensity[i]);
        }
        if (!treated_props.empty() && !control_props.empty()) {
            support = common_support(treated_props, control_props);
        }
    }

    for (std::size_t mi = 0; mi < spec.models.size(); ++mi) {
        const EstimatorKind kind = spec.models[mi];
        ModelRun run;
        run.kind = kind;
        Rng train_rng = rng.split(10 + mi);
        run.trained = train_estimator(kind, train, spec.train, spec.model, train_rng);

        Rng mc_rng = rng.split(100 + mi);
        McOutcomeSamples train_samples =
            predict_mc(run.trained.estimator, train.X, spec.train.mc_samples, mc_rng);
        McOutcomeSamples test_samples =
            predict_mc(run.trained.estimator, rep.test.X, spec.train.mc_samples, mc_rng);
        if (scaler) {
            detail::unnormalize_samples(train_samples, *scaler);
            detail::unnormalize_samples(test_samples, *scaler);
        }
        run.test_cate = cate_estimate(test_samples);

        const auto train_epi = epistemic_variance(train_samples);
        const auto test_epi = epistemic_variance(test_samples);
        const auto train_pred = predictive_variance(train_samples);
        const auto test_pred = predictive_variance(test_samples);

        for (PolicyKind policy : spec.policies) {
            PolicyScoreSet set;
            switch (policy) {
                case PolicyKind::epistemic:
                    set.train = train_epi;
                    set.test = test_epi;
                    break;
                case PolicyKind::predictive:
                    set.train = train_pred;
                    set.test = test_pred;
                    break;
                case PolicyKind::propensity_quantiles: {
                    for (double p : out.train_propensity) {
                        set.train.push_back(quantile_band_score(p, sorted_train_props));
                    }
                    for (double p : out.test_propensity) {
                        set.test.push_back(quantile_band_score(p, sorted_train_props));
                    }
                    break;
                }
                case PolicyKind::propensity_trimming: {
                    for (double p : out.train_propensity) set.train.push_back(trimming_score(p, support));
                    for (double p : out.test_propensity) set.test.push_back(trimming_score(p, support));
                    break;
                }
                case PolicyKind::random: {
                    Rng r = rng.split(2000 + mi);
                    set.train = random_scores(r, train.size());
                    set.test = random_scores(r, rep.test.size());
                    break;
                }
            }
            if (set.train.empty() || set.test.empty()) {
                throw std::invalid_argument(std::string("policy ") + to_string(policy) +
                                            " has no scores (was the propensity model trained?)");
            }
            run.curves[policy] =
                sweep(policy, set.train, set.test, run.test_cate, rep.test.cate_true, spec.grid);
            run.scores[policy] = std::move(set);
        }
        out.models.push_back(std::move(run));
    }
    return out;
}

// Replication-level parallelism: body(i) for i in [0, count) across workers.
inline void parallel_for(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& body) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < std::min(workers, count); ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                    body(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace catekit
