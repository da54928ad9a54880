// Estimator construction, the shared SGD loop with validation early
// stopping, and MC-dropout posterior prediction.
#pragma once

#include "catekit/models/cevae.hpp"
#include "catekit/models/common.hpp"
#include "catekit/models/config.hpp"
#include "catekit/models/tarnet.hpp"
#include "catekit/models/tlearner.hpp"
#include "catekit/optim.hpp"

#include <functional>
#include <numeric>
#include <stdexcept>
#include <variant>
#include <vector>

namespace catekit {

struct TrainingRecord {
    std::vector<double> train_loss;  // running mean of step losses per epoch
    std::vector<double> val_loss;    // deterministic validation loss per epoch
    std::size_t best_epoch = 0;      // 1-based epoch of the restored parameters
    std::size_t epochs_run = 0;
};

struct Estimator {
    EstimatorKind kind = EstimatorKind::tlearner;
    OutcomeKind outcome = OutcomeKind::continuous;
    std::size_t input_dim = 0;
    ModelConfig model_config;
    std::variant<TLearnerModel, TarnetModel, CevaeModel> model;

    std::vector<Tensor*> parameters() {
        return std::visit([](auto& m) { return m.parameters(); }, model);
    }
    std::vector<std::pair<std::string, Tensor*>> named_parameters() {
        return std::visit([](auto& m) { return m.named_parameters(); }, model);
    }
};

inline Estimator build_estimator(EstimatorKind kind, std::size_t input_dim, OutcomeKind outcome,
                                 const ModelConfig& mc, const TrainConfig& tc, Rng& rng) {
    Estimator est;
    est.kind = kind;
    est.outcome = outcome;
    est.input_dim = input_dim;
    est.model_config = mc;
    switch (kind) {
        case EstimatorKind::tlearner:
            est.model = build_tlearner(input_dim, outcome, mc, tc, rng);
            break;
        case EstimatorKind::tarnet:
        case EstimatorKind::cfr_mmd:
        case EstimatorKind::dragonnet:
            est.model = build_tarnet(input_dim, outcome, kind, mc, tc, rng);
            break;
        case EstimatorKind::cevae:
            est.model = build_cevae(input_dim, outcome, mc, tc, rng);
            break;
    }
    return est;
}

// ---- shared SGD loop ----------------------------------------------------------

// step(batch_rows, grads) -> loss; validation() -> deterministic loss.
inline TrainingRecord run_sgd(const std::vector<Tensor*>& params, std::size_t n_train,
                              const TrainConfig& tc, double learning_rate, double weight_decay,
                              Rng& rng,
                              const std::function<double(const std::vector<std::size_t>&,
                                                         std::vector<Tensor>&)>& step,
                              const std::function<double()>& validation) {
    AdamState adam = AdamState::init(params, learning_rate, weight_decay);
    TrainingRecord record;
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params;
    std::size_t epochs_since_best = 0;
    std::vector<Tensor> grads;

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n_train; start += tc.batch_size) {
            const std::size_t stop = std::min(start + tc.batch_size, n_train);
            std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
            epoch_loss += step(rows, grads);
            adam_step(params, grads, adam);
            ++steps;
        }
        record.train_loss.push_back(epoch_loss / static_cast<double>(steps));
        const double val = validation();
        record.val_loss.push_back(val);
        record.epochs_run = epoch;

        if (val < best_val - tc.min_delta || record.best_epoch == 0) {
            best_val = val;
            record.best_epoch = epoch;
            best_params.clear();
            for (const Tensor* p : params) best_params.push_back(*p);
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best > tc.patience) break;
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = best_params[i];
    return record;
}

// 70/30-style train/validation row split of the provided training data.
inline void split_train_validation(std::size_t n, double validation_fraction, Rng& rng,
                                   std::vector<std::size_t>& train_rows,
                                   std::vector<std::size_t>& val_rows) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    val_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
}

struct TrainedEstimator {
    Estimator estimator;
    TrainingRecord record;
};

inline TrainedEstimator train_estimator(EstimatorKind kind, const CateDataset& dataset,
                                        const TrainConfig& tc, const ModelConfig& mc, Rng& rng) {
    tc.validate();
    mc.validate();
    dataset.validate();
    const std::size_t n = dataset.size();
    if (kind != EstimatorKind::cevae) {
        const std::size_t treated = dataset.treated_count();
        if (treated == 0 || treated == n) {
            throw std::invalid_argument(std::string("cannot train ") + to_string(kind) +
                                        ": dataset has units in only one arm");
        }
    }

    std::vector<std::size_t> train_rows, val_rows;
    split_train_validation(n, tc.validation_fraction, rng, train_rows, val_rows);
    const CateDataset train = dataset.subset(train_rows);
    const CateDataset val = dataset.subset(val_rows);
    const Batch val_batch = make_batch(val, [&] {
        std::vector<std::size_t> all(val.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }());

    TrainedEstimator out;
    out.estimator = build_estimator(kind, dataset.feature_count(), dataset.outcome, mc, tc, rng);
    Estimator& est = out.estimator;

    double lr = tc.learning_rate;
    if (kind == EstimatorKind::cevae && mc.cevae_learning_rate > 0.0) lr = mc.cevae_learning_rate;
    const double wd = tc.weight_decay_scale / static_cast<double>(train.size());

    auto step = [&](const std::vector<std::size_t>& rows, std::vector<Tensor>& grads) {
        const Batch batch = make_batch(train, rows);
        return std::visit(
            [&](auto& m) -> double {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, TLearnerModel>) {
                    return tlearner_step_loss(m, batch, rng, grads);
                } else if constexpr (std::is_same_v<M, TarnetModel>) {
                    return tarnet_step_loss(m, batch, rng, grads);
                } else {
                    return cevae_step_loss(m, batch, rng, grads);
                }
            },
            est.model);
    };
    auto validation = [&]() {
        return std::visit(
            [&](const auto& m) -> double {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, TLearnerModel>) {
                    return tlearner_eval_loss(m, val_batch);
                } else if constexpr (std::is_same_v<M, TarnetModel>) {
                    return tarnet_eval_loss(m, val_batch);
                } else {
                    return cevae_eval_loss(m, val_batch);
                }
            },
            est.model);
    };

    out.record = run_sgd(est.parameters(), train.size(), tc, lr, wd, rng, step, validation);
    return out;
}

// ---- MC prediction --------------------------------------------------------------

// M parameter draws; per draw the expected outcomes of both arms and K
// output-distribution samples around them.
inline McOutcomeSamples predict_mc(const Estimator& est, const Tensor& x, std::size_t m, Rng& rng,
                                   std::size_t inner_draws = 1) {
    if (m == 0) throw std::invalid_argument("predict_mc requires M >= 1");
    if (inner_draws == 0) throw std::invalid_argument("predict_mc requires K >= 1");
    McAccumulator acc(m, inner_draws, x.rows());
    Tensor mu0_col, mu1_col;
    for (std::size_t j = 0; j < m; ++j) {
        double sd0 = 0.0, sd1 = 0.0;
        std::visit(
            [&](const auto& model) {
                using M = std::decay_t<decltype(model)>;
                if constexpr (std::is_same_v<M, TLearnerModel>) {
                    tlearner_predict_draw(model, x, rng, mu0_col, mu1_col);
                    sd0 = std::exp(0.5 * model.log_var0.item());
                    sd1 = std::exp(0.5 * model.log_var1.item());
                } else if constexpr (std::is_same_v<M, TarnetModel>) {
                    tarnet_predict_draw(model, x, rng, mu0_col, mu1_col);
                    sd0 = std::exp(0.5 * model.log_var0.item());
                    sd1 = std::exp(0.5 * model.log_var1.item());
                } else {
                    cevae_predict_draw(model, x, rng, mu0_col, mu1_col);
                    sd0 = std::exp(0.5 * model.dec_log_var0.item());
                    sd1 = std::exp(0.5 * model.dec_log_var1.item());
                }
            },
            est.model);
        acc.set_mu(j, mu0_col, mu1_col);
        acc.sample_outcomes(j, mu0_col, mu1_col, est.outcome, sd0, sd1, rng);
    }
    acc.samples.validate();
    return acc.samples;
}

}  // namespace catekit
