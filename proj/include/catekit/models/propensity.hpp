// Propensity model: a single T-Learner branch with sigmoid output, trained
// with BCE; its L2 weight decay is picked from a small grid by validation
// expected calibration error.
#pragma once

#include "catekit/models/common.hpp"
#include "catekit/models/config.hpp"
#include "catekit/models/train.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace catekit {

struct PropensityModel {
    Mlp net;
    double l2_scale = 0.0;  // chosen weight-decay scale (decay = scale / n_train)

    std::vector<Tensor*> parameters() { return net.parameters(); }
};

// 10-bin expected calibration error of probability predictions.
inline double expected_calibration_error(const std::vector<double>& probs,
                                         const std::vector<int>& labels,
                                         std::size_t bins = 10) {
    if (probs.size() != labels.size() || probs.empty()) {
        throw std::invalid_argument("expected_calibration_error: bad inputs");
    }
    std::vector<double> conf(bins, 0.0), acc(bins, 0.0), count(bins, 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        auto b = static_cast<std::size_t>(probs[i] * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        conf[b] += probs[i];
        acc[b] += labels[i];
        count[b] += 1.0;
    }
    double ece = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0.0) continue;
        ece += count[b] / static_cast<double>(probs.size()) *
               std::abs(acc[b] / count[b] - conf[b] / count[b]);
    }
    return ece;
}

inline const std::vector<double>& default_propensity_l2_grid() {
    static const std::vector<double> grid{0.01, 1.0, 100.0};
    return grid;
}

namespace detail {
inline PropensityModel train_propensity_once(const CateDataset& dataset, const TrainConfig& tc,
                                             const ModelConfig& mc, double l2_scale, Rng& rng,
                                             double& out_ece) {
    std::vector<std::size_t> train_rows, val_rows;
    split_train_validation(dataset.size(), tc.validation_fraction, rng, train_rows, val_rows);
    const CateDataset train = dataset.subset(train_rows);
    const CateDataset val = dataset.subset(val_rows);

    MlpSpec spec;
    spec.input_dim = dataset.feature_count();
    spec.hidden.assign(mc.tlearner_depth, mc.tlearner_width);
    spec.output_dim = 1;
    spec.output_activation = Activation::sigmoid;
    spec.dropout_hidden = tc.dropout_hidden;
    spec.dropout_pre_output = tc.dropout_pre_output;

    PropensityModel model;
    model.net = make_mlp(rng, spec);
    model.l2_scale = l2_scale;

    auto target_of = [](const CateDataset& ds, const std::vector<std::size_t>& rows) {
        Tensor t(Shape{rows.size(), 1});
        for (std::size_t k = 0; k < rows.size(); ++k) t.at(k, 0) = ds.t[rows[k]];
        return t;
    };
    std::vector<std::size_t> val_all(val.size());
    std::iota(val_all.begin(), val_all.end(), std::size_t{0});
    const Tensor val_target = target_of(val, val_all);

    auto step = [&](const std::vector<std::size_t>& rows, std::vector<Tensor>& grads) {
        Tensor xb(Shape{rows.size(), train.feature_count()});
        Tensor tb(Shape{rows.size(), 1});
        for (std::size_t k = 0; k < rows.size(); ++k) {
            for (std::size_t j = 0; j < train.feature_count(); ++j) xb.at(k, j) = train.X.at(rows[k], j);
            tb.at(k, 0) = train.t[rows[k]];
        }
        Tape tape;
        const auto masks = sample_dropout_masks(rng, model.net);
        MlpVars vars = mlp_forward(tape, model.net, tape.leaf(xb), &masks);
        Var loss = tape.loss_bce(vars.output, tb);
        tape.backward(loss);
        grads.clear();
        collect_mlp_grads(tape, vars, grads);
        return tape.value(loss).item();
    };
    auto validation = [&]() { return loss_bce(mlp_forward(model.net, val.X), val_target); };

    const double wd = l2_scale / static_cast<double>(train.size());
    run_sgd(model.parameters(), train.size(), tc, tc.learning_rate, wd, rng, step, validation);

    const Tensor val_pred = mlp_forward(model.net, val.X);
    std::vector<double> probs(val_pred.values().begin(), val_pred.values().end());
    out_ece = expected_calibration_error(probs, val.t);
    return model;
}
}  // namespace detail

inline PropensityModel train_propensity(const CateDataset& dataset, const TrainConfig& tc,
                                        const ModelConfig& mc, Rng& rng,
                                        const std::vector<double>& l2_grid =
                                            default_propensity_l2_grid()) {
    tc.validate();
    dataset.validate();
    const std::size_t treated = dataset.treated_count();
    if (treated == 0 || treated == dataset.size()) {
        throw std::invalid_argument("cannot train a propensity model on single-class treatments");
    }
    if (l2_grid.empty()) throw std::invalid_argument("empty propensity L2 grid");

    PropensityModel best;
    double best_ece = std::numeric_limits<double>::infinity();
    for (double l2 : l2_grid) {
        double ece = 0.0;
        Rng candidate_rng = rng.split(static_cast<std::uint64_t>(l2 * 1e6) ^ 0x9e37);
        PropensityModel candidate =
            detail::train_propensity_once(dataset, tc, mc, l2, candidate_rng, ece);
        if (ece < best_ece) {
            best_ece = ece;
            best = std::move(candidate);
        }
    }
    return best;
}

// Mean predicted propensity over M dropout draws; strictly inside (0,1).
inline std::vector<double> predict_propensity(const PropensityModel& model, const Tensor& x,
                                              std::size_t m, Rng& rng) {
    if (m == 0) throw std::invalid_argument("predict_propensity requires M >= 1");
    std::vector<double> mean(x.rows(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const auto masks = sample_dropout_masks(rng, model.net);
        const Tensor out = mlp_forward(model.net, x, &masks);
        for (std::size_t i = 0; i < x.rows(); ++i) mean[i] += out.at(i, 0);
    }
    for (auto& p : mean) p /= static_cast<double>(m);
    return mean;
}

}  // namespace catekit
