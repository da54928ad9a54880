// Deep T-Learner: one outcome network per arm, trained on that arm's units.
#pragma once

#include "catekit/models/common.hpp"
#include "catekit/models/config.hpp"

#include <string>
#include <utility>
#include <vector>

namespace catekit {

struct TLearnerModel {
    Mlp mu0_net;
    Mlp mu1_net;
    OutcomeKind outcome = OutcomeKind::continuous;
    Tensor log_var0 = Tensor::scalar(0.0);  // continuous outcomes only
    Tensor log_var1 = Tensor::scalar(0.0);

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps = mu0_net.parameters();
        for (Tensor* p : mu1_net.parameters()) ps.push_back(p);
        if (outcome == OutcomeKind::continuous) {
            ps.push_back(&log_var0);
            ps.push_back(&log_var1);
        }
        return ps;
    }

    std::vector<std::pair<std::string, Tensor*>> named_parameters() {
        std::vector<std::pair<std::string, Tensor*>> out;
        auto add_net = [&out](const std::string& prefix, Mlp& net) {
            for (std::size_t i = 0; i < net.layers.size(); ++i) {
                out.emplace_back(prefix + ".layer" + std::to_string(i) + ".weights",
                                 &net.layers[i].weights);
                out.emplace_back(prefix + ".layer" + std::to_string(i) + ".bias",
                                 &net.layers[i].bias);
            }
        };
        add_net("mu0_net", mu0_net);
        add_net("mu1_net", mu1_net);
        if (outcome == OutcomeKind::continuous) {
            out.emplace_back("log_var0", &log_var0);
            out.emplace_back("log_var1", &log_var1);
        }
        return out;
    }
};

inline TLearnerModel build_tlearner(std::size_t input_dim, OutcomeKind outcome,
                                    const ModelConfig& mc, const TrainConfig& tc, Rng& rng) {
    MlpSpec spec;
    spec.input_dim = input_dim;
    spec.hidden.assign(mc.tlearner_depth, mc.tlearner_width);
    spec.output_dim = 1;
    spec.output_activation = outcome == OutcomeKind::binary ? Activation::sigmoid
                                                            : Activation::identity;
    spec.dropout_hidden = tc.dropout_hidden;
    spec.dropout_pre_output = tc.dropout_pre_output;
    TLearnerModel model;
    model.outcome = outcome;
    model.mu0_net = make_mlp(rng, spec);
    model.mu1_net = make_mlp(rng, spec);
    return model;
}

namespace detail {
// Outcome loss of one arm's network on that arm's rows, recorded on the tape.
inline Var arm_outcome_loss(Tape& tape, Mlp& net, Tensor* log_var, OutcomeKind outcome,
                            const Tensor& x_arm, const Tensor& y_arm,
                            const std::vector<Tensor>* masks, MlpVars& vars_out, Var& log_var_var) {
    Var x = tape.leaf(x_arm);
    vars_out = mlp_forward(tape, net, x, masks);
    if (outcome == OutcomeKind::binary) {
        return tape.loss_bce(vars_out.output, y_arm);
    }
    log_var_var = tape.leaf(*log_var);
    return tape.loss_gaussian_nll(vars_out.output, log_var_var, y_arm);
}
}  // namespace detail

// One SGD step's loss and gradients (aligned with parameters() order).
inline double tlearner_step_loss(TLearnerModel& model, const Batch& batch, Rng& rng,
                                 std::vector<Tensor>& grads) {
    Tape tape;
    const auto rows0 = arm_rows(batch.t, 0);
    const auto rows1 = arm_rows(batch.t, 1);
    const double n = static_cast<double>(batch.size());

    Var total{};
    MlpVars vars0, vars1;
    Var lv0{}, lv1{};
    std::vector<Tensor> masks0, masks1;
    if (!rows0.empty()) {
        masks0 = sample_dropout_masks_rows(rng, model.mu0_net, rows0.size());
        Var l0 = detail::arm_outcome_loss(tape, model.mu0_net, &model.log_var0, model.outcome,
                                          gather_rows(batch.X, rows0), gather_rows(batch.y, rows0),
                                          &masks0, vars0, lv0);
        total = tape.scale(l0, static_cast<double>(rows0.size()) / n);
    }
    if (!rows1.empty()) {
        masks1 = sample_dropout_masks_rows(rng, model.mu1_net, rows1.size());
        Var l1 = detail::arm_outcome_loss(tape, model.mu1_net, &model.log_var1, model.outcome,
                                          gather_rows(batch.X, rows1), gather_rows(batch.y, rows1),
                                          &masks1, vars1, lv1);
        Var scaled = tape.scale(l1, static_cast<double>(rows1.size()) / n);
        total = total.valid() ? tape.add(total, scaled) : scaled;
    }
    tape.backward(total);

    grads.clear();
    if (!rows0.empty()) collect_mlp_grads(tape, vars0, grads);
    else detail::push_zero_grads(model.mu0_net, grads);
    if (!rows1.empty()) collect_mlp_grads(tape, vars1, grads);
    else detail::push_zero_grads(model.mu1_net, grads);
    if (model.outcome == OutcomeKind::continuous) {
        grads.push_back(lv0.valid() ? tape.grad(lv0) : Tensor(Shape{}, std::vector<double>{0.0}));
        grads.push_back(lv1.valid() ? tape.grad(lv1) : Tensor(Shape{}, std::vector<double>{0.0}));
    }
    return tape.value(total).item();
}

// Deterministic (mask-free) loss; used for validation early stopping.
inline double tlearner_eval_loss(const TLearnerModel& model, const Batch& batch) {
    const auto rows0 = arm_rows(batch.t, 0);
    const auto rows1 = arm_rows(batch.t, 1);
    const double n = static_cast<double>(batch.size());
    double total = 0.0;
    auto arm_loss = [&](const Mlp& net, const Tensor& lv, const std::vector<std::size_t>& rows) {
        if (rows.empty()) return 0.0;
        const Tensor pred = mlp_forward(net, gather_rows(batch.X, rows));
        const Tensor y = gather_rows(batch.y, rows);
        const double w = static_cast<double>(rows.size()) / n;
        if (model.outcome == OutcomeKind::binary) return w * loss_bce(pred, y);
        return w * loss_gaussian_nll(pred, lv.item(), y);
    };
    total += arm_loss(model.mu0_net, model.log_var0, rows0);
    total += arm_loss(model.mu1_net, model.log_var1, rows1);
    return total;
}

// One MC-dropout draw of both arms' expected outcomes, as n x 1 columns.
inline void tlearner_predict_draw(const TLearnerModel& model, const Tensor& x, Rng& rng,
                                  Tensor& mu0_col, Tensor& mu1_col) {
    const auto masks0 = sample_dropout_masks(rng, model.mu0_net);
    const auto masks1 = sample_dropout_masks(rng, model.mu1_net);
    mu0_col = mlp_forward(model.mu0_net, x, &masks0);
    mu1_col = mlp_forward(model.mu1_net, x, &masks1);
}

}  // namespace catekit
