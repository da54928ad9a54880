// TARNet-family estimators: shared representation trunk with one outcome
// head per arm. mmd_weight > 0 adds the CFR representation-balancing
// penalty; an optional propensity head makes it a Dragonnet.
#pragma once

#include "catekit/models/common.hpp"
#include "catekit/models/config.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace catekit {

struct TarnetModel {
    Mlp trunk;  // every layer ELU with hidden dropout; output is the representation
    Mlp head0;
    Mlp head1;
    std::optional<Mlp> propensity_head;
    double mmd_weight = 0.0;
    double mmd_bandwidth = 0.0;  // 0 = per-batch median heuristic
    OutcomeKind outcome = OutcomeKind::continuous;
    Tensor log_var0 = Tensor::scalar(0.0);
    Tensor log_var1 = Tensor::scalar(0.0);

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps = trunk.parameters();
        for (Tensor* p : head0.parameters()) ps.push_back(p);
        for (Tensor* p : head1.parameters()) ps.push_back(p);
        if (propensity_head) {
            for (Tensor* p : propensity_head->parameters()) ps.push_back(p);
        }
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
        add_net("trunk", trunk);
        add_net("head0", head0);
        add_net("head1", head1);
        if (propensity_head) add_net("propensity_head", *propensity_head);
        if (outcome == OutcomeKind::continuous) {
            out.emplace_back("log_var0", &log_var0);
            out.emplace_back("log_var1", &log_var1);
        }
        return out;
    }
};

inline TarnetModel build_tarnet(std::size_t input_dim, OutcomeKind outcome, EstimatorKind kind,
                                const ModelConfig& mc, const TrainConfig& tc, Rng& rng) {
    TarnetModel model;
    model.outcome = outcome;
    model.mmd_weight = kind == EstimatorKind::cfr_mmd ? mc.mmd_weight : 0.0;
    model.mmd_bandwidth = mc.mmd_bandwidth;

    std::size_t in = input_dim;
    for (std::size_t i = 0; i < mc.trunk_depth; ++i) {
        model.trunk.layers.push_back(
            make_dense_layer(rng, in, mc.trunk_width, Activation::elu, tc.dropout_hidden));
        in = mc.trunk_width;
    }

    MlpSpec head;
    head.input_dim = mc.trunk_width;
    head.hidden.assign(mc.head_depth, mc.head_width);
    head.output_dim = 1;
    head.output_activation = outcome == OutcomeKind::binary ? Activation::sigmoid
                                                            : Activation::identity;
    head.dropout_hidden = tc.dropout_hidden;
    head.dropout_pre_output = tc.dropout_pre_output;
    model.head0 = make_mlp(rng, head);
    model.head1 = make_mlp(rng, head);

    if (kind == EstimatorKind::dragonnet) {
        MlpSpec prop = head;
        prop.output_activation = Activation::sigmoid;
        model.propensity_head = make_mlp(rng, prop);
    }
    return model;
}

namespace detail {
inline Var head_loss(Tape& tape, Mlp& head, Tensor* log_var, OutcomeKind outcome, Var repr_rows,
                     const Tensor& y_rows, const std::vector<Tensor>* masks, MlpVars& vars_out,
                     Var& log_var_var) {
    vars_out = mlp_forward(tape, head, repr_rows, masks);
    if (outcome == OutcomeKind::binary) return tape.loss_bce(vars_out.output, y_rows);
    log_var_var = tape.leaf(*log_var);
    return tape.loss_gaussian_nll(vars_out.output, log_var_var, y_rows);
}
}  // namespace detail

inline double tarnet_step_loss(TarnetModel& model, const Batch& batch, Rng& rng,
                               std::vector<Tensor>& grads) {
    Tape tape;
    const auto rows0 = arm_rows(batch.t, 0);
    const auto rows1 = arm_rows(batch.t, 1);
    const double n = static_cast<double>(batch.size());

    const std::vector<Tensor> trunk_masks =
        sample_dropout_masks_rows(rng, model.trunk, batch.size());
    const std::vector<Tensor> masks0 =
        sample_dropout_masks_rows(rng, model.head0, rows0.size());
    const std::vector<Tensor> masks1 =
        sample_dropout_masks_rows(rng, model.head1, rows1.size());
    std::vector<Tensor> masks_p;
    if (model.propensity_head) {
        masks_p = sample_dropout_masks_rows(rng, *model.propensity_head, batch.size());
    }

    Var x = tape.leaf(batch.X);
    MlpVars trunk_vars = mlp_forward(tape, model.trunk, x, &trunk_masks);
    Var repr = trunk_vars.output;

    Var total{};
    MlpVars vars0, vars1, vars_p;
    Var lv0{}, lv1{};
    Var repr0{}, repr1{};
    if (!rows0.empty()) {
        repr0 = tape.gather_rows(repr, rows0);
        Var l0 = detail::head_loss(tape, model.head0, &model.log_var0, model.outcome, repr0,
                                   gather_rows(batch.y, rows0), rows0.empty() ? nullptr : &masks0,
                                   vars0, lv0);
        total = tape.scale(l0, static_cast<double>(rows0.size()) / n);
    }
    if (!rows1.empty()) {
        repr1 = tape.gather_rows(repr, rows1);
        Var l1 = detail::head_loss(tape, model.head1, &model.log_var1, model.outcome, repr1,
                                   gather_rows(batch.y, rows1), &masks1, vars1, lv1);
        Var scaled = tape.scale(l1, static_cast<double>(rows1.size()) / n);
        total = total.valid() ? tape.add(total, scaled) : scaled;
    }
    if (model.mmd_weight > 0.0 && !rows0.empty() && !rows1.empty()) {
        const double bw = model.mmd_bandwidth > 0.0
                              ? model.mmd_bandwidth
                              : median_heuristic_bandwidth(tape.value(repr1), tape.value(repr0));
        Var penalty = mmd2_var(tape, repr1, repr0, bw);
        total = tape.add(total, tape.scale(penalty, model.mmd_weight));
    }
    if (model.propensity_head) {
        Tensor t_target(Shape{batch.size(), 1});
        for (std::size_t i = 0; i < batch.size(); ++i) t_target.at(i, 0) = batch.t[i];
        vars_p = mlp_forward(tape, *model.propensity_head, repr, &masks_p);
        total = tape.add(total, tape.loss_bce(vars_p.output, t_target));
    }
    tape.backward(total);

    grads.clear();
    collect_mlp_grads(tape, trunk_vars, grads);
    if (!rows0.empty()) collect_mlp_grads(tape, vars0, grads);
    else detail::push_zero_grads(model.head0, grads);
    if (!rows1.empty()) collect_mlp_grads(tape, vars1, grads);
    else detail::push_zero_grads(model.head1, grads);
    if (model.propensity_head) collect_mlp_grads(tape, vars_p, grads);
    if (model.outcome == OutcomeKind::continuous) {
        grads.push_back(lv0.valid() ? tape.grad(lv0) : Tensor(Shape{}, std::vector<double>{0.0}));
        grads.push_back(lv1.valid() ? tape.grad(lv1) : Tensor(Shape{}, std::vector<double>{0.0}));
    }
    return tape.value(total).item();
}

inline double tarnet_eval_loss(const TarnetModel& model, const Batch& batch) {
    const auto rows0 = arm_rows(batch.t, 0);
    const auto rows1 = arm_rows(batch.t, 1);
    const double n = static_cast<double>(batch.size());
    const Tensor repr = mlp_forward(model.trunk, batch.X);
    double total = 0.0;
    auto head_term = [&](const Mlp& head, const Tensor& lv, const std::vector<std::size_t>& rows) {
        if (rows.empty()) return 0.0;
        const Tensor pred = mlp_forward(head, gather_rows(repr, rows));
        const Tensor y = gather_rows(batch.y, rows);
        const double w = static_cast<double>(rows.size()) / n;
        if (model.outcome == OutcomeKind::binary) return w * loss_bce(pred, y);
        return w * loss_gaussian_nll(pred, lv.item(), y);
    };
    total += head_term(model.head0, model.log_var0, rows0);
    total += head_term(model.head1, model.log_var1, rows1);
    if (model.mmd_weight > 0.0 && !rows0.empty() && !rows1.empty()) {
        const Tensor r0 = gather_rows(repr, rows0);
        const Tensor r1 = gather_rows(repr, rows1);
        const double bw = model.mmd_bandwidth > 0.0 ? model.mmd_bandwidth
                                                    : median_heuristic_bandwidth(r1, r0);
        total += model.mmd_weight * mmd2(r1, r0, bw);
    }
    if (model.propensity_head) {
        const Tensor pred = mlp_forward(*model.propensity_head, repr);
        Tensor t_target(Shape{batch.size(), 1});
        for (std::size_t i = 0; i < batch.size(); ++i) t_target.at(i, 0) = batch.t[i];
        total += loss_bce(pred, t_target);
    }
    return total;
}

inline void tarnet_predict_draw(const TarnetModel& model, const Tensor& x, Rng& rng,
                                Tensor& mu0_col, Tensor& mu1_col) {
    std::vector<Tensor> trunk_masks;
    for (const auto& l : model.trunk.layers) {
        trunk_masks.push_back(sample_dropout_mask(rng, l.dropout_prob, l.out_dim()));
    }
    const auto masks0 = sample_dropout_masks(rng, model.head0);
    const auto masks1 = sample_dropout_masks(rng, model.head1);
    const Tensor repr = mlp_forward(model.trunk, x, &trunk_masks);
    mu0_col = mlp_forward(model.head0, repr, &masks0);
    mu1_col = mlp_forward(model.head1, repr, &masks1);
}

}  // namespace catekit
