// Causal-effect VAE with a Bayesian (MC-dropout) decoder.
//
// Per treatment branch b the encoder carries an auxiliary outcome head
// q(y|x,t=b) and a posterior head q(z|x,y,t=b) emitting a Gaussian mean and
// log variance over the latent confounder z; a single head q(t|x) predicts
// the treatment. The decoder reconstructs p(x|z) (unit-variance Gaussian),
// p(t|z) and p(y|t,z) per branch. Encoder parameters are deterministic;
// decoder layers carry dropout, and the decoder-weight prior KL is realized
// as the optimizer's L2 weight decay.
//
// The training objective is the negated ELBO plus the two auxiliary
// log-likelihood terms; with negative sampling on, every unit is also routed
// through the opposite branch's encoder where only KL(q(z|.) || p(z)) is
// minimized.
#pragma once

#include "catekit/models/common.hpp"
#include "catekit/models/config.hpp"

#include <string>
#include <utility>
#include <vector>

namespace catekit {

struct CevaeModel {
    // encoder
    Mlp q_t;
    Mlp q_y0, q_y1;
    Mlp q_z0, q_z1;  // output 2*latent_dim: mean columns then log-variance columns
    // decoder
    Mlp p_x;
    Mlp p_t;
    Mlp p_y0, p_y1;

    std::size_t latent_dim = 0;
    bool negative_sampling = false;
    OutcomeKind outcome = OutcomeKind::continuous;
    Tensor aux_log_var0 = Tensor::scalar(0.0);  // q(y|x,t) spread, continuous outcomes
    Tensor aux_log_var1 = Tensor::scalar(0.0);
    Tensor dec_log_var0 = Tensor::scalar(0.0);  // p(y|t,z) spread, continuous outcomes
    Tensor dec_log_var1 = Tensor::scalar(0.0);

    std::vector<Mlp*> nets() { return {&q_t, &q_y0, &q_y1, &q_z0, &q_z1, &p_x, &p_t, &p_y0, &p_y1}; }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps;
        for (Mlp* net : nets()) {
            for (Tensor* p : net->parameters()) ps.push_back(p);
        }
        if (outcome == OutcomeKind::continuous) {
            ps.push_back(&aux_log_var0);
            ps.push_back(&aux_log_var1);
            ps.push_back(&dec_log_var0);
            ps.push_back(&dec_log_var1);
        }
        return ps;
    }

    std::vector<std::pair<std::string, Tensor*>> named_parameters() {
        static const char* names[] = {"q_t", "q_y0", "q_y1", "q_z0", "q_z1",
                                      "p_x", "p_t", "p_y0", "p_y1"};
        std::vector<std::pair<std::string, Tensor*>> out;
        auto all = nets();
        for (std::size_t k = 0; k < all.size(); ++k) {
            for (std::size_t i = 0; i < all[k]->layers.size(); ++i) {
                out.emplace_back(std::string(names[k]) + ".layer" + std::to_string(i) + ".weights",
                                 &all[k]->layers[i].weights);
                out.emplace_back(std::string(names[k]) + ".layer" + std::to_string(i) + ".bias",
                                 &all[k]->layers[i].bias);
            }
        }
        if (outcome == OutcomeKind::continuous) {
            out.emplace_back("aux_log_var0", &aux_log_var0);
            out.emplace_back("aux_log_var1", &aux_log_var1);
            out.emplace_back("dec_log_var0", &dec_log_var0);
            out.emplace_back("dec_log_var1", &dec_log_var1);
        }
        return out;
    }
};

inline CevaeModel build_cevae(std::size_t input_dim, OutcomeKind outcome, const ModelConfig& mc,
                              const TrainConfig& tc, Rng& rng) {
    CevaeModel model;
    model.latent_dim = mc.latent_dim;
    model.negative_sampling = mc.negative_sampling;
    model.outcome = outcome;

    const Activation out_act =
        outcome == OutcomeKind::binary ? Activation::sigmoid : Activation::identity;
    auto encoder = [&](std::size_t in, std::size_t out, Activation act) {
        MlpSpec s;
        s.input_dim = in;
        s.hidden.assign(mc.cevae_hidden_depth, mc.cevae_hidden_width);
        s.output_dim = out;
        s.output_activation = act;
        return make_mlp(rng, s);  // no dropout: encoder parameters stay deterministic
    };
    auto decoder = [&](std::size_t in, std::size_t out, Activation act) {
        MlpSpec s;
        s.input_dim = in;
        s.hidden.assign(mc.cevae_hidden_depth, mc.cevae_hidden_width);
        s.output_dim = out;
        s.output_activation = act;
        s.dropout_hidden = tc.dropout_hidden;
        s.dropout_pre_output = tc.dropout_pre_output;
        return make_mlp(rng, s);
    };

    model.q_t = encoder(input_dim, 1, Activation::sigmoid);
    model.q_y0 = encoder(input_dim, 1, out_act);
    model.q_y1 = encoder(input_dim, 1, out_act);
    model.q_z0 = encoder(input_dim + 1, 2 * mc.latent_dim, Activation::identity);
    model.q_z1 = encoder(input_dim + 1, 2 * mc.latent_dim, Activation::identity);
    model.p_x = decoder(mc.latent_dim, input_dim, Activation::identity);
    model.p_t = decoder(mc.latent_dim, 1, Activation::sigmoid);
    model.p_y0 = decoder(mc.latent_dim, 1, out_act);
    model.p_y1 = decoder(mc.latent_dim, 1, out_act);
    return model;
}

namespace detail {

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    Tensor out(Shape{a.rows(), a.cols() + b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) out.at(i, a.cols() + j) = b.at(i, j);
    }
    return out;
}

// plain-space posterior parameters of q(z | x, y, branch)
inline void encode_posterior(const CevaeModel& model, int branch, const Tensor& x, const Tensor& y,
                             Tensor& mu, Tensor& log_var) {
    const Mlp& qz = branch == 0 ? model.q_z0 : model.q_z1;
    const Tensor out = mlp_forward(qz, concat_cols(x, y));
    const std::size_t l = model.latent_dim;
    mu = Tensor(Shape{out.rows(), l});
    log_var = Tensor(Shape{out.rows(), l});
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < l; ++j) {
            mu.at(i, j) = out.at(i, j);
            log_var.at(i, j) = out.at(i, l + j);
        }
    }
}

inline double mean_kl_std_normal(const Tensor& mu, const Tensor& log_var) {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        s += 0.5 * (mu[i] * mu[i] + std::exp(log_var[i]) - log_var[i] - 1.0);
    }
    return s / static_cast<double>(mu.rows());
}

}  // namespace detail

// The counterfactual-branch (negative sampling) loss term, evaluated
// deterministically: every unit is pushed through the flipped branch's
// encoder with the auxiliary outcome mean standing in for the unobserved y,
// and only the KL to the latent prior is charged. Returns the batch-mean
// contribution; exactly 0 when the flag is off.
inline double negative_sampling_pass(const CevaeModel& model, const Batch& batch) {
    if (!model.negative_sampling) return 0.0;
    const double n = static_cast<double>(batch.size());
    double total = 0.0;
    for (int branch = 0; branch <= 1; ++branch) {
        const auto rows = arm_rows(batch.t, 1 - branch);  // counterfactual units for this branch
        if (rows.empty()) continue;
        const Tensor x_cf = gather_rows(batch.X, rows);
        const Tensor y_hat = mlp_forward(branch == 0 ? model.q_y0 : model.q_y1, x_cf);
        Tensor mu, log_var;
        detail::encode_posterior(model, branch, x_cf, y_hat, mu, log_var);
        total += static_cast<double>(rows.size()) / n * detail::mean_kl_std_normal(mu, log_var);
    }
    return total;
}

// Recorded objective for one batch: negated ELBO plus auxiliary terms, mean
// over the batch. Fills grads aligned with parameters() order.
inline double cevae_step_loss(CevaeModel& model, const Batch& batch, Rng& rng,
                              std::vector<Tensor>& grads) {
    Tape tape;
    const double n = static_cast<double>(batch.size());
    const std::size_t latent = model.latent_dim;

    // one decoder mask draw per step
    std::vector<Tensor> masks_px = sample_dropout_masks(rng, model.p_x);
    std::vector<Tensor> masks_pt = sample_dropout_masks(rng, model.p_t);
    std::vector<Tensor> masks_py0 = sample_dropout_masks(rng, model.p_y0);
    std::vector<Tensor> masks_py1 = sample_dropout_masks(rng, model.p_y1);

    // parameter gradient accumulation across multiple uses of the same net
    grads.clear();
    for (Tensor* p : model.parameters()) grads.emplace_back(p->shape());
    std::vector<std::size_t> offsets;
    {
        std::size_t off = 0;
        for (Mlp* net : model.nets()) {
            offsets.push_back(off);
            off += 2 * net->layers.size();
        }
    }
    auto add_net_grads = [&](std::size_t net_index, const MlpVars& vars) {
        const std::size_t off = offsets[net_index];
        for (std::size_t i = 0; i < vars.weights.size(); ++i) {
            const Tensor& gw = tape.grad(vars.weights[i]);
            const Tensor& gb = tape.grad(vars.biases[i]);
            for (std::size_t k = 0; k < gw.size(); ++k) grads[off + 2 * i][k] += gw[k];
            for (std::size_t k = 0; k < gb.size(); ++k) grads[off + 2 * i + 1][k] += gb[k];
        }
    };
    const std::size_t scalar_off = offsets.back() + 2 * model.p_y1.layers.size();
    auto add_scalar_grad = [&](std::size_t slot, Var v) {
        if (v.valid()) grads[scalar_off + slot][0] += tape.grad(v)[0];
    };

    struct Use {
        std::size_t net_index;
        MlpVars vars;
    };
    std::vector<Use> uses;
    std::vector<std::pair<std::size_t, Var>> scalar_uses;  // slot -> leaf var

    Var total{};
    auto accumulate = [&](Var term, double weight) {
        Var scaled = tape.scale(term, weight);
        total = total.valid() ? tape.add(total, scaled) : scaled;
    };

    // auxiliary q(t|x) on the full batch
    {
        Tensor t_target(Shape{batch.size(), 1});
        for (std::size_t i = 0; i < batch.size(); ++i) t_target.at(i, 0) = batch.t[i];
        MlpVars qt = mlp_forward(tape, model.q_t, tape.leaf(batch.X));
        accumulate(tape.loss_bce(qt.output, t_target), 1.0);
        uses.push_back({0, qt});
    }

    for (int branch = 0; branch <= 1; ++branch) {
        const auto rows = arm_rows(batch.t, branch);
        if (!rows.empty()) {
            const double w = static_cast<double>(rows.size()) / n;
            const Tensor x_b = gather_rows(batch.X, rows);
            const Tensor y_b = gather_rows(batch.y, rows);

            // posterior q(z | x, y, t=b) and a single reparameterized sample
            const std::size_t qz_index = branch == 0 ? 3 : 4;
            MlpVars qz = mlp_forward(tape, branch == 0 ? model.q_z0 : model.q_z1,
                                     tape.leaf(detail::concat_cols(x_b, y_b)));
            uses.push_back({qz_index, qz});
            Var mu = tape.slice_cols(qz.output, 0, latent);
            Var log_var = tape.slice_cols(qz.output, latent, latent);
            Tensor eps(Shape{rows.size(), latent});
            for (auto& e : eps.values()) e = rng.normal();
            Var z = tape.add(mu, tape.mul(tape.exp(tape.scale(log_var, 0.5)), tape.leaf(eps)));

            // reconstruction: p(x|z) with unit variance
            MlpVars px = mlp_forward(tape, model.p_x, z, &masks_px);
            uses.push_back({5, px});
            Var zero_lv = tape.leaf(Tensor::scalar(0.0));
            accumulate(tape.scale(tape.loss_gaussian_nll(px.output, zero_lv, x_b),
                                  static_cast<double>(x_b.cols())),
                       w);

            // p(t|z)
            Tensor t_b(Shape{rows.size(), 1}, static_cast<double>(branch));
            MlpVars pt = mlp_forward(tape, model.p_t, z, &masks_pt);
            uses.push_back({6, pt});
            accumulate(tape.loss_bce(pt.output, t_b), w);

            // p(y|t,z)
            MlpVars py = mlp_forward(tape, branch == 0 ? model.p_y0 : model.p_y1, z,
                                     branch == 0 ? &masks_py0 : &masks_py1);
            uses.push_back({branch == 0 ? std::size_t{7} : std::size_t{8}, py});
            if (model.outcome == OutcomeKind::binary) {
                accumulate(tape.loss_bce(py.output, y_b), w);
            } else {
                Var lv = tape.leaf(branch == 0 ? model.dec_log_var0 : model.dec_log_var1);
                scalar_uses.emplace_back(branch == 0 ? 2 : 3, lv);
                accumulate(tape.loss_gaussian_nll(py.output, lv, y_b), w);
            }

            // KL(q(z|x,y,t) || N(0,I))
            accumulate(tape.kl_std_normal(mu, log_var), w);

            // auxiliary q(y|x,t=b)
            const std::size_t qy_index = branch == 0 ? 1 : 2;
            MlpVars qy = mlp_forward(tape, branch == 0 ? model.q_y0 : model.q_y1, tape.leaf(x_b));
            uses.push_back({qy_index, qy});
            if (model.outcome == OutcomeKind::binary) {
                accumulate(tape.loss_bce(qy.output, y_b), w);
            } else {
                Var lv = tape.leaf(branch == 0 ? model.aux_log_var0 : model.aux_log_var1);
                scalar_uses.emplace_back(branch == 0 ? 0 : 1, lv);
                accumulate(tape.loss_gaussian_nll(qy.output, lv, y_b), w);
            }
        }

        // negative sampling: counterfactual units through this branch, KL only;
        // the auxiliary outcome mean stands in for the unobserved y
        if (model.negative_sampling) {
            const auto cf_rows = arm_rows(batch.t, 1 - branch);
            if (!cf_rows.empty()) {
                const double w = static_cast<double>(cf_rows.size()) / n;
                const Tensor x_cf = gather_rows(batch.X, cf_rows);
                Var x_var = tape.leaf(x_cf);
                const std::size_t qy_index = branch == 0 ? 1 : 2;
                MlpVars qy = mlp_forward(tape, branch == 0 ? model.q_y0 : model.q_y1, x_var);
                uses.push_back({qy_index, qy});
                const std::size_t qz_index = branch == 0 ? 3 : 4;
                MlpVars qz = mlp_forward(tape, branch == 0 ? model.q_z0 : model.q_z1,
                                         tape.concat_cols(x_var, qy.output));
                uses.push_back({qz_index, qz});
                Var mu = tape.slice_cols(qz.output, 0, latent);
                Var log_var = tape.slice_cols(qz.output, latent, latent);
                accumulate(tape.kl_std_normal(mu, log_var), w);
            }
        }
    }

    tape.backward(total);
    for (const auto& use : uses) add_net_grads(use.net_index, use.vars);
    for (const auto& [slot, var] : scalar_uses) add_scalar_grad(slot, var);
    return tape.value(total).item();
}

// Deterministic objective (z at the posterior mean, no dropout); used for
// validation early stopping and as the plug-in check of the recorded loss.
inline double cevae_eval_loss(const CevaeModel& model, const Batch& batch) {
    const double n = static_cast<double>(batch.size());
    double total = 0.0;
    {
        Tensor t_target(Shape{batch.size(), 1});
        for (std::size_t i = 0; i < batch.size(); ++i) t_target.at(i, 0) = batch.t[i];
        total += loss_bce(mlp_forward(model.q_t, batch.X), t_target);
    }
    for (int branch = 0; branch <= 1; ++branch) {
        const auto rows = arm_rows(batch.t, branch);
        if (rows.empty()) continue;
        const double w = static_cast<double>(rows.size()) / n;
        const Tensor x_b = gather_rows(batch.X, rows);
        const Tensor y_b = gather_rows(batch.y, rows);
        Tensor mu, log_var;
        detail::encode_posterior(model, branch, x_b, y_b, mu, log_var);

        const Tensor px = mlp_forward(model.p_x, mu);
        total += w * static_cast<double>(x_b.cols()) * loss_gaussian_nll(px, 0.0, x_b);

        Tensor t_b(Shape{rows.size(), 1}, static_cast<double>(branch));
        total += w * loss_bce(mlp_forward(model.p_t, mu), t_b);

        const Tensor py = mlp_forward(branch == 0 ? model.p_y0 : model.p_y1, mu);
        if (model.outcome == OutcomeKind::binary) {
            total += w * loss_bce(py, y_b);
        } else {
            total += w * loss_gaussian_nll(
                             py, (branch == 0 ? model.dec_log_var0 : model.dec_log_var1).item(), y_b);
        }

        total += w * detail::mean_kl_std_normal(mu, log_var);

        const Tensor qy = mlp_forward(branch == 0 ? model.q_y0 : model.q_y1, x_b);
        if (model.outcome == OutcomeKind::binary) {
            total += w * loss_bce(qy, y_b);
        } else {
            total += w * loss_gaussian_nll(
                             qy, (branch == 0 ? model.aux_log_var0 : model.aux_log_var1).item(), y_b);
        }
    }
    total += negative_sampling_pass(model, batch);
    return total;
}

// One MC draw: sample the auxiliary outcome, the latent posterior and fresh
// decoder masks per branch.
inline void cevae_predict_draw(const CevaeModel& model, const Tensor& x, Rng& rng, Tensor& mu0_col,
                               Tensor& mu1_col) {
    const std::size_t n = x.rows();
    Tensor* outs[2] = {&mu0_col, &mu1_col};
    for (int branch = 0; branch <= 1; ++branch) {
        const Tensor qy = mlp_forward(branch == 0 ? model.q_y0 : model.q_y1, x);
        Tensor y_hat(Shape{n, 1});
        for (std::size_t i = 0; i < n; ++i) {
            if (model.outcome == OutcomeKind::binary) {
                y_hat.at(i, 0) = rng.bernoulli(std::clamp(qy.at(i, 0), 0.0, 1.0)) ? 1.0 : 0.0;
            } else {
                const double sd = std::exp(
                    0.5 * (branch == 0 ? model.aux_log_var0 : model.aux_log_var1).item());
                y_hat.at(i, 0) = rng.normal(qy.at(i, 0), sd);
            }
        }
        Tensor mu, log_var;
        detail::encode_posterior(model, branch, x, y_hat, mu, log_var);
        Tensor z(Shape{n, model.latent_dim});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < model.latent_dim; ++j) {
                z.at(i, j) = mu.at(i, j) + std::exp(0.5 * log_var.at(i, j)) * rng.normal();
            }
        }
        const Mlp& py = branch == 0 ? model.p_y0 : model.p_y1;
        const auto masks = sample_dropout_masks(rng, py);
        *outs[branch] = mlp_forward(py, z, &masks);
    }
}

}  // namespace catekit
