#include <catch2/catch_amalgamated.hpp>

#include "catekit/models/checkpoint.hpp"
#include "catekit/models/propensity.hpp"
#include "catekit/models/train.hpp"
#include "support/test_utils.hpp"

#include <cmath>
#include <filesystem>

using namespace catekit;

namespace {

// small architectures keep these tests fast
ModelConfig tiny_models() {
    ModelConfig mc;
    mc.tlearner_depth = 2;
    mc.tlearner_width = 8;
    mc.trunk_depth = 2;
    mc.trunk_width = 8;
    mc.head_depth = 1;
    mc.head_width = 6;
    mc.cevae_hidden_depth = 1;
    mc.cevae_hidden_width = 8;
    mc.latent_dim = 3;
    return mc;
}

CateDataset random_dataset(Rng& rng, std::size_t n, std::size_t d, OutcomeKind kind) {
    CateDataset ds;
    ds.outcome = kind;
    ds.X = Tensor(Shape{n, d});
    for (auto& v : ds.X.values()) v = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        ds.t.push_back(rng.bernoulli(0.5) ? 1 : 0);
        if (kind == OutcomeKind::binary) {
            ds.y.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
        } else {
            ds.y.push_back(rng.normal());
        }
    }
    // make sure both arms exist
    ds.t[0] = 0;
    ds.t[1] = 1;
    return ds;
}

Batch full_batch(const CateDataset& ds) {
    std::vector<std::size_t> rows(ds.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return make_batch(ds, rows);
}

}  // namespace

TEST_CASE("training is deterministic under a fixed seed") {
    Rng data_rng(1);
    const CateDataset ds = random_dataset(data_rng, 40, 3, OutcomeKind::binary);
    TrainConfig tc;
    tc.max_epochs = 8;
    tc.patience = 8;
    tc.batch_size = 16;
    auto run = [&](EstimatorKind kind) {
        Rng rng(77);
        TrainedEstimator te = train_estimator(kind, ds, tc, tiny_models(), rng);
        std::vector<double> flat;
        for (Tensor* p : te.estimator.parameters()) {
            flat.insert(flat.end(), p->values().begin(), p->values().end());
        }
        return std::make_pair(flat, te.record.best_epoch);
    };
    for (EstimatorKind kind : {EstimatorKind::tlearner, EstimatorKind::cfr_mmd,
                               EstimatorKind::dragonnet, EstimatorKind::cevae}) {
        const auto a = run(kind);
        const auto b = run(kind);
        CHECK(a.first == b.first);
        CHECK(a.second == b.second);  // early-stopping epoch is reproducible
    }
}

TEST_CASE("single-arm datasets are rejected except for the cevae") {
    Rng rng(2);
    CateDataset ds = random_dataset(rng, 20, 2, OutcomeKind::binary);
    for (auto& t : ds.t) t = 1;
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.patience = 2;
    Rng train_rng(3);
    CHECK_THROWS_WITH(train_estimator(EstimatorKind::tlearner, ds, tc, tiny_models(), train_rng),
                      Catch::Matchers::ContainsSubstring("one arm"));
    CHECK_THROWS_AS(train_estimator(EstimatorKind::tarnet, ds, tc, tiny_models(), train_rng),
                    std::invalid_argument);
    Rng cevae_rng(4);
    CHECK_NOTHROW(train_estimator(EstimatorKind::cevae, ds, tc, tiny_models(), cevae_rng));
}

TEST_CASE("a separable 32-point toy set is overfit within budget") {
    Rng rng(5);
    CateDataset ds;
    ds.outcome = OutcomeKind::binary;
    ds.X = Tensor(Shape{32, 2});
    for (std::size_t i = 0; i < 32; ++i) {
        ds.X.at(i, 0) = rng.uniform(-1, 1);
        ds.X.at(i, 1) = rng.uniform(-1, 1);
        ds.t.push_back(i % 2);
        ds.y.push_back(ds.X.at(i, 0) > 0.0 ? 1.0 : 0.0);
    }
    TrainConfig tc;
    tc.max_epochs = 2000;
    tc.patience = 2000;  // no early stop: this is a pure capacity check
    tc.dropout_hidden = 0.0;
    tc.dropout_pre_output = 0.0;
    tc.batch_size = 32;
    tc.learning_rate = 5e-3;
    Rng train_rng(6);
    ModelConfig mc = tiny_models();
    mc.tlearner_depth = 2;
    mc.tlearner_width = 16;
    TrainedEstimator te = train_estimator(EstimatorKind::tlearner, ds, tc, mc, train_rng);
    CHECK(te.record.epochs_run <= 2000);
    double best = 1e9;
    for (double l : te.record.train_loss) best = std::min(best, l);
    CHECK(best < 0.05);
}

TEST_CASE("mc prediction basics") {
    Rng rng(7);
    const CateDataset ds = random_dataset(rng, 30, 3, OutcomeKind::binary);
    TrainConfig tc;
    tc.dropout_hidden = 0.0;
    tc.dropout_pre_output = 0.0;
    Rng build_rng(8);
    Estimator est = build_estimator(EstimatorKind::tarnet, 3, OutcomeKind::binary, tiny_models(),
                                    tc, build_rng);
    Tensor x(Shape{9, 3});
    for (auto& v : x.values()) v = rng.uniform(-1, 1);

    SECTION("M = 0 is an error") {
        Rng r(1);
        CHECK_THROWS_AS(predict_mc(est, x, 0, r), std::invalid_argument);
    }
    SECTION("zero dropout collapses the posterior") {
        Rng r(2);
        const McOutcomeSamples s = predict_mc(est, x, 10, r);
        for (std::size_t j = 1; j < 10; ++j) {
            for (std::size_t i = 0; i < 9; ++i) {
                CHECK(s.mu0.at(j, i) == s.mu0.at(0, i));
                CHECK(s.mu1.at(j, i) == s.mu1.at(0, i));
            }
        }
        for (double v : epistemic_variance(s)) CHECK(v == 0.0);
    }
    SECTION("monte carlo means are consistent across M") {
        TrainConfig dropout_tc;  // default dropout on
        Rng b2(9);
        Estimator noisy = build_estimator(EstimatorKind::tlearner, 3, OutcomeKind::binary,
                                          tiny_models(), dropout_tc, b2);
        Rng r1(3), r2(4);
        const McOutcomeSamples big = predict_mc(noisy, x, 10000, r1);
        const McOutcomeSamples small = predict_mc(noisy, x, 100, r2);
        const auto mean_big = cate_estimate(big);
        const auto mean_small = cate_estimate(small);
        const auto var_big = epistemic_variance(big);
        for (std::size_t i = 0; i < 9; ++i) {
            const double se_small = std::sqrt(var_big[i] / 100.0);
            CHECK(std::abs(mean_big[i] - mean_small[i]) <= 3.0 * se_small + 1e-12);
        }
    }
}

TEST_CASE("mmd2 closed-form and symmetry") {
    const Tensor a = Tensor::matrix(1, 1, {0.0});
    const Tensor b = Tensor::matrix(1, 1, {1.0});
    CHECK_THAT(mmd2(a, b, 1.0),
               Catch::Matchers::WithinRel(2.0 * (1.0 - std::exp(-0.5)), 1e-12));
    Rng rng(11);
    Tensor u(Shape{5, 3}), v(Shape{7, 3});
    for (auto& x : u.values()) x = rng.normal();
    for (auto& x : v.values()) x = rng.normal();
    CHECK(mmd2(u, u, 1.3) <= 1e-12);  // same points
    CHECK_THAT(mmd2(u, v, 0.8), Catch::Matchers::WithinRel(mmd2(v, u, 0.8), 1e-12));
    CHECK(mmd2(u, v, 0.8) >= 0.0);
    CHECK_THROWS_AS(mmd2(Tensor(Shape{0, 3}), v, 1.0), std::invalid_argument);

    // recorded version agrees with the plain one
    Tape tape;
    const double got = tape.value(mmd2_var(tape, tape.leaf(u), tape.leaf(v), 0.8)).item();
    CHECK_THAT(got, Catch::Matchers::WithinRel(mmd2(u, v, 0.8), 1e-12));
}

TEST_CASE("step losses match finite differences for every estimator kind") {
    Rng data_rng(13);
    for (OutcomeKind kind : {OutcomeKind::binary, OutcomeKind::continuous}) {
        const CateDataset ds = random_dataset(data_rng, 12, 3, kind);
        const Batch batch = full_batch(ds);
        for (EstimatorKind ek : {EstimatorKind::tlearner, EstimatorKind::tarnet,
                                 EstimatorKind::cfr_mmd, EstimatorKind::dragonnet,
                                 EstimatorKind::cevae}) {
            TrainConfig tc;  // dropout on: masks are resampled identically via the fixed seed
            ModelConfig mc = tiny_models();
            mc.negative_sampling = ek == EstimatorKind::cevae;
            mc.mmd_bandwidth = 0.9;  // the median heuristic is a per-batch constant, not
                                     // part of the differentiated graph; pin it for fd
            Rng build_rng(14);
            Estimator est = build_estimator(ek, 3, kind, mc, tc, build_rng);

            const std::uint64_t step_seed = 1234;
            std::vector<Tensor> grads;
            auto run_step = [&](std::vector<Tensor>* out_grads) {
                Rng r(step_seed);
                std::vector<Tensor> g;
                double loss = std::visit(
                    [&](auto& m) -> double {
                        using M = std::decay_t<decltype(m)>;
                        if constexpr (std::is_same_v<M, TLearnerModel>) {
                            return tlearner_step_loss(m, batch, r, g);
                        } else if constexpr (std::is_same_v<M, TarnetModel>) {
                            return tarnet_step_loss(m, batch, r, g);
                        } else {
                            return cevae_step_loss(m, batch, r, g);
                        }
                    },
                    est.model);
                if (out_grads) *out_grads = std::move(g);
                return loss;
            };
            run_step(&grads);
            const auto report = testing::fd_gradient_check([&] { return run_step(nullptr); },
                                                            est.parameters(), grads);
            INFO(to_string(ek) << "/" << to_string(kind) << ": " << report.checked
                               << " coordinates");
            CHECK(report.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("cevae objective properties") {
    Rng data_rng(15);
    const CateDataset ds = random_dataset(data_rng, 14, 2, OutcomeKind::binary);
    const Batch batch = full_batch(ds);
    TrainConfig tc;
    ModelConfig mc = tiny_models();

    SECTION("posterior matched to the prior has zero KL and zero negative-sampling term") {
        mc.negative_sampling = true;
        Rng rng(16);
        CevaeModel model = build_cevae(2, OutcomeKind::binary, mc, tc, rng);
        // zero out the posterior head: mu = 0, log_var = 0 for every input
        for (auto& layer : model.q_z0.layers) {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        for (auto& layer : model.q_z1.layers) {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        CHECK(negative_sampling_pass(model, batch) == 0.0);

        Tensor mu, lv;
        detail::encode_posterior(model, 0, batch.X, batch.y, mu, lv);
        CHECK(detail::mean_kl_std_normal(mu, lv) == 0.0);
    }

    SECTION("negative sampling contributes 0 when off and is nonnegative otherwise") {
        mc.negative_sampling = false;
        Rng rng(17);
        CevaeModel off = build_cevae(2, OutcomeKind::binary, mc, tc, rng);
        CHECK(negative_sampling_pass(off, batch) == 0.0);

        mc.negative_sampling = true;
        for (std::uint64_t seed = 20; seed < 26; ++seed) {
            Rng r(seed);
            CevaeModel on = build_cevae(2, OutcomeKind::binary, mc, tc, r);
            CHECK(negative_sampling_pass(on, batch) >= 0.0);
        }
    }

    SECTION("with negative sampling the objective differs exactly by the KL term") {
        mc.negative_sampling = true;
        Rng rng(18);
        CevaeModel model = build_cevae(2, OutcomeKind::binary, mc, tc, rng);
        const double with_ns = cevae_eval_loss(model, batch);
        CevaeModel plain = model;
        plain.negative_sampling = false;
        const double without_ns = cevae_eval_loss(plain, batch);
        CHECK_THAT(with_ns - without_ns,
                   Catch::Matchers::WithinAbs(negative_sampling_pass(model, batch), 1e-12));
    }

    SECTION("deterministic objective equals a straight-line recomputation") {
        Rng rng(19);
        CevaeModel model = build_cevae(2, OutcomeKind::binary, mc, tc, rng);
        const double got = cevae_eval_loss(model, batch);

        // independent recomputation: plug z = posterior mean into the decoder
        double expected = 0.0;
        const double n = static_cast<double>(batch.size());
        {
            Tensor tt(Shape{batch.size(), 1});
            for (std::size_t i = 0; i < batch.size(); ++i) tt.at(i, 0) = batch.t[i];
            expected += loss_bce(mlp_forward(model.q_t, batch.X), tt);
        }
        for (int b = 0; b <= 1; ++b) {
            const auto rows = arm_rows(batch.t, b);
            if (rows.empty()) continue;
            const double w = static_cast<double>(rows.size()) / n;
            const Tensor xb = gather_rows(batch.X, rows);
            const Tensor yb = gather_rows(batch.y, rows);
            Tensor mu, lv;
            detail::encode_posterior(model, b, xb, yb, mu, lv);
            const Tensor xr = mlp_forward(model.p_x, mu);
            double recon = 0.0;
            for (std::size_t i = 0; i < xr.size(); ++i) {
                const double d = xb[i] - xr[i];
                recon += 0.5 * (d * d + std::log(2.0 * M_PI));
            }
            expected += w * recon / static_cast<double>(rows.size());
            Tensor tb(Shape{rows.size(), 1}, static_cast<double>(b));
            expected += w * loss_bce(mlp_forward(model.p_t, mu), tb);
            expected += w * loss_bce(mlp_forward(b == 0 ? model.p_y0 : model.p_y1, mu), yb);
            expected += w * detail::mean_kl_std_normal(mu, lv);
            expected += w * loss_bce(mlp_forward(b == 0 ? model.q_y0 : model.q_y1, xb), yb);
        }
        CHECK_THAT(got, Catch::Matchers::WithinRel(expected, 1e-10));
    }
}

TEST_CASE("cevae elbo lower-bounds the decoder's own joint likelihood") {
    // generate a 2-covariate dataset from the decoder, then check
    // mean ELBO (without auxiliary terms) <= mean log-likelihood, both
    // estimated with 1e3 z samples
    TrainConfig tc;
    tc.dropout_hidden = 0.0;
    tc.dropout_pre_output = 0.0;
    ModelConfig mc = tiny_models();
    mc.latent_dim = 2;
    Rng rng(23);
    CevaeModel model = build_cevae(2, OutcomeKind::binary, mc, tc, rng);

    const std::size_t n = 24;
    Tensor x(Shape{n, 2});
    std::vector<int> t(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor z(Shape{1, 2});
        for (auto& v : z.values()) v = rng.normal();
        const Tensor xm = mlp_forward(model.p_x, z);
        x.at(i, 0) = xm.at(0, 0) + rng.normal();
        x.at(i, 1) = xm.at(0, 1) + rng.normal();
        t[i] = rng.bernoulli(mlp_forward(model.p_t, z).at(0, 0)) ? 1 : 0;
        const Tensor ym = mlp_forward(t[i] == 0 ? model.p_y0 : model.p_y1, z);
        y[i] = rng.bernoulli(ym.at(0, 0)) ? 1.0 : 0.0;
    }

    const std::size_t S = 1000;
    auto joint_loglik_given_z = [&](std::size_t i, const Tensor& z) {
        const Tensor xm = mlp_forward(model.p_x, z);
        double lp = 0.0;
        for (std::size_t d = 0; d < 2; ++d) {
            const double diff = x.at(i, d) - xm.at(0, d);
            lp += -0.5 * (diff * diff + std::log(2.0 * M_PI));
        }
        const double pt = std::clamp(mlp_forward(model.p_t, z).at(0, 0), 1e-12, 1.0 - 1e-12);
        lp += t[i] == 1 ? std::log(pt) : std::log(1.0 - pt);
        const double py = std::clamp(
            mlp_forward(t[i] == 0 ? model.p_y0 : model.p_y1, z).at(0, 0), 1e-12, 1.0 - 1e-12);
        lp += y[i] == 1.0 ? std::log(py) : std::log(1.0 - py);
        return lp;
    };

    double mean_elbo = 0.0, mean_loglik = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor xi(Shape{1, 2}, std::vector<double>{x.at(i, 0), x.at(i, 1)});
        Tensor yi(Shape{1, 1}, std::vector<double>{y[i]});
        Tensor mu, lv;
        detail::encode_posterior(model, t[i], xi, yi, mu, lv);

        // ELBO: E_q[log p(x,t,y|z)] - KL(q||p), S posterior samples
        double e_term = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            Tensor z(Shape{1, 2});
            for (std::size_t d = 0; d < 2; ++d) {
                z.at(0, d) = mu.at(0, d) + std::exp(0.5 * lv.at(0, d)) * rng.normal();
            }
            e_term += joint_loglik_given_z(i, z);
        }
        e_term /= static_cast<double>(S);
        const double elbo = e_term - detail::mean_kl_std_normal(mu, lv);

        // log p(x,t,y) by importance sampling from the prior
        double max_lp = -1e300;
        std::vector<double> lps(S);
        for (std::size_t s = 0; s < S; ++s) {
            Tensor z(Shape{1, 2});
            for (auto& v : z.values()) v = rng.normal();
            lps[s] = joint_loglik_given_z(i, z);
            max_lp = std::max(max_lp, lps[s]);
        }
        double acc = 0.0;
        for (double lp : lps) acc += std::exp(lp - max_lp);
        const double loglik = max_lp + std::log(acc / static_cast<double>(S));

        mean_elbo += elbo;
        mean_loglik += loglik;
    }
    mean_elbo /= static_cast<double>(n);
    mean_loglik /= static_cast<double>(n);
    // allow Monte-Carlo slack on the comparison
    CHECK(mean_elbo <= mean_loglik + 0.05);
}

TEST_CASE("propensity model basics") {
    Rng data_rng(29);
    const std::size_t n = 120;
    CateDataset ds;
    ds.outcome = OutcomeKind::binary;
    ds.X = Tensor(Shape{n, 2});
    for (auto& v : ds.X.values()) v = data_rng.uniform(-1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        ds.t.push_back(static_cast<int>(i % 2));  // balanced coin flip, independent of x
        ds.y.push_back(0.0);
    }
    TrainConfig tc;
    tc.max_epochs = 60;
    tc.patience = 15;
    tc.batch_size = 40;
    ModelConfig mc = tiny_models();

    Rng train_rng(30);
    const PropensityModel model = train_propensity(ds, tc, mc, train_rng, {0.1, 10.0});
    Rng pred_rng(31);
    const auto probs = predict_propensity(model, ds.X, 50, pred_rng);
    double mean = 0.0;
    for (double p : probs) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        mean += p;
    }
    mean /= static_cast<double>(n);
    CHECK(mean >= 0.45);
    CHECK(mean <= 0.55);

    CateDataset single = ds;
    for (auto& t : single.t) t = 1;
    Rng r2(32);
    CHECK_THROWS_WITH(train_propensity(single, tc, mc, r2),
                      Catch::Matchers::ContainsSubstring("single-class"));
}

TEST_CASE("expected calibration error") {
    // one bucket, confidence 0.25 against accuracy 0.2
    std::vector<double> probs;
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) {
        probs.push_back(0.25);
        labels.push_back(i < 2 ? 1 : 0);
    }
    const double ece = expected_calibration_error(probs, labels);
    CHECK_THAT(ece, Catch::Matchers::WithinAbs(0.05, 1e-12));
}

TEST_CASE("checkpoints round trip") {
    TrainConfig tc;
    ModelConfig mc = tiny_models();
    Rng rng(33);
    Estimator est = build_estimator(EstimatorKind::dragonnet, 4, OutcomeKind::continuous, mc, tc,
                                    rng);
    const auto dir = std::filesystem::temp_directory_path() / "catekit_ckpt_tests";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();
    save_estimator(path, est, tc);
    Estimator back = load_estimator(path);
    CHECK(back.kind == est.kind);
    CHECK(back.outcome == est.outcome);
    const auto a = est.named_parameters();
    const auto b = back.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second->values() == b[i].second->values());
    }
    // identical predictions from identical streams
    Tensor x(Shape{5, 4});
    Rng xr(34);
    for (auto& v : x.values()) v = xr.normal();
    Rng p1(35), p2(35);
    const auto s1 = predict_mc(est, x, 7, p1);
    const auto s2 = predict_mc(back, x, 7, p2);
    CHECK(s1.mu0.values() == s2.mu0.values());
    CHECK(s1.y1.values() == s2.y1.values());

    // saving the loaded model reproduces the bytes
    const std::string path2 = (dir / "model2.ckpt").string();
    save_estimator(path2, back, tc);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(bytes1 == bytes2);

    CHECK_THROWS_AS(load_estimator((dir / "missing.ckpt").string()), std::runtime_error);
}
