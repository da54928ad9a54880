#include <catch2/catch_amalgamated.hpp>

#include "catekit/autodiff.hpp"
#include "catekit/losses.hpp"
#include "catekit/nn.hpp"
#include "catekit/optim.hpp"
#include "catekit/rng.hpp"
#include "catekit/tensor.hpp"
#include "support/test_utils.hpp"

#include <cmath>

using namespace catekit;

TEST_CASE("tensor shape bookkeeping") {
    Tensor t(Shape{2, 3}, 1.0);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1.0}), std::invalid_argument);

    Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::matrix(3, 1, {1, 1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == 6.0);
    CHECK(c.at(1, 0) == 15.0);
    CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and splittable") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng c(123), d(124);
    bool differs = false;
    for (int i = 0; i < 10; ++i) differs = differs || c.next_u64() != d.next_u64();
    CHECK(differs);

    Rng root(7);
    Rng s1 = root.split(1), s1b = root.split(1), s2 = root.split(2);
    CHECK(s1.next_u64() == s1b.next_u64());
    CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("rng uniform and normal moments") {
    Rng rng(99);
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    CHECK_THAT(sum / n, Catch::Matchers::WithinAbs(0.5, 0.01));

    double nsum = 0.0, nsum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        nsum += z;
        nsum2 += z * z;
    }
    CHECK_THAT(nsum / n, Catch::Matchers::WithinAbs(0.0, 0.02));
    CHECK_THAT(nsum2 / n, Catch::Matchers::WithinAbs(1.0, 0.03));
}

TEST_CASE("dropout mask semantics") {
    Rng rng(1);
    SECTION("p=0 gives exact ones") {
        const Tensor m = sample_dropout_mask(rng, 0.0, 3);
        CHECK(m.values() == std::vector<double>{1.0, 1.0, 1.0});
    }
    SECTION("degenerate p rejected") {
        CHECK_THROWS_AS(sample_dropout_mask(rng, 1.0, 3), std::invalid_argument);
    }
    SECTION("zero fraction matches p at 1e5 draws") {
        const double p = 0.5;
        const std::size_t n = 100000;
        const Tensor m = sample_dropout_mask(rng, p, n);
        std::size_t zeros = 0;
        double mean = 0.0;
        for (double v : m.values()) {
            zeros += v == 0.0;
            mean += v;
        }
        CHECK_THAT(static_cast<double>(zeros) / n, Catch::Matchers::WithinAbs(p, 0.01));
        // inverted dropout: mask expectation is 1
        CHECK_THAT(mean / n, Catch::Matchers::WithinAbs(1.0, 0.01));
    }
}

TEST_CASE("mlp forward identity case") {
    // single identity layer, weights = I, bias = 0
    Mlp mlp;
    DenseLayer l;
    l.weights = Tensor::matrix(2, 2, {1, 0, 0, 1});
    l.bias = Tensor(Shape{2});
    l.activation = Activation::identity;
    mlp.layers.push_back(l);
    const Tensor out = mlp_forward(mlp, Tensor::matrix(1, 2, {1, 2}));
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(0, 1) == 2.0);
}

TEST_CASE("all-ones mask equals maskless forward bit for bit") {
    Rng rng(5);
    MlpSpec spec;
    spec.input_dim = 4;
    spec.hidden = {8, 8};
    spec.output_dim = 2;
    spec.dropout_hidden = 0.3;
    spec.dropout_pre_output = 0.5;
    const Mlp mlp = make_mlp(rng, spec);
    Tensor x(Shape{3, 4});
    for (auto& v : x.values()) v = rng.uniform(-1, 1);

    std::vector<Tensor> ones;
    for (const auto& l : mlp.layers) ones.push_back(Tensor(Shape{l.out_dim()}, 1.0));
    const Tensor with = mlp_forward(mlp, x, &ones);
    const Tensor without = mlp_forward(mlp, x);
    REQUIRE(with.values() == without.values());
}

namespace {
double elu_ref(double v) { return v > 0.0 ? v : std::exp(v) - 1.0; }
}  // namespace

TEST_CASE("mlp forward matches straight-line reimplementation") {
    // independent oracle: unrolled affine/ELU chain over plain arrays
    Rng rng(17);
    MlpSpec spec;
    spec.input_dim = 3;
    spec.hidden = {5};
    spec.output_dim = 2;
    spec.output_activation = Activation::sigmoid;
    const Mlp mlp = make_mlp(rng, spec);

    const double x[3] = {0.3, -1.2, 0.7};
    double h[5];
    for (int j = 0; j < 5; ++j) {
        double s = mlp.layers[0].bias[j];
        for (int i = 0; i < 3; ++i) s += x[i] * mlp.layers[0].weights.at(i, j);
        h[j] = elu_ref(s);
    }
    double out[2];
    for (int j = 0; j < 2; ++j) {
        double s = mlp.layers[1].bias[j];
        for (int i = 0; i < 5; ++i) s += h[i] * mlp.layers[1].weights.at(i, j);
        out[j] = 1.0 / (1.0 + std::exp(-s));
    }

    const Tensor got = mlp_forward(mlp, Tensor::matrix(1, 3, {0.3, -1.2, 0.7}));
    CHECK_THAT(got.at(0, 0), Catch::Matchers::WithinRel(out[0], 1e-12));
    CHECK_THAT(got.at(0, 1), Catch::Matchers::WithinRel(out[1], 1e-12));
}

TEST_CASE("forward shape errors name the offending layer") {
    Rng rng(2);
    MlpSpec spec;
    spec.input_dim = 4;
    spec.hidden = {6};
    spec.output_dim = 1;
    const Mlp mlp = make_mlp(rng, spec);
    CHECK_THROWS_WITH(mlp_forward(mlp, Tensor(Shape{2, 5})),
                      Catch::Matchers::ContainsSubstring("layer 0"));
    std::vector<Tensor> bad_masks{Tensor(Shape{7}, 1.0), Tensor(Shape{1}, 1.0)};
    CHECK_THROWS_WITH(mlp_forward(mlp, Tensor(Shape{2, 4}), &bad_masks),
                      Catch::Matchers::ContainsSubstring("mask 0"));
}

TEST_CASE("backward: analytic derivative of w^2") {
    Tape tape;
    Var w = tape.leaf(Tensor::scalar(3.0));
    Var loss = tape.square(w);
    tape.backward(loss);
    CHECK(tape.grad(w)[0] == 6.0);
}

TEST_CASE("backward requires scalar loss") {
    Tape tape;
    Var w = tape.leaf(Tensor(Shape{2}, 1.0));
    Var y = tape.square(w);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("gradient of a constant is zero") {
    Tape tape;
    Var w = tape.leaf(Tensor::scalar(2.0));
    Var c = tape.leaf(Tensor::scalar(5.0));
    Var loss = tape.mean(c);
    tape.backward(loss);
    CHECK(tape.grad(w)[0] == 0.0);
}

TEST_CASE("mlp + bce gradients match central finite differences") {
    Rng rng(11);
    MlpSpec spec;
    spec.input_dim = 3;
    spec.hidden = {6, 4};
    spec.output_dim = 1;
    spec.output_activation = Activation::sigmoid;
    Mlp mlp = make_mlp(rng, spec);
    Tensor x(Shape{5, 3});
    for (auto& v : x.values()) v = rng.uniform(-1, 1);
    Tensor y(Shape{5, 1});
    for (auto& v : y.values()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;

    Tape tape;
    MlpVars vars = mlp_forward(tape, mlp, tape.leaf(x));
    Var loss = tape.loss_bce(vars.output, y);
    tape.backward(loss);
    std::vector<Tensor> grads;
    collect_mlp_grads(tape, vars, grads);

    auto loss_fn = [&]() {
        Tape t2;
        MlpVars v2 = mlp_forward(t2, mlp, t2.leaf(x));
        return t2.value(t2.loss_bce(v2.output, y)).item();
    };
    const auto report = testing::fd_gradient_check(loss_fn, mlp.parameters(), grads);
    INFO("checked " << report.checked << " coordinates");
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("every op kind passes a finite-difference check") {
    Rng rng(23);
    // exercise matmul/add_row/elu/sigmoid/exp/log/square/mul/sub/gather/slice/
    // pairwise_sqdist/kl/gaussian_nll in one recorded expression
    Tensor a_init(Shape{4, 3}), b_init(Shape{3, 4}), c_init(Shape{4}), lv_init(Shape{});
    for (auto& v : a_init.values()) v = rng.uniform(0.2, 1.0);
    for (auto& v : b_init.values()) v = rng.uniform(-0.8, 0.8);
    for (auto& v : c_init.values()) v = rng.uniform(-0.5, 0.5);
    lv_init = Tensor::scalar(0.3);
    Tensor target(Shape{2, 2});
    for (auto& v : target.values()) v = rng.uniform(-1, 1);

    auto build = [&](Tape& tape, Var& a, Var& b, Var& c, Var& lv) {
        a = tape.leaf(a_init);
        b = tape.leaf(b_init);
        c = tape.leaf(c_init);
        lv = tape.leaf(lv_init);
        Var m = tape.add_row(tape.matmul(a, b), c);            // 4x4
        Var e = tape.elu(m);
        Var s = tape.sigmoid(tape.scale(e, 0.5));
        Var sq = tape.square(tape.add_scalar(s, 0.1));
        Var lg = tape.log(tape.add_scalar(sq, 1.0));
        Var g = tape.gather_rows(lg, {0, 2});                  // 2x4
        Var left = tape.slice_cols(g, 0, 2);
        Var right = tape.slice_cols(g, 2, 2);
        Var pd = tape.pairwise_sqdist(left, right);            // 2x2
        Var ex = tape.exp(tape.scale(pd, -0.3));
        Var mixed = tape.mul(tape.sub(left, right), tape.sub(right, left));
        Var l1 = tape.loss_gaussian_nll(ex, lv, target);
        Var l2 = tape.kl_std_normal(mixed, tape.scale(mixed, 0.5));
        Var l3 = tape.loss_mse(tape.sum(right), Tensor::scalar(0.7));
        return tape.add(tape.add(l1, l2), l3);
    };

    Tape tape;
    Var a, b, c, lv;
    Var loss = build(tape, a, b, c, lv);
    tape.backward(loss);
    std::vector<Tensor> grads{tape.grad(a), tape.grad(b), tape.grad(c), tape.grad(lv)};
    auto loss_fn = [&]() {
        Tape t2;
        Var a2, b2, c2, lv2;
        return t2.value(build(t2, a2, b2, c2, lv2)).item();
    };
    const auto report = testing::fd_gradient_check(
        loss_fn, {&a_init, &b_init, &c_init, &lv_init}, grads);
    INFO("checked " << report.checked << " coordinates");
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("loss values match analytic cases") {
    CHECK_THAT(loss_bce(Tensor::row({0.5}), Tensor::row({1.0})),
               Catch::Matchers::WithinRel(std::log(2.0), 1e-12));
    CHECK(loss_mse(Tensor::row({0.3, -0.7}), Tensor::row({0.3, -0.7})) == 0.0);
    // log_variance = 0 reduces to 0.5*mse + 0.5*ln(2*pi)
    Rng rng(3);
    Tensor pred(Shape{10}), targ(Shape{10});
    for (auto& v : pred.values()) v = rng.uniform(-2, 2);
    for (auto& v : targ.values()) v = rng.uniform(-2, 2);
    const double nll = loss_gaussian_nll(pred, 0.0, targ);
    const double expected = 0.5 * loss_mse(pred, targ) + 0.5 * std::log(2.0 * M_PI);
    CHECK_THAT(nll, Catch::Matchers::WithinRel(expected, 1e-12));
    CHECK_THROWS_AS(loss_bce(Tensor::row({0.5}), Tensor::row({1.0, 0.0})), std::invalid_argument);
}

TEST_CASE("tape losses agree with plain losses") {
    Rng rng(31);
    Tensor pred(Shape{7, 1}), targ(Shape{7, 1});
    for (auto& v : pred.values()) v = rng.uniform(0.05, 0.95);
    for (auto& v : targ.values()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Tape tape;
    CHECK_THAT(tape.value(tape.loss_bce(tape.leaf(pred), targ)).item(),
               Catch::Matchers::WithinRel(loss_bce(pred, targ), 1e-14));
    CHECK_THAT(tape.value(tape.loss_mse(tape.leaf(pred), targ)).item(),
               Catch::Matchers::WithinRel(loss_mse(pred, targ), 1e-14));
    CHECK_THAT(tape.value(tape.loss_gaussian_nll(tape.leaf(pred), tape.leaf(Tensor::scalar(0.4)),
                                                 targ))
                   .item(),
               Catch::Matchers::WithinRel(loss_gaussian_nll(pred, 0.4, targ), 1e-14));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    Tensor p = Tensor::row({1.0, -2.0, 3.0});
    std::vector<Tensor*> params{&p};
    AdamState state = AdamState::init(params, 1e-3, 0.0);
    adam_step(params, {Tensor(Shape{3})}, state);
    CHECK(p.values() == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(state.step == 1);
}

TEST_CASE("adam first step is -lr*sign(g) up to epsilon correction") {
    // hand computation: mhat = g, vhat = g^2, update = -lr*g/(|g|+eps)
    Tensor p = Tensor::row({0.5, -0.25});
    std::vector<Tensor*> params{&p};
    AdamState state = AdamState::init(params, 1e-3, 0.0);
    Tensor g = Tensor::row({0.2, -3.0});
    adam_step(params, {g}, state);
    for (std::size_t i = 0; i < 2; ++i) {
        const double expected =
            (i == 0 ? 0.5 : -0.25) - 1e-3 * g[i] / (std::abs(g[i]) + state.epsilon);
        CHECK_THAT(p[i], Catch::Matchers::WithinRel(expected, 1e-9));
    }
}

TEST_CASE("adam trajectory is replay identical") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor p(Shape{4});
        for (auto& v : p.values()) v = rng.uniform(-1, 1);
        std::vector<Tensor*> params{&p};
        AdamState state = AdamState::init(params, 1e-2, 1e-3);
        for (int step = 0; step < 50; ++step) {
            Tensor g(Shape{4});
            for (auto& v : g.values()) v = rng.normal();
            adam_step(params, {g}, state);
        }
        return p.values();
    };
    CHECK(run(42) == run(42));
}

TEST_CASE("adam rejects NaN gradients") {
    Tensor p = Tensor::row({1.0});
    std::vector<Tensor*> params{&p};
    AdamState state = AdamState::init(params, 1e-3, 0.0);
    Tensor g = Tensor::row({std::nan("")});
    CHECK_THROWS_WITH(adam_step(params, {g}, state),
                      Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("decoupled weight decay shrinks parameters with zero gradient history") {
    Tensor p = Tensor::row({2.0});
    std::vector<Tensor*> params{&p};
    AdamState state = AdamState::init(params, 0.1, 0.5);
    adam_step(params, {Tensor(Shape{1})}, state);
    // pure decay: p -= lr * wd * p
    CHECK_THAT(p[0], Catch::Matchers::WithinRel(2.0 - 0.1 * 0.5 * 2.0, 1e-12));
}
