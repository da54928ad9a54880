// Dense layers and MLPs with inverted-dropout masks.
//
// A dropout mask is a width vector whose entries are 0 with probability p and
// 1/(1-p) otherwise, applied multiplicatively to a layer's affine output
// before the activation. One mask draw per layer corresponds to one draw of
// the network parameters from the MC-dropout posterior; passing no masks (or
// all-ones masks) gives the deterministic mean network.
#pragma once

#include "catekit/autodiff.hpp"
#include "catekit/rng.hpp"
#include "catekit/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

enum class Activation { identity, elu, sigmoid };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::elu: return "elu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

struct DenseLayer {
    Tensor weights;  // in x out
    Tensor bias;     // out
    double dropout_prob = 0.0;
    Activation activation = Activation::identity;

    std::size_t in_dim() const { return weights.rows(); }
    std::size_t out_dim() const { return weights.cols(); }
};

struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps;
        for (auto& l : layers) {
            ps.push_back(&l.weights);
            ps.push_back(&l.bias);
        }
        return ps;
    }
};

// Glorot-uniform initialization, bias zero.
inline DenseLayer make_dense_layer(Rng& rng, std::size_t in, std::size_t out, Activation act,
                                   double dropout_prob = 0.0) {
    if (dropout_prob >= 1.0 || dropout_prob < 0.0) {
        throw std::invalid_argument("degenerate dropout probability " + std::to_string(dropout_prob));
    }
    DenseLayer layer;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    layer.weights = Tensor(Shape{in, out});
    for (auto& w : layer.weights.values()) w = rng.uniform(-limit, limit);
    layer.bias = Tensor(Shape{out});
    layer.dropout_prob = dropout_prob;
    layer.activation = act;
    return layer;
}

struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t output_dim = 1;
    Activation output_activation = Activation::identity;
    double dropout_hidden = 0.0;
    double dropout_pre_output = 0.0;
};

// Hidden layers are ELU; the last hidden layer carries the pre-output dropout
// probability, the output layer carries none.
inline Mlp make_mlp(Rng& rng, const MlpSpec& spec) {
    Mlp mlp;
    std::size_t in = spec.input_dim;
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
        const bool last_hidden = (i + 1 == spec.hidden.size());
        const double p = last_hidden ? spec.dropout_pre_output : spec.dropout_hidden;
        mlp.layers.push_back(make_dense_layer(rng, in, spec.hidden[i], Activation::elu, p));
        in = spec.hidden[i];
    }
    mlp.layers.push_back(make_dense_layer(rng, in, spec.output_dim, spec.output_activation, 0.0));
    return mlp;
}

inline Tensor sample_dropout_mask(Rng& rng, double p, std::size_t width) {
    if (p >= 1.0 || p < 0.0) {
        throw std::invalid_argument("degenerate dropout probability " + std::to_string(p));
    }
    Tensor mask(Shape{width}, 1.0);
    if (p == 0.0) return mask;
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& m : mask.values()) m = rng.bernoulli(p) ? 0.0 : keep_scale;
    return mask;
}

// One mask per layer, each of that layer's output width; a single draw of
// the network parameters, shared across every row it is applied to. This is
// the MC-prediction path.
inline std::vector<Tensor> sample_dropout_masks(Rng& rng, const Mlp& mlp) {
    std::vector<Tensor> masks;
    masks.reserve(mlp.layers.size());
    for (const auto& l : mlp.layers) masks.push_back(sample_dropout_mask(rng, l.dropout_prob, l.out_dim()));
    return masks;
}

// Per-row masks (rows x width per layer) for training steps: every unit in
// the batch sees an independent mask draw, standard dropout.
inline std::vector<Tensor> sample_dropout_masks_rows(Rng& rng, const Mlp& mlp, std::size_t rows) {
    std::vector<Tensor> masks;
    masks.reserve(mlp.layers.size());
    for (const auto& l : mlp.layers) {
        const double p = l.dropout_prob;
        if (p >= 1.0 || p < 0.0) {
            throw std::invalid_argument("degenerate dropout probability " + std::to_string(p));
        }
        Tensor mask(Shape{rows, l.out_dim()}, 1.0);
        if (p > 0.0) {
            const double keep_scale = 1.0 / (1.0 - p);
            for (auto& m : mask.values()) m = rng.bernoulli(p) ? 0.0 : keep_scale;
        }
        masks.push_back(std::move(mask));
    }
    return masks;
}

namespace detail {
inline void check_forward_shapes(const Mlp& mlp, std::size_t input_cols,
                                 const std::vector<Tensor>* masks) {
    if (input_cols != mlp.input_dim()) {
        throw std::invalid_argument("forward: input width " + std::to_string(input_cols) +
                                    " does not match layer 0 (expects " +
                                    std::to_string(mlp.input_dim()) + ")");
    }
    for (std::size_t i = 0; i + 1 < mlp.layers.size(); ++i) {
        if (mlp.layers[i].out_dim() != mlp.layers[i + 1].in_dim()) {
            throw std::invalid_argument("forward: layer " + std::to_string(i) + " output width " +
                                        std::to_string(mlp.layers[i].out_dim()) +
                                        " does not match layer " + std::to_string(i + 1));
        }
    }
    if (masks != nullptr) {
        if (masks->size() != mlp.layers.size()) {
            throw std::invalid_argument("forward: " + std::to_string(masks->size()) +
                                        " masks for " + std::to_string(mlp.layers.size()) +
                                        " layers");
        }
        for (std::size_t i = 0; i < masks->size(); ++i) {
            const Tensor& m = (*masks)[i];
            const std::size_t w = mlp.layers[i].out_dim();
            const bool row_mask = m.rank() <= 1 && m.size() == w;
            const bool full_mask = m.rank() == 2 && m.cols() == w;
            if (!row_mask && !full_mask) {
                throw std::invalid_argument("forward: mask " + std::to_string(i) + " of shape " +
                                            shape_to_string(m.shape()) +
                                            " does not match layer " + std::to_string(i) +
                                            " width " + std::to_string(w));
            }
        }
    }
}

// broadcast a width mask over rows; per-row masks apply elementwise
inline void apply_mask(Tensor& z, const Tensor& mask) {
    const std::size_t rows = z.rows(), cols = z.cols();
    if (mask.rank() == 2) {
        if (mask.rows() != rows) {
            throw std::invalid_argument("forward: per-row mask has " + std::to_string(mask.rows()) +
                                        " rows for a batch of " + std::to_string(rows));
        }
        for (std::size_t i = 0; i < z.size(); ++i) z[i] *= mask[i];
        return;
    }
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) z.at(i, j) *= mask[j];
    }
}

inline double apply_activation(Activation act, double x) {
    switch (act) {
        case Activation::identity: return x;
        case Activation::elu: return x > 0.0 ? x : std::expm1(x);
        case Activation::sigmoid:
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return x;
}
}  // namespace detail

// Plain (tape-free) forward pass; the fast path for MC prediction.
inline Tensor mlp_forward(const Mlp& mlp, const Tensor& input,
                          const std::vector<Tensor>* masks = nullptr) {
    detail::check_forward_shapes(mlp, input.cols(), masks);
    Tensor h = input;
    for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
        const DenseLayer& layer = mlp.layers[li];
        Tensor z = matmul(h, layer.weights);
        const std::size_t out = layer.out_dim();
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < out; ++j) z.at(i, j) += layer.bias[j];
        if (masks != nullptr) detail::apply_mask(z, (*masks)[li]);
        for (auto& v : z.values()) v = detail::apply_activation(layer.activation, v);
        h = std::move(z);
    }
    return h;
}

// Recorded forward pass. Layer parameters enter the tape as leaves; the
// returned ParamVars let the caller read gradients back after backward().
struct MlpVars {
    std::vector<Var> weights;
    std::vector<Var> biases;
    Var output;
};

inline MlpVars mlp_forward(Tape& tape, const Mlp& mlp, Var input,
                           const std::vector<Tensor>* masks = nullptr) {
    detail::check_forward_shapes(mlp, tape.value(input).cols(), masks);
    MlpVars vars;
    Var h = input;
    for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
        const DenseLayer& layer = mlp.layers[li];
        Var w = tape.leaf(layer.weights);
        Var b = tape.leaf(layer.bias);
        vars.weights.push_back(w);
        vars.biases.push_back(b);
        Var z = tape.add_row(tape.matmul(h, w), b);
        if (masks != nullptr && layer.dropout_prob > 0.0) {
            const Tensor& m = (*masks)[li];
            if (m.rank() == 2) {
                z = tape.mul(z, tape.leaf(m));
            } else {
                Tensor full(Shape{tape.value(z).rows(), layer.out_dim()});
                for (std::size_t i = 0; i < full.rows(); ++i)
                    for (std::size_t j = 0; j < full.cols(); ++j) full.at(i, j) = m[j];
                z = tape.mul(z, tape.leaf(std::move(full)));
            }
        }
        switch (layer.activation) {
            case Activation::identity: break;
            case Activation::elu: z = tape.elu(z); break;
            case Activation::sigmoid: z = tape.sigmoid(z); break;
        }
        h = z;
    }
    vars.output = h;
    return vars;
}

// Accumulate tape gradients for an MLP's parameters into a flat list aligned
// with Mlp::parameters() order.
inline void collect_mlp_grads(const Tape& tape, const MlpVars& vars, std::vector<Tensor>& out) {
    for (std::size_t i = 0; i < vars.weights.size(); ++i) {
        out.push_back(tape.grad(vars.weights[i]));
        out.push_back(tape.grad(vars.biases[i]));
    }
}

}  // namespace catekit
