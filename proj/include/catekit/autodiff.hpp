// Reverse-mode automatic differentiation over Tensor values.
//
// A Tape owns the recorded computation: each op appends a node holding its
// value and a closure that scatters the node's gradient back to its parents.
// backward() walks the tape once in reverse. Tapes are built per training
// step and thrown away; parameters enter as leaves and their gradients are
// read back out after backward().
#pragma once

#include "catekit/tensor.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace catekit {

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
};

class Tape {
public:
    Var leaf(Tensor value) {
        nodes_.push_back(Node{std::move(value), Tensor{}, nullptr});
        return Var{nodes_.size() - 1};
    }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise / structural ops -------------------------------------

    Var add(Var a, Var b) {
        require_same_shape_(a, b, "add");
        Tensor out = nodes_[a.id].value;
        const Tensor& vb = nodes_[b.id].value;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
        return push_(std::move(out), [a, b](Tape& t, const Tensor& g) {
            t.accumulate_(a, g);
            t.accumulate_(b, g);
        });
    }

    Var sub(Var a, Var b) {
        require_same_shape_(a, b, "sub");
        Tensor out = nodes_[a.id].value;
        const Tensor& vb = nodes_[b.id].value;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
        return push_(std::move(out), [a, b](Tape& t, const Tensor& g) {
            t.accumulate_(a, g);
            Tensor neg = g;
            for (auto& x : neg.values()) x = -x;
            t.accumulate_(b, neg);
        });
    }

    Var mul(Var a, Var b) {
        require_same_shape_(a, b, "mul");
        Tensor out = nodes_[a.id].value;
        const Tensor& vb = nodes_[b.id].value;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
        return push_(std::move(out), [a, b](Tape& t, const Tensor& g) {
            Tensor ga = g, gb = g;
            const Tensor& va = t.nodes_[a.id].value;
            const Tensor& vb2 = t.nodes_[b.id].value;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] *= vb2[i];
                gb[i] *= va[i];
            }
            t.accumulate_(a, ga);
            t.accumulate_(b, gb);
        });
    }

    Var scale(Var a, double c) {
        Tensor out = nodes_[a.id].value;
        for (auto& x : out.values()) x *= c;
        return push_(std::move(out), [a, c](Tape& t, const Tensor& g) {
            Tensor ga = g;
            for (auto& x : ga.values()) x *= c;
            t.accumulate_(a, ga);
        });
    }

    Var add_scalar(Var a, double c) {
        Tensor out = nodes_[a.id].value;
        for (auto& x : out.values()) x += c;
        return push_(std::move(out), [a](Tape& t, const Tensor& g) { t.accumulate_(a, g); });
    }

    Var exp(Var a) {
        Tensor out = nodes_[a.id].value;
        for (auto& x : out.values()) x = std::exp(x);
        Var v = push_(std::move(out), nullptr);
        nodes_[v.id].backward = [a, v](Tape& t, const Tensor& g) {
            Tensor ga = g;
            const Tensor& vv = t.nodes_[v.id].value;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] *= vv[i];
            t.accumulate_(a, ga);
        };
        return v;
    }

    Var log(Var a) {
        Tensor out = nodes_[a.id].value;
        for (auto& x : out.values()) x = std::log(x);
        return push_(std::move(out), [a](Tape& t, const Tensor& g) {
            Tensor ga = g;
            const Tensor& va = t.nodes_[a.id].value;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] /= va[i];
            t.accumulate_(a, ga);
        });
    }

    Var square(Var a) {
        Tensor out = nodes_[a.id].value;
        for (auto& x : out.values()) x *= x;
        return push_(std::move(out), [a](Tape& t, const Tensor& g) {
            Tensor ga = g;
            const Tensor& va = t.nodes_[a.id].value;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] *= 2.0 * va[i];
            t.accumulate_(a, ga);
        });
    }

    Var sigmoid(Var a) {
        Tensor out = nodes_[a.id].value;
        for (auto& x : out.values()) x = sigmoid_(x);
        Var v = push_(std::move(out), nullptr);
        nodes_[v.id].backward = [a, v](Tape& t, const Tensor& g) {
            Tensor ga = g;
            const Tensor& s = t.nodes_[v.id].value;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] *= s[i] * (1.0 - s[i]);
            t.accumulate_(a, ga);
        };
        return v;
    }

    Var elu(Var a) {
        Tensor out = nodes_[a.id].value;
        for (auto& x : out.values()) x = x > 0.0 ? x : std::expm1(x);
        Var v = push_(std::move(out), nullptr);
        nodes_[v.id].backward = [a, v](Tape& t, const Tensor& g) {
            Tensor ga = g;
            const Tensor& f = t.nodes_[v.id].value;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] *= f[i] > 0.0 ? 1.0 : f[i] + 1.0;
            t.accumulate_(a, ga);
        };
        return v;
    }

    // ---- linear algebra ----------------------------------------------------

    Var matmul(Var a, Var b) {
        Tensor out = catekit::matmul(nodes_[a.id].value, nodes_[b.id].value);
        return push_(std::move(out), [a, b](Tape& t, const Tensor& g) {
            t.ensure_grad_(a);
            t.ensure_grad_(b);
            add_matmul(t.nodes_[a.id].grad, g, t.nodes_[b.id].value, false, true);
            add_matmul(t.nodes_[b.id].grad, t.nodes_[a.id].value, g, true, false);
        });
    }

    // (m x n) + row vector (n), broadcast over rows
    Var add_row(Var a, Var bias) {
        const Tensor& va = nodes_[a.id].value;
        const Tensor& vb = nodes_[bias.id].value;
        if (va.rank() != 2 || vb.size() != va.cols()) {
            throw std::invalid_argument("add_row: bias of size " + std::to_string(vb.size()) +
                                        " against " + shape_to_string(va.shape()));
        }
        Tensor out = va;
        const std::size_t n = va.cols();
        for (std::size_t i = 0; i < va.rows(); ++i)
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += vb[j];
        return push_(std::move(out), [a, bias, n](Tape& t, const Tensor& g) {
            t.accumulate_(a, g);
            t.ensure_grad_(bias);
            Tensor& gb = t.nodes_[bias.id].grad;
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j);
        });
    }

    Var gather_rows(Var a, std::vector<std::size_t> idx) {
        const Tensor& va = nodes_[a.id].value;
        if (va.rank() != 2) throw std::invalid_argument("gather_rows expects a matrix");
        const std::size_t n = va.cols();
        Tensor out(Shape{idx.size(), n});
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t j = 0; j < n; ++j) out.at(k, j) = va.at(idx[k], j);
        return push_(std::move(out), [a, idx = std::move(idx), n](Tape& t, const Tensor& g) {
            t.ensure_grad_(a);
            Tensor& ga = t.nodes_[a.id].grad;
            for (std::size_t k = 0; k < idx.size(); ++k)
                for (std::size_t j = 0; j < n; ++j) ga.at(idx[k], j) += g.at(k, j);
        });
    }

    Var concat_cols(Var a, Var b) {
        const Tensor& va = nodes_[a.id].value;
        const Tensor& vb = nodes_[b.id].value;
        if (va.rank() != 2 || vb.rank() != 2 || va.rows() != vb.rows()) {
            throw std::invalid_argument("concat_cols shape mismatch: " +
                                        shape_to_string(va.shape()) + " vs " +
                                        shape_to_string(vb.shape()));
        }
        const std::size_t ca = va.cols(), cb = vb.cols();
        Tensor out(Shape{va.rows(), ca + cb});
        for (std::size_t i = 0; i < va.rows(); ++i) {
            for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = va.at(i, j);
            for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = vb.at(i, j);
        }
        return push_(std::move(out), [a, b, ca, cb](Tape& t, const Tensor& g) {
            t.ensure_grad_(a);
            t.ensure_grad_(b);
            Tensor& ga = t.nodes_[a.id].grad;
            Tensor& gb = t.nodes_[b.id].grad;
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
                for (std::size_t j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
            }
        });
    }

    Var slice_cols(Var a, std::size_t start, std::size_t count) {
        const Tensor& va = nodes_[a.id].value;
        if (va.rank() != 2 || start + count > va.cols()) {
            throw std::invalid_argument("slice_cols out of range on " + shape_to_string(va.shape()));
        }
        Tensor out(Shape{va.rows(), count});
        for (std::size_t i = 0; i < va.rows(); ++i)
            for (std::size_t j = 0; j < count; ++j) out.at(i, j) = va.at(i, start + j);
        return push_(std::move(out), [a, start, count](Tape& t, const Tensor& g) {
            t.ensure_grad_(a);
            Tensor& ga = t.nodes_[a.id].grad;
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < count; ++j) ga.at(i, start + j) += g.at(i, j);
        });
    }

    // Pairwise squared euclidean distances, (na x d),(nb x d) -> (na x nb).
    Var pairwise_sqdist(Var a, Var b) {
        const Tensor& va = nodes_[a.id].value;
        const Tensor& vb = nodes_[b.id].value;
        if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.cols()) {
            throw std::invalid_argument("pairwise_sqdist shape mismatch: " +
                                        shape_to_string(va.shape()) + " vs " +
                                        shape_to_string(vb.shape()));
        }
        const std::size_t na = va.rows(), nb = vb.rows(), d = va.cols();
        Tensor out(Shape{na, nb});
        for (std::size_t i = 0; i < na; ++i)
            for (std::size_t j = 0; j < nb; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = va.at(i, k) - vb.at(j, k);
                    s += diff * diff;
                }
                out.at(i, j) = s;
            }
        return push_(std::move(out), [a, b, na, nb, d](Tape& t, const Tensor& g) {
            t.ensure_grad_(a);
            t.ensure_grad_(b);
            const Tensor& va2 = t.nodes_[a.id].value;
            const Tensor& vb2 = t.nodes_[b.id].value;
            Tensor& ga = t.nodes_[a.id].grad;
            Tensor& gb = t.nodes_[b.id].grad;
            for (std::size_t i = 0; i < na; ++i)
                for (std::size_t j = 0; j < nb; ++j) {
                    const double w = 2.0 * g.at(i, j);
                    for (std::size_t k = 0; k < d; ++k) {
                        const double diff = va2.at(i, k) - vb2.at(j, k);
                        ga.at(i, k) += w * diff;
                        gb.at(j, k) -= w * diff;
                    }
                }
        });
    }

    // ---- reductions ---------------------------------------------------------

    Var sum(Var a) {
        double s = 0.0;
        for (double x : nodes_[a.id].value.values()) s += x;
        return push_(Tensor::scalar(s), [a](Tape& t, const Tensor& g) {
            t.ensure_grad_(a);
            Tensor& ga = t.nodes_[a.id].grad;
            for (auto& x : ga.values()) x += g[0];
        });
    }

    Var mean(Var a) {
        const std::size_t n = nodes_[a.id].value.size();
        if (n == 0) throw std::invalid_argument("mean of empty tensor");
        double s = 0.0;
        for (double x : nodes_[a.id].value.values()) s += x;
        return push_(Tensor::scalar(s / static_cast<double>(n)), [a, n](Tape& t, const Tensor& g) {
            t.ensure_grad_(a);
            const double w = g[0] / static_cast<double>(n);
            Tensor& ga = t.nodes_[a.id].grad;
            for (auto& x : ga.values()) x += w;
        });
    }

    // ---- losses -------------------------------------------------------------

    // Mean binary cross entropy; predictions clamped to [kBceClamp, 1-kBceClamp].
    static constexpr double kBceClamp = 1e-7;

    Var loss_bce(Var pred, const Tensor& target) {
        const Tensor& p = nodes_[pred.id].value;
        require_loss_shapes_(p, target, "loss_bce");
        const std::size_t n = p.size();
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double pc = clamp_prob_(p[i]);
            s -= target[i] * std::log(pc) + (1.0 - target[i]) * std::log(1.0 - pc);
        }
        return push_(Tensor::scalar(s / static_cast<double>(n)),
                     [pred, target, n](Tape& t, const Tensor& g) {
                         t.ensure_grad_(pred);
                         const Tensor& p2 = t.nodes_[pred.id].value;
                         Tensor& gp = t.nodes_[pred.id].grad;
                         const double w = g[0] / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i) {
                             if (p2[i] <= kBceClamp || p2[i] >= 1.0 - kBceClamp) continue;
                             gp[i] += w * (p2[i] - target[i]) / (p2[i] * (1.0 - p2[i]));
                         }
                     });
    }

    Var loss_mse(Var pred, const Tensor& target) {
        const Tensor& p = nodes_[pred.id].value;
        require_loss_shapes_(p, target, "loss_mse");
        const std::size_t n = p.size();
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = p[i] - target[i];
            s += d * d;
        }
        return push_(Tensor::scalar(s / static_cast<double>(n)),
                     [pred, target, n](Tape& t, const Tensor& g) {
                         t.ensure_grad_(pred);
                         const Tensor& p2 = t.nodes_[pred.id].value;
                         Tensor& gp = t.nodes_[pred.id].grad;
                         const double w = 2.0 * g[0] / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i) gp[i] += w * (p2[i] - target[i]);
                     });
    }

    // Gaussian negative log likelihood with a shared (homoscedastic) scalar
    // log variance parameter.
    Var loss_gaussian_nll(Var mean_pred, Var log_var, const Tensor& target) {
        const Tensor& m = nodes_[mean_pred.id].value;
        require_loss_shapes_(m, target, "loss_gaussian_nll");
        if (nodes_[log_var.id].value.size() != 1) {
            throw std::invalid_argument("loss_gaussian_nll expects scalar log variance");
        }
        const std::size_t n = m.size();
        const double lv = nodes_[log_var.id].value[0];
        const double inv_var = std::exp(-lv);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = target[i] - m[i];
            s += 0.5 * (lv + d * d * inv_var + std::log(2.0 * M_PI));
        }
        return push_(Tensor::scalar(s / static_cast<double>(n)),
                     [mean_pred, log_var, target, n](Tape& t, const Tensor& g) {
                         t.ensure_grad_(mean_pred);
                         t.ensure_grad_(log_var);
                         const Tensor& m2 = t.nodes_[mean_pred.id].value;
                         const double lv2 = t.nodes_[log_var.id].value[0];
                         const double iv = std::exp(-lv2);
                         Tensor& gm = t.nodes_[mean_pred.id].grad;
                         Tensor& gl = t.nodes_[log_var.id].grad;
                         const double w = g[0] / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i) {
                             const double d = target[i] - m2[i];
                             gm[i] += w * (-d * iv);
                             gl[0] += w * 0.5 * (1.0 - d * d * iv);
                         }
                     });
    }

    // Mean over rows of KL( N(mu_i, diag exp(logvar_i)) || N(0, I) ).
    Var kl_std_normal(Var mu, Var log_var) {
        const Tensor& m = nodes_[mu.id].value;
        const Tensor& lv = nodes_[log_var.id].value;
        if (!m.same_shape(lv) || m.rank() != 2) {
            throw std::invalid_argument("kl_std_normal shape mismatch: " +
                                        shape_to_string(m.shape()) + " vs " +
                                        shape_to_string(lv.shape()));
        }
        const std::size_t n = m.rows();
        double s = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            s += 0.5 * (m[i] * m[i] + std::exp(lv[i]) - lv[i] - 1.0);
        }
        return push_(Tensor::scalar(s / static_cast<double>(n)),
                     [mu, log_var, n](Tape& t, const Tensor& g) {
                         t.ensure_grad_(mu);
                         t.ensure_grad_(log_var);
                         const Tensor& m2 = t.nodes_[mu.id].value;
                         const Tensor& lv2 = t.nodes_[log_var.id].value;
                         Tensor& gm = t.nodes_[mu.id].grad;
                         Tensor& gl = t.nodes_[log_var.id].grad;
                         const double w = g[0] / static_cast<double>(n);
                         for (std::size_t i = 0; i < m2.size(); ++i) {
                             gm[i] += w * m2[i];
                             gl[i] += w * 0.5 * (std::exp(lv2[i]) - 1.0);
                         }
                     });
    }

    // ---- backward -----------------------------------------------------------

    void backward(Var loss) {
        if (nodes_[loss.id].value.size() != 1) {
            throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                        shape_to_string(nodes_[loss.id].value.shape()));
        }
        for (auto& node : nodes_) {
            node.grad = Tensor(node.value.shape());
        }
        nodes_[loss.id].grad[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            if (nodes_[i].backward && nodes_[i].grad.size() > 0) {
                nodes_[i].backward(*this, nodes_[i].grad);
            }
        }
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, const Tensor&)> backward;
    };

    static double sigmoid_(double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    static double clamp_prob_(double p) {
        return std::min(std::max(p, kBceClamp), 1.0 - kBceClamp);
    }

    Var push_(Tensor value, std::function<void(Tape&, const Tensor&)> backward) {
        nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward)});
        return Var{nodes_.size() - 1};
    }

    void ensure_grad_(Var v) {
        if (nodes_[v.id].grad.size() == 0 && nodes_[v.id].value.size() > 0) {
            nodes_[v.id].grad = Tensor(nodes_[v.id].value.shape());
        }
    }

    void accumulate_(Var v, const Tensor& g) {
        ensure_grad_(v);
        Tensor& gv = nodes_[v.id].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }

    void require_same_shape_(Var a, Var b, const char* op) const {
        if (!nodes_[a.id].value.same_shape(nodes_[b.id].value)) {
            throw std::invalid_argument(std::string(op) + " shape mismatch: " +
                                        shape_to_string(nodes_[a.id].value.shape()) + " vs " +
                                        shape_to_string(nodes_[b.id].value.shape()));
        }
    }

    static void require_loss_shapes_(const Tensor& pred, const Tensor& target, const char* op) {
        if (pred.size() != target.size()) {
            throw std::invalid_argument(std::string(op) + " length mismatch: " +
                                        std::to_string(pred.size()) + " vs " +
                                        std::to_string(target.size()));
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace catekit
