// Plain (tape-free) loss evaluations; the recorded versions on catekit::Tape
// compute the same quantities and are checked against these in the tests.
#pragma once

#include "catekit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace catekit {

constexpr double kBceClamp = 1e-7;

namespace detail {
inline void check_lengths(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw std::invalid_argument(std::string(op) + " length mismatch: " + std::to_string(a) +
                                    " vs " + std::to_string(b));
    }
}
}  // namespace detail

inline double loss_bce(const Tensor& pred, const Tensor& target) {
    detail::check_lengths(pred.size(), target.size(), "loss_bce");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred[i], kBceClamp, 1.0 - kBceClamp);
        s -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
    }
    return s / static_cast<double>(pred.size());
}

inline double loss_mse(const Tensor& pred, const Tensor& target) {
    detail::check_lengths(pred.size(), target.size(), "loss_mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

inline double loss_gaussian_nll(const Tensor& mean, double log_variance, const Tensor& target) {
    detail::check_lengths(mean.size(), target.size(), "loss_gaussian_nll");
    const double inv_var = std::exp(-log_variance);
    double s = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double d = target[i] - mean[i];
        s += 0.5 * (log_variance + d * d * inv_var + std::log(2.0 * M_PI));
    }
    return s / static_cast<double>(mean.size());
}

}  // namespace catekit
