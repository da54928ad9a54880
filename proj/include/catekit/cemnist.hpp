// Causal-effect MNIST benchmark generator.
//
// Sampling distribution over digits: nine with probability 0.5, every other
// digit with probability 0.5/9. Treatment assignment: nines Bernoulli(1/9),
// twos always treated (strict non-overlap), all other digits Bernoulli(0.5).
// Potential outcomes are deterministic: odd digits have mu0=1, mu1=0
// (effect -1); even digits have mu0=0, mu1=1 (effect +1). The test split is
// drawn from the held-out image pool with the same digit and treatment
// proportions. Digit labels are kept as strata metadata for reporting only.
#pragma once

#include "catekit/dataset.hpp"
#include "catekit/mnist_idx.hpp"
#include "catekit/rng.hpp"

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

struct CemnistOptions {
    double fraction = 1.0;       // scale on the 12000-sample training budget
    double test_fraction = 0.1;  // test size relative to the training size
    bool downsample = false;     // 2x2 average pooling on the images
};

namespace detail {

inline Tensor pool2x2(const Tensor& pixels, std::size_t h, std::size_t w) {
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor out(Shape{pixels.rows(), oh * ow});
    for (std::size_t i = 0; i < pixels.rows(); ++i) {
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t c = 0; c < ow; ++c) {
                const std::size_t r0 = 2 * r, c0 = 2 * c;
                const double s = pixels.at(i, r0 * w + c0) + pixels.at(i, r0 * w + c0 + 1) +
                                 pixels.at(i, (r0 + 1) * w + c0) + pixels.at(i, (r0 + 1) * w + c0 + 1);
                out.at(i, r * ow + c) = s * 0.25;
            }
        }
    }
    return out;
}

inline double cemnist_treat_probability(int digit) {
    if (digit == 9) return 1.0 / 9.0;
    if (digit == 2) return 1.0;
    return 0.5;
}

inline CateDataset sample_cemnist_split(const Tensor& pixels, const std::vector<int>& labels,
                                        std::size_t total, Rng& rng,
                                        const std::vector<std::string>& feature_names) {
    // class of each sample ~ p(x): nine w.p. 0.5, others w.p. 0.5/9
    std::array<std::size_t, 10> want{};
    for (std::size_t i = 0; i < total; ++i) {
        const double u = rng.uniform();
        int digit;
        if (u < 0.5) {
            digit = 9;
        } else {
            digit = static_cast<int>((u - 0.5) / (0.5 / 9.0));
            if (digit > 8) digit = 8;
        }
        want[static_cast<std::size_t>(digit)] += 1;
    }

    std::array<std::vector<std::size_t>, 10> pool;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] > 9) {
            throw std::invalid_argument("cemnist: label " + std::to_string(labels[i]) +
                                        " outside 0..9");
        }
        pool[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    std::vector<std::size_t> chosen;
    std::vector<int> chosen_digit;
    for (int d = 0; d < 10; ++d) {
        auto& p = pool[static_cast<std::size_t>(d)];
        if (want[static_cast<std::size_t>(d)] > p.size()) {
            throw std::runtime_error("cemnist: need " + std::to_string(want[d]) + " images of digit " +
                                     std::to_string(d) + " but only " + std::to_string(p.size()) +
                                     " are available; reduce the fraction");
        }
        rng.shuffle(p);
        for (std::size_t k = 0; k < want[static_cast<std::size_t>(d)]; ++k) {
            chosen.push_back(p[k]);
            chosen_digit.push_back(d);
        }
    }

    CateDataset ds;
    ds.outcome = OutcomeKind::binary;
    ds.feature_names = feature_names;
    const std::size_t dcols = pixels.cols();
    ds.X = Tensor(Shape{chosen.size(), dcols});
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        for (std::size_t j = 0; j < dcols; ++j) ds.X.at(k, j) = pixels.at(chosen[k], j);
        const int digit = chosen_digit[k];
        const int t = rng.bernoulli(cemnist_treat_probability(digit)) ? 1 : 0;
        const bool odd = digit % 2 == 1;
        const double mu0 = odd ? 1.0 : 0.0;
        const double mu1 = odd ? 0.0 : 1.0;
        ds.t.push_back(t);
        ds.y.push_back(t == 1 ? mu1 : mu0);
        ds.mu0_true.push_back(mu0);
        ds.mu1_true.push_back(mu1);
        ds.cate_true.push_back(mu1 - mu0);
        ds.strata.push_back(digit);
    }
    ds.validate();
    return ds;
}

}  // namespace detail

inline Replication generate_cemnist(const MnistImages& train_images,
                                    const std::vector<int>& train_labels,
                                    const MnistImages& test_images,
                                    const std::vector<int>& test_labels, Rng& rng,
                                    const CemnistOptions& options = {}) {
    if (options.fraction <= 0.0 || options.fraction > 1.0) {
        throw std::invalid_argument("cemnist fraction must be in (0,1]");
    }
    if (train_labels.size() != train_images.pixels.rows() ||
        test_labels.size() != test_images.pixels.rows()) {
        throw std::invalid_argument("cemnist: image/label count mismatch");
    }
    Tensor train_px = train_images.pixels;
    Tensor test_px = test_images.pixels;
    if (options.downsample) {
        train_px = detail::pool2x2(train_px, train_images.image_height, train_images.image_width);
        test_px = detail::pool2x2(test_px, test_images.image_height, test_images.image_width);
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < train_px.cols(); ++j) names.push_back("px" + std::to_string(j));

    const auto total =
        static_cast<std::size_t>(std::llround(12000.0 * options.fraction));
    const auto test_total =
        static_cast<std::size_t>(std::llround(static_cast<double>(total) * options.test_fraction));

    Replication rep;
    rep.seed = rng.seed();
    rep.train = detail::sample_cemnist_split(train_px, train_labels, total, rng, names);
    rep.test = detail::sample_cemnist_split(test_px, test_labels, test_total, rng, names);
    return rep;
}

}  // namespace catekit
