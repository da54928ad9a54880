// Dense row-major tensor of doubles. The common currency of every numeric
// operation in this library; rank is dynamic but almost everything here is
// a scalar, a vector or an N x D matrix.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& s) {
    std::ostringstream oss;
    oss << "[";
    for (std::size_t i = 0; i < s.size(); ++i) oss << (i ? "," : "") << s[i];
    oss << "]";
    return oss.str();
}

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), values_(count_(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (count_(shape_) != values_.size()) {
            throw std::invalid_argument("tensor shape " + shape_to_string(shape_) +
                                        " does not match " + std::to_string(values_.size()) +
                                        " values");
        }
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    static Tensor row(std::initializer_list<double> vs) {
        return Tensor(Shape{vs.size()}, std::vector<double>(vs));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor(Shape{rows, cols}, std::move(values));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    bool is_scalar() const { return values_.size() == 1 && shape_.empty(); }

    std::size_t rows() const { require_rank_(2); return shape_[0]; }
    std::size_t cols() const { require_rank_(2); return shape_[1]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }

    double item() const {
        if (values_.size() != 1) {
            throw std::invalid_argument("item() on tensor of size " + std::to_string(values_.size()));
        }
        return values_[0];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : values_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

private:
    static std::size_t count_(const Shape& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }
    void require_rank_(std::size_t r) const {
        if (shape_.size() != r) {
            throw std::invalid_argument("expected rank-" + std::to_string(r) + " tensor, got " +
                                        shape_to_string(shape_));
        }
    }

    Shape shape_;
    std::vector<double> values_;
};

namespace detail {
using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenRowMajor>;
using ConstMatMap = Eigen::Map<const EigenRowMajor>;

inline ConstMatMap as_matrix(const Tensor& t) {
    return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                       static_cast<Eigen::Index>(t.cols()));
}
inline MatMap as_matrix(Tensor& t) {
    return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
}  // namespace detail

// C = A (m x k) * B (k x n)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw std::invalid_argument("matmul shape mismatch: " + shape_to_string(a.shape()) +
                                    " x " + shape_to_string(b.shape()));
    }
    Tensor c(Shape{a.rows(), b.cols()});
    detail::as_matrix(c).noalias() = detail::as_matrix(a) * detail::as_matrix(b);
    return c;
}

// C += A * B^T and friends; used by the autodiff backward passes.
inline void add_matmul(Tensor& c, const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    auto ma = detail::as_matrix(a);
    auto mb = detail::as_matrix(b);
    auto mc = detail::as_matrix(c);
    if (trans_a && trans_b) mc.noalias() += ma.transpose() * mb.transpose();
    else if (trans_a) mc.noalias() += ma.transpose() * mb;
    else if (trans_b) mc.noalias() += ma * mb.transpose();
    else mc.noalias() += ma * mb;
}

}  // namespace catekit
