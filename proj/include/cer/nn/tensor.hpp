#pragma once

#include <Eigen/Dense>

#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace cer::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Activation batch stored channel-major: one row per channel, one column per
/// (sample, y, x) position, sample-major then row-major within a sample.
template <typename Scalar>
struct Tensor {
    Mat<Scalar> data;
    int batch = 0;
    int height = 0;
    int width = 0;

    Tensor() = default;
    Tensor(int channels, int n, int h, int w)
        : data(Mat<Scalar>::Zero(channels, Eigen::Index(n) * h * w)), batch(n), height(h), width(w) {}

    int channels() const { return static_cast<int>(data.rows()); }
    Eigen::Index plane() const { return Eigen::Index(height) * width; }
    Eigen::Index column(int n, int y, int x) const { return (Eigen::Index(n) * height + y) * width + x; }
};

/// A named tensor owned by a module. Storage is allocated on first initialization so
/// that large reference architectures can be inspected without materializing weights.
template <typename Scalar>
struct Parameter {
    std::vector<int> shape;
    Vec<Scalar> value;
    Vec<Scalar> grad;

    Parameter() = default;
    explicit Parameter(std::vector<int> s) : shape(std::move(s)) {}

    long numel() const {
        return std::accumulate(shape.begin(), shape.end(), 1L, std::multiplies<long>());
    }
    bool allocated() const { return value.size() == numel(); }
    void allocate(Scalar fill = 0) {
        value = Vec<Scalar>::Constant(numel(), fill);
        grad = Vec<Scalar>::Zero(numel());
    }
};

template <typename Scalar>
struct NamedParameter {
    std::string name;
    Parameter<Scalar>* param;
    /// Buffers (running statistics) are persisted but not optimized or counted.
    bool trainable;
};

template <typename Scalar>
using ParameterList = std::vector<NamedParameter<Scalar>>;

}  // namespace cer::nn
