#pragma once

// Layers with hand-written backward passes. Each module caches what its backward
// needs during a training-mode forward; a module instance appears once per graph.

#include "cer/nn/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cer::nn {

using Rng = std::mt19937_64;

/// How freshly built weights are drawn, following the reference implementations
/// of each architecture family.
struct InitRule {
    enum class ConvFan { In, Out };
    enum class LinearInit { Uniform, Normal001 };
    ConvFan conv_fan = ConvFan::Out;
    LinearInit linear = LinearInit::Uniform;
    bool zero_linear_bias = false;
};

template <typename Scalar>
class Module {
public:
    virtual ~Module() = default;
    virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) = 0;
    virtual Tensor<Scalar> backward(const Tensor<Scalar>& dy) = 0;
    virtual void parameters(const std::string& /*prefix*/, ParameterList<Scalar>& /*out*/) {}
    virtual void reset(Rng& /*rng*/, const InitRule& /*rule*/) {}
};

template <typename Scalar>
using ModulePtr = std::unique_ptr<Module<Scalar>>;

namespace detail {

template <typename Scalar>
void fill_normal(Parameter<Scalar>& p, Rng& rng, double stddev) {
    p.allocate();
    std::normal_distribution<double> d(0.0, stddev);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value(i) = static_cast<Scalar>(d(rng));
}

template <typename Scalar>
void fill_uniform(Parameter<Scalar>& p, Rng& rng, double bound) {
    p.allocate();
    std::uniform_real_distribution<double> d(-bound, bound);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value(i) = static_cast<Scalar>(d(rng));
}

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace detail

/// 2-D convolution without bias. groups is 1 (dense) or equal to the channel count (depthwise).
template <typename Scalar>
class Conv2d final : public Module<Scalar> {
public:
    Conv2d(int in, int out, int kernel, int stride = 1, int padding = 0, int groups = 1)
        : in_(in), out_(out), k_(kernel), stride_(stride), pad_(padding), groups_(groups),
          weight_({out, in / groups, kernel, kernel}) {
        if (groups != 1 && !(groups == in && in == out))
            throw std::invalid_argument("only dense or depthwise convolution is supported");
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        if (x.channels() != in_) throw std::invalid_argument("conv input channel mismatch");
        const int ho = detail::conv_out(x.height, k_, stride_, pad_);
        const int wo = detail::conv_out(x.width, k_, stride_, pad_);
        if (ho < 1 || wo < 1) throw std::invalid_argument("conv input smaller than kernel");
        Tensor<Scalar> y(out_, x.batch, ho, wo);
        if (training) input_ = x;
        if (depthwise()) {
            depthwise_forward(x, y);
            return y;
        }
        const Eigen::Map<const Mat<Scalar>> w(weight_.value.data(), out_, Eigen::Index(in_) * k_ * k_);
        if (pointwise()) {
            y.data.noalias() = w * x.data;
        } else {
            im2col(x, ho, wo, col_);
            y.data.noalias() = w * col_;
            if (!training) col_.resize(0, 0);
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        const Tensor<Scalar>& x = input_;
        Tensor<Scalar> dx(in_, x.batch, x.height, x.width);
        if (depthwise()) {
            depthwise_backward(x, dy, dx);
            return dx;
        }
        const Eigen::Map<const Mat<Scalar>> w(weight_.value.data(), out_, Eigen::Index(in_) * k_ * k_);
        Eigen::Map<Mat<Scalar>> dw(weight_.grad.data(), out_, Eigen::Index(in_) * k_ * k_);
        if (pointwise()) {
            dw.noalias() += dy.data * x.data.transpose();
            dx.data.noalias() = w.transpose() * dy.data;
        } else {
            dw.noalias() += dy.data * col_.transpose();
            const Mat<Scalar> dcol = w.transpose() * dy.data;
            col2im(dcol, dy.height, dy.width, dx);
        }
        return dx;
    }

    void parameters(const std::string& prefix, ParameterList<Scalar>& out) override {
        out.push_back({prefix + "weight", &weight_, true});
    }

    void reset(Rng& rng, const InitRule& rule) override {
        const int fan = rule.conv_fan == InitRule::ConvFan::Out ? out_ / groups_ * k_ * k_ : in_ / groups_ * k_ * k_;
        detail::fill_normal(weight_, rng, std::sqrt(2.0 / fan));
    }

private:
    bool depthwise() const { return groups_ > 1; }
    bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

    void im2col(const Tensor<Scalar>& x, int ho, int wo, Mat<Scalar>& col) const {
        col.resize(Eigen::Index(in_) * k_ * k_, Eigen::Index(x.batch) * ho * wo);
        for (int c = 0; c < in_; ++c)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    auto dst = col.row((Eigen::Index(c) * k_ + ky) * k_ + kx);
                    const Scalar* src = x.data.row(c).data();
                    Eigen::Index j = 0;
                    for (int n = 0; n < x.batch; ++n)
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            for (int ox = 0; ox < wo; ++ox, ++j) {
                                const int ix = ox * stride_ - pad_ + kx;
                                dst(j) = (iy >= 0 && iy < x.height && ix >= 0 && ix < x.width)
                                             ? src[x.column(n, iy, ix)]
                                             : Scalar(0);
                            }
                        }
                }
    }

    void col2im(const Mat<Scalar>& dcol, int ho, int wo, Tensor<Scalar>& dx) const {
        for (int c = 0; c < in_; ++c)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    const auto src = dcol.row((Eigen::Index(c) * k_ + ky) * k_ + kx);
                    Scalar* dst = dx.data.row(c).data();
                    Eigen::Index j = 0;
                    for (int n = 0; n < dx.batch; ++n)
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            for (int ox = 0; ox < wo; ++ox, ++j) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (iy >= 0 && iy < dx.height && ix >= 0 && ix < dx.width)
                                    dst[dx.column(n, iy, ix)] += src(j);
                            }
                        }
                }
    }

    void depthwise_forward(const Tensor<Scalar>& x, Tensor<Scalar>& y) const {
        for (int c = 0; c < in_; ++c) {
            const Scalar* w = weight_.value.data() + Eigen::Index(c) * k_ * k_;
            const Scalar* src = x.data.row(c).data();
            Scalar* dst = y.data.row(c).data();
            for (int n = 0; n < x.batch; ++n)
                for (int oy = 0; oy < y.height; ++oy)
                    for (int ox = 0; ox < y.width; ++ox) {
                        Scalar acc = 0;
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= x.height) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix < 0 || ix >= x.width) continue;
                                acc += w[ky * k_ + kx] * src[x.column(n, iy, ix)];
                            }
                        }
                        dst[y.column(n, oy, ox)] = acc;
                    }
        }
    }

    void depthwise_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy, Tensor<Scalar>& dx) {
        for (int c = 0; c < in_; ++c) {
            const Scalar* w = weight_.value.data() + Eigen::Index(c) * k_ * k_;
            Scalar* dw = weight_.grad.data() + Eigen::Index(c) * k_ * k_;
            const Scalar* src = x.data.row(c).data();
            const Scalar* g = dy.data.row(c).data();
            Scalar* dsrc = dx.data.row(c).data();
            for (int n = 0; n < x.batch; ++n)
                for (int oy = 0; oy < dy.height; ++oy)
                    for (int ox = 0; ox < dy.width; ++ox) {
                        const Scalar go = g[dy.column(n, oy, ox)];
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= x.height) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix < 0 || ix >= x.width) continue;
                                const Eigen::Index at = x.column(n, iy, ix);
                                dw[ky * k_ + kx] += go * src[at];
                                dsrc[at] += go * w[ky * k_ + kx];
                            }
                        }
                    }
        }
    }

    int in_, out_, k_, stride_, pad_, groups_;
    Parameter<Scalar> weight_;
    Tensor<Scalar> input_;
    Mat<Scalar> col_;
};

/// Batch normalization over (batch, height, width) per channel.
template <typename Scalar>
class BatchNorm2d final : public Module<Scalar> {
public:
    explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1)
        : c_(channels), eps_(eps), momentum_(momentum), gamma_({channels}), beta_({channels}),
          running_mean_({channels}), running_var_({channels}) {}

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        if (x.channels() != c_) throw std::invalid_argument("batchnorm channel mismatch");
        Tensor<Scalar> y = x;
        const auto m = x.data.cols();
        if (training) {
            mean_ = x.data.rowwise().mean();
            xhat_ = x;
            xhat_.data.colwise() -= mean_;
            const Vec<Scalar> var = xhat_.data.array().square().rowwise().sum() / Scalar(m);
            inv_std_ = (var.array() + Scalar(eps_)).rsqrt();
            xhat_.data.array().colwise() *= inv_std_.array();
            const Scalar mom(momentum_);
            running_mean_.value = (Scalar(1) - mom) * running_mean_.value + mom * mean_;
            const Scalar unbias = m > 1 ? Scalar(m) / Scalar(m - 1) : Scalar(1);
            running_var_.value = (Scalar(1) - mom) * running_var_.value + mom * unbias * var;
            y.data = xhat_.data;
        } else {
            y.data.colwise() -= running_mean_.value;
            y.data.array().colwise() *= (running_var_.value.array() + Scalar(eps_)).rsqrt();
        }
        y.data.array().colwise() *= gamma_.value.array();
        y.data.colwise() += beta_.value;
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        const Scalar m = Scalar(dy.data.cols());
        const Vec<Scalar> dbeta = dy.data.rowwise().sum();
        const Vec<Scalar> dgamma = (dy.data.array() * xhat_.data.array()).rowwise().sum();
        gamma_.grad += dgamma;
        beta_.grad += dbeta;
        // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
        Tensor<Scalar> dx = dy;
        dx.data *= m;
        dx.data.colwise() -= dbeta;
        dx.data.array() -= xhat_.data.array().colwise() * dgamma.array();
        const Vec<Scalar> scale = gamma_.value.array() * inv_std_.array() / m;
        dx.data.array().colwise() *= scale.array();
        return dx;
    }

    void parameters(const std::string& prefix, ParameterList<Scalar>& out) override {
        out.push_back({prefix + "weight", &gamma_, true});
        out.push_back({prefix + "bias", &beta_, true});
        out.push_back({prefix + "running_mean", &running_mean_, false});
        out.push_back({prefix + "running_var", &running_var_, false});
    }

    void reset(Rng&, const InitRule&) override {
        gamma_.allocate(Scalar(1));
        beta_.allocate(Scalar(0));
        running_mean_.allocate(Scalar(0));
        running_var_.allocate(Scalar(1));
    }

private:
    int c_;
    double eps_, momentum_;
    Parameter<Scalar> gamma_, beta_, running_mean_, running_var_;
    Vec<Scalar> mean_, inv_std_;
    Tensor<Scalar> xhat_;
};

/// ReLU, optionally clipped at an upper bound (ReLU6).
template <typename Scalar>
class ReLU final : public Module<Scalar> {
public:
    explicit ReLU(Scalar cap = std::numeric_limits<Scalar>::infinity()) : cap_(cap) {}

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        Tensor<Scalar> y = x;
        y.data = x.data.cwiseMax(Scalar(0)).cwiseMin(cap_);
        if (training) input_ = x;
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        Tensor<Scalar> dx = dy;
        dx.data = (input_.data.array() > Scalar(0) && input_.data.array() < cap_).select(dy.data, Scalar(0));
        return dx;
    }

private:
    Scalar cap_;
    Tensor<Scalar> input_;
};

/// Max pooling with implicit -inf padding.
template <typename Scalar>
class MaxPool2d final : public Module<Scalar> {
public:
    MaxPool2d(int kernel, int stride, int padding) : k_(kernel), stride_(stride), pad_(padding) {}

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        const int ho = detail::conv_out(x.height, k_, stride_, pad_);
        const int wo = detail::conv_out(x.width, k_, stride_, pad_);
        Tensor<Scalar> y(x.channels(), x.batch, ho, wo);
        argmax_.resize(y.data.rows(), y.data.cols());
        for (int c = 0; c < x.channels(); ++c)
            for (int n = 0; n < x.batch; ++n)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        Scalar best = -std::numeric_limits<Scalar>::infinity();
                        Eigen::Index at = -1;
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= x.height) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix < 0 || ix >= x.width) continue;
                                const Eigen::Index j = x.column(n, iy, ix);
                                if (at < 0 || x.data(c, j) > best) {
                                    best = x.data(c, j);
                                    at = j;
                                }
                            }
                        }
                        const Eigen::Index o = y.column(n, oy, ox);
                        y.data(c, o) = best;
                        argmax_(c, o) = at;
                    }
        if (training) in_shape_ = {x.batch, x.height, x.width};
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        Tensor<Scalar> dx(dy.channels(), in_shape_[0], in_shape_[1], in_shape_[2]);
        for (Eigen::Index c = 0; c < dy.data.rows(); ++c)
            for (Eigen::Index o = 0; o < dy.data.cols(); ++o) dx.data(c, argmax_(c, o)) += dy.data(c, o);
        return dx;
    }

private:
    int k_, stride_, pad_;
    Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax_;
    std::array<int, 3> in_shape_{};
};

/// Non-overlapping average pooling (kernel == stride, no padding, floor mode).
template <typename Scalar>
class AvgPool2d final : public Module<Scalar> {
public:
    explicit AvgPool2d(int kernel) : k_(kernel) {}

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        const int ho = x.height / k_, wo = x.width / k_;
        if (ho < 1 || wo < 1) throw std::invalid_argument("avgpool input smaller than kernel");
        Tensor<Scalar> y(x.channels(), x.batch, ho, wo);
        const Scalar inv = Scalar(1) / Scalar(k_ * k_);
        for (int n = 0; n < x.batch; ++n)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    auto dst = y.data.col(y.column(n, oy, ox));
                    for (int ky = 0; ky < k_; ++ky)
                        for (int kx = 0; kx < k_; ++kx) dst += x.data.col(x.column(n, oy * k_ + ky, ox * k_ + kx));
                    dst *= inv;
                }
        if (training) in_shape_ = {x.batch, x.height, x.width};
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        Tensor<Scalar> dx(dy.channels(), in_shape_[0], in_shape_[1], in_shape_[2]);
        const Scalar inv = Scalar(1) / Scalar(k_ * k_);
        for (int n = 0; n < dy.batch; ++n)
            for (int oy = 0; oy < dy.height; ++oy)
                for (int ox = 0; ox < dy.width; ++ox) {
                    const auto g = dy.data.col(dy.column(n, oy, ox)) * inv;
                    for (int ky = 0; ky < k_; ++ky)
                        for (int kx = 0; kx < k_; ++kx) dx.data.col(dx.column(n, oy * k_ + ky, ox * k_ + kx)) += g;
                }
        return dx;
    }

private:
    int k_;
    std::array<int, 3> in_shape_{};
};

/// Averages each channel over the spatial plane; output is 1x1 per sample.
template <typename Scalar>
class GlobalAvgPool final : public Module<Scalar> {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        Tensor<Scalar> y(x.channels(), x.batch, 1, 1);
        const auto plane = x.plane();
        for (int n = 0; n < x.batch; ++n) y.data.col(n) = x.data.middleCols(n * plane, plane).rowwise().mean();
        if (training) in_shape_ = {x.batch, x.height, x.width};
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        Tensor<Scalar> dx(dy.channels(), in_shape_[0], in_shape_[1], in_shape_[2]);
        const auto plane = dx.plane();
        for (int n = 0; n < dx.batch; ++n)
            dx.data.middleCols(n * plane, plane).colwise() = dy.data.col(n) / Scalar(plane);
        return dx;
    }

private:
    std::array<int, 3> in_shape_{};
};

/// Fully connected layer on 1x1 feature maps: y = W x + b.
template <typename Scalar>
class Linear final : public Module<Scalar> {
public:
    Linear(int in, int out) : in_(in), out_(out), weight_({out, in}), bias_({out}) {}

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        if (x.channels() != in_ || x.plane() != 1) throw std::invalid_argument("linear input shape mismatch");
        const Eigen::Map<const Mat<Scalar>> w(weight_.value.data(), out_, in_);
        Tensor<Scalar> y(out_, x.batch, 1, 1);
        y.data.noalias() = w * x.data;
        y.data.colwise() += bias_.value;
        if (training) input_ = x;
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        const Eigen::Map<const Mat<Scalar>> w(weight_.value.data(), out_, in_);
        Eigen::Map<Mat<Scalar>> dw(weight_.grad.data(), out_, in_);
        dw.noalias() += dy.data * input_.data.transpose();
        bias_.grad += dy.data.rowwise().sum();
        Tensor<Scalar> dx(in_, dy.batch, 1, 1);
        dx.data.noalias() = w.transpose() * dy.data;
        return dx;
    }

    void parameters(const std::string& prefix, ParameterList<Scalar>& out) override {
        out.push_back({prefix + "weight", &weight_, true});
        out.push_back({prefix + "bias", &bias_, true});
    }

    void reset(Rng& rng, const InitRule& rule) override {
        const double bound = 1.0 / std::sqrt(double(in_));
        if (rule.linear == InitRule::LinearInit::Normal001)
            detail::fill_normal(weight_, rng, 0.01);
        else
            detail::fill_uniform(weight_, rng, bound);
        if (rule.zero_linear_bias)
            bias_.allocate(Scalar(0));
        else
            detail::fill_uniform(bias_, rng, bound);
    }

    int in_features() const { return in_; }
    int out_features() const { return out_; }

private:
    int in_, out_;
    Parameter<Scalar> weight_, bias_;
    Tensor<Scalar> input_;
};

/// Ordered, named children applied in sequence. Child names become parameter path segments.
template <typename Scalar>
class Sequential final : public Module<Scalar> {
public:
    Sequential() = default;

    Sequential& add(std::string name, ModulePtr<Scalar> m) {
        children_.emplace_back(std::move(name), std::move(m));
        return *this;
    }
    template <typename M, typename... Args>
    Sequential& emplace(std::string name, Args&&... args) {
        return add(std::move(name), std::make_unique<M>(std::forward<Args>(args)...));
    }
    Sequential& append(ModulePtr<Scalar> m) { return add(std::to_string(children_.size()), std::move(m)); }

    size_t size() const { return children_.size(); }
    Module<Scalar>& operator[](size_t i) { return *children_[i].second; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        if (children_.empty()) return x;
        Tensor<Scalar> h = children_.front().second->forward(x, training);
        for (size_t i = 1; i < children_.size(); ++i) h = children_[i].second->forward(h, training);
        return h;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        if (children_.empty()) return dy;
        Tensor<Scalar> g = children_.back().second->backward(dy);
        for (size_t i = children_.size() - 1; i-- > 0;) g = children_[i].second->backward(g);
        return g;
    }

    void parameters(const std::string& prefix, ParameterList<Scalar>& out) override {
        for (auto& [name, child] : children_) child->parameters(prefix + name + ".", out);
    }

    void reset(Rng& rng, const InitRule& rule) override {
        for (auto& [name, child] : children_) child->reset(rng, rule);
    }

private:
    std::vector<std::pair<std::string, ModulePtr<Scalar>>> children_;
};

/// out = post(main(x) + shortcut(x)), shortcut being identity when no projection is given.
template <typename Scalar>
class Residual final : public Module<Scalar> {
public:
    Residual(Sequential<Scalar> main, std::unique_ptr<Sequential<Scalar>> projection, bool relu_after,
             std::string main_prefix = "")
        : main_(std::move(main)), projection_(std::move(projection)), relu_after_(relu_after),
          main_prefix_(std::move(main_prefix)) {}

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        Tensor<Scalar> y = main_.forward(x, training);
        if (projection_)
            y.data += projection_->forward(x, training).data;
        else
            y.data += x.data;
        if (relu_after_) y = relu_.forward(y, training);
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        const Tensor<Scalar> g = relu_after_ ? relu_.backward(dy) : dy;
        Tensor<Scalar> dx = main_.backward(g);
        if (projection_)
            dx.data += projection_->backward(g).data;
        else
            dx.data += g.data;
        return dx;
    }

    void parameters(const std::string& prefix, ParameterList<Scalar>& out) override {
        main_.parameters(prefix + main_prefix_, out);
        if (projection_) projection_->parameters(prefix + "downsample.", out);
    }

    void reset(Rng& rng, const InitRule& rule) override {
        main_.reset(rng, rule);
        if (projection_) projection_->reset(rng, rule);
    }

private:
    Sequential<Scalar> main_;
    std::unique_ptr<Sequential<Scalar>> projection_;
    bool relu_after_;
    std::string main_prefix_;
    ReLU<Scalar> relu_;
};

/// Densely connected block: every layer sees the channel concatenation of the block
/// input and all earlier layer outputs; the block returns the full concatenation.
template <typename Scalar>
class DenseBlock final : public Module<Scalar> {
public:
    DenseBlock(int in_channels, int growth) : in_(in_channels), growth_(growth) {}

    void add_layer(std::unique_ptr<Sequential<Scalar>> layer) { layers_.push_back(std::move(layer)); }
    int out_channels() const { return in_ + growth_ * int(layers_.size()); }

    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training) override {
        Tensor<Scalar> all(out_channels(), x.batch, x.height, x.width);
        all.data.topRows(in_) = x.data;
        Tensor<Scalar> slice;
        for (size_t i = 0; i < layers_.size(); ++i) {
            const int have = in_ + growth_ * int(i);
            slice.batch = x.batch;
            slice.height = x.height;
            slice.width = x.width;
            slice.data = all.data.topRows(have);
            all.data.middleRows(have, growth_) = layers_[i]->forward(slice, training).data;
        }
        return all;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
        Tensor<Scalar> g = dy;
        Tensor<Scalar> slice;
        for (size_t i = layers_.size(); i-- > 0;) {
            const int have = in_ + growth_ * int(i);
            slice.batch = dy.batch;
            slice.height = dy.height;
            slice.width = dy.width;
            slice.data = g.data.middleRows(have, growth_);
            g.data.topRows(have) += layers_[i]->backward(slice).data;
        }
        Tensor<Scalar> dx = g;
        dx.data = g.data.topRows(in_);
        return dx;
    }

    void parameters(const std::string& prefix, ParameterList<Scalar>& out) override {
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->parameters(prefix + "denselayer" + std::to_string(i + 1) + ".", out);
    }

    void reset(Rng& rng, const InitRule& rule) override {
        for (auto& l : layers_) l->reset(rng, rule);
    }

private:
    int in_, growth_;
    std::vector<std::unique_ptr<Sequential<Scalar>>> layers_;
};

}  // namespace cer::nn
