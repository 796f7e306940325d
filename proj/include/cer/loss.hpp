#pragma once

// Imbalance-aware classification losses on logit batches.
//
// All functions take a batch of logits with one row per sample and one column
// per class. Class counts reweight the softmax (balanced cross-entropy); the
// soft multi-class Dice loss is computed on the softmax probabilities. Every
// loss has a matching `*_grad` returning dL/dz with the same shape as z.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cer {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Per-class training sample counts. Every entry is at least one.
class ClassCountTable {
public:
    ClassCountTable() = default;
    explicit ClassCountTable(std::vector<long> counts) : counts_(std::move(counts)) {
        for (long n : counts_)
            if (n < 1) throw std::invalid_argument("class count must be positive");
    }

    /// Label histogram over `num_classes` classes, with empty classes floored to one.
    /// `floored` receives the indices of classes that had no samples.
    static ClassCountTable from_labels(std::span<const int> labels, int num_classes,
                                       std::vector<int>* floored = nullptr);

    int size() const { return static_cast<int>(counts_.size()); }
    long operator[](int c) const { return counts_[static_cast<size_t>(c)]; }
    const std::vector<long>& values() const { return counts_; }

    template <typename Scalar>
    Vec<Scalar> log_counts() const {
        Vec<Scalar> out(size());
        for (int c = 0; c < size(); ++c) out(c) = std::log(static_cast<Scalar>(counts_[size_t(c)]));
        return out;
    }

    bool operator==(const ClassCountTable&) const = default;

private:
    std::vector<long> counts_;
};

struct LossConfig {
    double lambda = 1.5;
    double dice_epsilon = 1e-7;
    /// Dice sums over the whole batch per channel when false; per sample then averaged when true.
    bool per_sample_dice = false;

    void validate() const {
        if (!(lambda >= 0)) throw std::invalid_argument("lambda must be nonnegative");
        if (!(dice_epsilon > 0)) throw std::invalid_argument("dice_epsilon must be positive");
    }
};

namespace detail {

inline void check_targets(std::span<const int> targets, Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<Eigen::Index>(targets.size()) != rows)
        throw std::invalid_argument("target count does not match batch size");
    for (int t : targets)
        if (t < 0 || t >= cols) throw std::out_of_range("target class out of range: " + std::to_string(t));
}

}  // namespace detail

/// Row-wise softmax, stabilized by subtracting each row's max logit.
template <typename Derived>
Mat<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& z) {
    using Scalar = typename Derived::Scalar;
    Mat<Scalar> p(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const Scalar m = z.row(i).maxCoeff();
        p.row(i) = (z.row(i).array() - m).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

/// Plain cross-entropy, mean over the batch. Serves as the reference the balanced loss reduces to.
template <typename Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& z, std::span<const int> targets) {
    using Scalar = typename Derived::Scalar;
    detail::check_targets(targets, z.rows(), z.cols());
    Scalar total = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const Scalar m = z.row(i).maxCoeff();
        const Scalar lse = m + std::log((z.row(i).array() - m).exp().sum());
        total += lse - z(i, targets[size_t(i)]);
    }
    return total / static_cast<Scalar>(z.rows());
}

template <typename Derived>
Mat<typename Derived::Scalar> cross_entropy_grad(const Eigen::MatrixBase<Derived>& z,
                                                 std::span<const int> targets) {
    using Scalar = typename Derived::Scalar;
    detail::check_targets(targets, z.rows(), z.cols());
    Mat<Scalar> g = softmax(z);
    for (Eigen::Index i = 0; i < z.rows(); ++i) g(i, targets[size_t(i)]) -= Scalar(1);
    return g / static_cast<Scalar>(z.rows());
}

/// Balanced cross-entropy of one sample:
///   log(1 + sum_{j != t} exp(log n_j - log n_t + z_j - z_t)),
/// evaluated without overflow for large logit gaps.
template <typename Derived>
typename Derived::Scalar bal_ce_sample(const Eigen::MatrixBase<Derived>& z, int target,
                                       const ClassCountTable& counts) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index k = z.size();
    if (counts.size() != k) throw std::invalid_argument("class count table does not match logit width");
    if (target < 0 || target >= k) throw std::out_of_range("target class out of range: " + std::to_string(target));
    const Vec<Scalar> log_n = counts.log_counts<Scalar>();
    const Scalar anchor = log_n(target) + z(target);
    Scalar shift = 0;
    for (Eigen::Index j = 0; j < k; ++j)
        if (j != target) shift = std::max(shift, log_n(j) + z(j) - anchor);
    Scalar acc = 0;
    for (Eigen::Index j = 0; j < k; ++j)
        if (j != target) acc += std::exp(log_n(j) + z(j) - anchor - shift);
    if (shift == 0) return std::log1p(acc);
    return shift + std::log(std::exp(-shift) + acc);
}

/// Balanced cross-entropy, mean over the batch.
template <typename Derived>
typename Derived::Scalar bal_ce(const Eigen::MatrixBase<Derived>& z, std::span<const int> targets,
                                const ClassCountTable& counts) {
    using Scalar = typename Derived::Scalar;
    detail::check_targets(targets, z.rows(), z.cols());
    Scalar total = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) total += bal_ce_sample(z.row(i), targets[size_t(i)], counts);
    return total / static_cast<Scalar>(z.rows());
}

/// d bal_ce / dz = (softmax(z + log n) - onehot(t)) / batch.
template <typename Derived>
Mat<typename Derived::Scalar> bal_ce_grad(const Eigen::MatrixBase<Derived>& z, std::span<const int> targets,
                                          const ClassCountTable& counts) {
    using Scalar = typename Derived::Scalar;
    detail::check_targets(targets, z.rows(), z.cols());
    if (counts.size() != z.cols()) throw std::invalid_argument("class count table does not match logit width");
    const Vec<Scalar> log_n = counts.log_counts<Scalar>();
    Mat<Scalar> shifted = z;
    shifted.rowwise() += log_n.transpose();
    Mat<Scalar> g = softmax(shifted);
    for (Eigen::Index i = 0; i < z.rows(); ++i) g(i, targets[size_t(i)]) -= Scalar(1);
    return g / static_cast<Scalar>(z.rows());
}

namespace detail {

// Mean over channels of (1 - dice_c) for a block of probability rows, and
// optionally its gradient with respect to those probabilities.
template <typename Scalar>
Scalar dice_block(const Mat<Scalar>& p, std::span<const int> targets, Scalar eps, Mat<Scalar>* dp) {
    const Eigen::Index k = p.cols();
    Vec<Scalar> inter = Vec<Scalar>::Zero(k);
    Vec<Scalar> truth = Vec<Scalar>::Zero(k);
    const Vec<Scalar> pred = p.colwise().sum().transpose();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const int t = targets[size_t(i)];
        inter(t) += p(i, t);
        truth(t) += Scalar(1);
    }
    Scalar loss = 0;
    const Vec<Scalar> num = Scalar(2) * inter.array() + eps;
    const Vec<Scalar> den = pred.array() + truth.array() + eps;
    for (Eigen::Index c = 0; c < k; ++c) loss += Scalar(1) - num(c) / den(c);
    loss /= static_cast<Scalar>(k);
    if (dp) {
        dp->resize(p.rows(), k);
        for (Eigen::Index i = 0; i < p.rows(); ++i)
            for (Eigen::Index c = 0; c < k; ++c) {
                const Scalar y = targets[size_t(i)] == c ? Scalar(1) : Scalar(0);
                (*dp)(i, c) = -(Scalar(2) * y / den(c) - num(c) / (den(c) * den(c))) / static_cast<Scalar>(k);
            }
    }
    return loss;
}

}  // namespace detail

/// Soft multi-class Dice loss on probabilities `p` (rows nonnegative).
/// Targets are one-hot encoded; dice_c = (2 sum p*y + eps) / (sum p + sum y + eps),
/// and the loss is the channel mean of (1 - dice_c).
template <typename Derived>
typename Derived::Scalar multi_dice(const Eigen::MatrixBase<Derived>& p, std::span<const int> targets,
                                    typename Derived::Scalar eps, bool per_sample = false) {
    using Scalar = typename Derived::Scalar;
    detail::check_targets(targets, p.rows(), p.cols());
    if (!(eps > 0)) throw std::invalid_argument("dice epsilon must be positive");
    if ((p.array() < 0).any()) throw std::invalid_argument("dice probabilities must be nonnegative");
    if (!per_sample) return detail::dice_block<Scalar>(p, targets, eps, nullptr);
    Scalar total = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        total += detail::dice_block<Scalar>(p.row(i), targets.subspan(size_t(i), 1), eps, nullptr);
    return total / static_cast<Scalar>(p.rows());
}

/// Gradient of multi_dice with respect to the probabilities.
template <typename Derived>
Mat<typename Derived::Scalar> multi_dice_grad(const Eigen::MatrixBase<Derived>& p, std::span<const int> targets,
                                              typename Derived::Scalar eps, bool per_sample = false) {
    using Scalar = typename Derived::Scalar;
    detail::check_targets(targets, p.rows(), p.cols());
    Mat<Scalar> g;
    if (!per_sample) {
        detail::dice_block<Scalar>(p, targets, eps, &g);
        return g;
    }
    g.resize(p.rows(), p.cols());
    Mat<Scalar> row;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        detail::dice_block<Scalar>(p.row(i), targets.subspan(size_t(i), 1), eps, &row);
        g.row(i) = row / static_cast<Scalar>(p.rows());
    }
    return g;
}

/// Pulls a probability-space gradient back through the row-wise softmax.
template <typename Scalar>
Mat<Scalar> softmax_backward(const Mat<Scalar>& p, const Mat<Scalar>& dp) {
    Mat<Scalar> dz(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const Scalar dot = p.row(i).dot(dp.row(i));
        dz.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
    }
    return dz;
}

/// Multi-Dice evaluated on softmax(z), with its gradient taken through the softmax.
template <typename Derived>
typename Derived::Scalar multi_dice_logits(const Eigen::MatrixBase<Derived>& z, std::span<const int> targets,
                                           typename Derived::Scalar eps, bool per_sample = false) {
    return multi_dice(softmax(z), targets, eps, per_sample);
}

template <typename Derived>
Mat<typename Derived::Scalar> multi_dice_logits_grad(const Eigen::MatrixBase<Derived>& z,
                                                     std::span<const int> targets,
                                                     typename Derived::Scalar eps, bool per_sample = false) {
    using Scalar = typename Derived::Scalar;
    const Mat<Scalar> p = softmax(z);
    return softmax_backward<Scalar>(p, multi_dice_grad(p, targets, eps, per_sample));
}

/// bal_ce + lambda * multi_dice(softmax(z)).
template <typename Derived>
typename Derived::Scalar total_loss(const Eigen::MatrixBase<Derived>& z, std::span<const int> targets,
                                    const ClassCountTable& counts, const LossConfig& cfg) {
    using Scalar = typename Derived::Scalar;
    cfg.validate();
    const Scalar ce = bal_ce(z, targets, counts);
    if (cfg.lambda == 0) return ce;
    return ce + static_cast<Scalar>(cfg.lambda) *
                    multi_dice_logits(z, targets, static_cast<Scalar>(cfg.dice_epsilon), cfg.per_sample_dice);
}

template <typename Derived>
Mat<typename Derived::Scalar> total_loss_grad(const Eigen::MatrixBase<Derived>& z, std::span<const int> targets,
                                              const ClassCountTable& counts, const LossConfig& cfg) {
    using Scalar = typename Derived::Scalar;
    cfg.validate();
    Mat<Scalar> g = bal_ce_grad(z, targets, counts);
    if (cfg.lambda != 0)
        g += static_cast<Scalar>(cfg.lambda) *
             multi_dice_logits_grad(z, targets, static_cast<Scalar>(cfg.dice_epsilon), cfg.per_sample_dice);
    return g;
}

inline ClassCountTable ClassCountTable::from_labels(std::span<const int> labels, int num_classes,
                                                    std::vector<int>* floored) {
    std::vector<long> counts(static_cast<size_t>(num_classes), 0);
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw std::out_of_range("label out of range: " + std::to_string(y));
        ++counts[size_t(y)];
    }
    for (int c = 0; c < num_classes; ++c)
        if (counts[size_t(c)] == 0) {
            counts[size_t(c)] = 1;
            if (floored) floored->push_back(c);
        }
    return ClassCountTable(std::move(counts));
}

}  // namespace cer
