#include "cer/vote.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cer {

VoteResult vote(std::span<const int> argmaxes, const Eigen::MatrixXd& probs) {
    if (argmaxes.size() != size_t(kEnsembleSize))
        throw std::invalid_argument("ensemble requires exactly 5 votes, got " + std::to_string(argmaxes.size()));
    if (probs.rows() != kEnsembleSize) throw std::invalid_argument("probability table needs one row per member");
    const auto num_classes = static_cast<int>(probs.cols());

    VoteResult r;
    r.vote_counts.assign(size_t(num_classes), 0);
    for (int a : argmaxes) {
        if (a < 0 || a >= num_classes) throw std::out_of_range("vote out of range: " + std::to_string(a));
        ++r.vote_counts[size_t(a)];
    }
    const int top = *std::max_element(r.vote_counts.begin(), r.vote_counts.end());
    std::vector<int> tied;
    for (int c = 0; c < num_classes; ++c)
        if (r.vote_counts[size_t(c)] == top) tied.push_back(c);
    r.label = tied.front();
    r.tie_broken = tied.size() > 1;
    if (!r.tie_broken) return r;

    // Sum in sorted order so the result cannot depend on member order.
    auto class_mass = [&](int c) {
        std::vector<double> column(probs.col(c).data(), probs.col(c).data() + probs.rows());
        std::sort(column.begin(), column.end());
        double s = 0;
        for (double v : column) s += v;
        return s;
    };
    double best = class_mass(r.label);
    for (size_t i = 1; i < tied.size(); ++i) {
        const double m = class_mass(tied[i]);
        if (m > best) {
            best = m;
            r.label = tied[i];
        }
    }
    return r;
}

}  // namespace cer
