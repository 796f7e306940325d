#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace cer {

inline constexpr int kEnsembleSize = 5;

struct VoteResult {
    int label = 0;
    std::vector<int> vote_counts;
    /// True when more than one class shared the top vote count.
    bool tie_broken = false;
};

/// Plurality vote over member argmaxes. Ties among the top vote-getters go to the
/// class with the largest probability summed over all members, then to the lowest
/// class index. Independent of member order.
///
/// `probs` holds one row per member, one column per class.
VoteResult vote(std::span<const int> argmaxes, const Eigen::MatrixXd& probs);

}  // namespace cer
