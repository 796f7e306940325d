#include <doctest.h>

#include "cer/vote.hpp"
#include "oracles.hpp"

#include <random>

using namespace cer;

namespace {

Eigen::MatrixXd uniform_probs() { return Eigen::MatrixXd::Constant(5, 7, 1.0 / 7); }

}  // namespace

TEST_CASE("vote examples") {
    auto r = vote(std::vector<int>{2, 2, 5, 5, 5}, uniform_probs());
    CHECK(r.label == 5);
    CHECK_FALSE(r.tie_broken);
    CHECK(r.vote_counts == std::vector<int>{0, 0, 2, 0, 0, 3, 0});

    r = vote(std::vector<int>{4, 4, 4, 4, 4}, uniform_probs());
    CHECK(r.label == 4);
    CHECK_FALSE(r.tie_broken);

    // Class 0 mass 1.9, class 1 mass 2.3.
    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(5, 7);
    probs.col(0) << 0.5, 0.5, 0.3, 0.3, 0.3;
    probs.col(1) << 0.4, 0.4, 0.5, 0.5, 0.5;
    probs.col(3) = (1.0 - probs.col(0).array() - probs.col(1).array()).matrix();
    r = vote(std::vector<int>{0, 0, 1, 1, 3}, probs);
    CHECK(r.label == 1);
    CHECK(r.tie_broken);
    const auto o = oracle::vote_rule({0, 0, 1, 1, 3}, probs);
    CHECK(o.label == 1);

    // Equal mass: lowest index.
    r = vote(std::vector<int>{6, 6, 2, 2, 3}, uniform_probs());
    CHECK(r.label == 2);
    CHECK(r.tie_broken);
}

TEST_CASE("vote arity guard") {
    CHECK_THROWS(vote(std::vector<int>{1, 1, 1, 1}, uniform_probs()));
    CHECK_THROWS(vote(std::vector<int>{1, 1, 1, 1, 9}, uniform_probs()));
}

TEST_CASE("three identical votes always win") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> cls(0, 6);
    for (int trial = 0; trial < 500; ++trial) {
        Eigen::MatrixXd probs(5, 7);
        for (auto& v : probs.reshaped()) v = u(rng);
        const int c = cls(rng);
        std::vector<int> votes{c, c, c, cls(rng), cls(rng)};
        std::shuffle(votes.begin(), votes.end(), rng);
        CHECK(vote(votes, probs).label == c);
    }
}
