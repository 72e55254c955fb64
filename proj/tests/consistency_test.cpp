#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "skicl/consistency.hpp"
#include "skicl/errors.hpp"
#include "skicl/graph/graph_inference.hpp"
#include "skicl/tensor/ops.hpp"
#include "skicl/tensor/optim.hpp"
#include "support/gradcheck.hpp"

using namespace skicl;
using skicl::testing::random_tensor;

namespace {

Eigen::MatrixXd random_binary(std::size_t n, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.4);
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = coin(rng) ? 1.0 : 0.0;
    return a;
}

Eigen::MatrixXd random_mask(std::size_t n, std::mt19937_64& rng) {
    Eigen::MatrixXd m = random_binary(n, rng);
    m(0, 0) = 1.0;
    return m;
}

}  // namespace

TEST(ConsistencyLoss, HandExamples) {
    Eigen::MatrixXd one(1, 1);
    one << 1.0;
    auto prior = StructuralKnowledge::fully_observed(one, EdgeKind::binary);
    EXPECT_NEAR(consistency_loss(Tensor({1, 1, 1}, {0.5}), EdgeKind::binary, prior).item(), -std::log(0.5), 1e-12);

    Eigen::MatrixXd cont(2, 2);
    cont << 0.3, 0.0, 1.0, 0.2;
    auto cprior = StructuralKnowledge::fully_observed(cont, EdgeKind::continuous);
    Tensor exact({1, 2, 2}, {0.3, 0.0, 1.0, 0.2});
    EXPECT_EQ(consistency_loss(exact, EdgeKind::continuous, cprior).item(), 0.0);
    Tensor off({1, 2, 2}, {0.5, 0.0, 1.0, 0.2});
    EXPECT_NEAR(consistency_loss(off, EdgeKind::continuous, cprior).item(), 0.04 / 4.0, 1e-15);
}

TEST(ConsistencyLoss, KindMismatchIsConfigError) {
    auto prior = StructuralKnowledge::fully_observed(Eigen::MatrixXd::Identity(2, 2), EdgeKind::binary);
    EXPECT_THROW(consistency_loss(Tensor({1, 2, 2}, 0.5), EdgeKind::continuous, prior), ConfigError);
}

TEST(ConsistencyLoss, BinaryMatchesBruteForceOracle) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 3 + trial % 4;
        StructuralKnowledge prior{random_binary(n, rng), EdgeKind::binary, random_mask(n, rng), 0};
        Tensor theta = random_tensor({2, n, n}, rng, 0.01, 0.99, false);
        double expect = 0;
        for (std::size_t b = 0; b < 2; ++b) {
            double total = 0, count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (prior.mask(i, j) == 0) continue;
                    const double p = theta.values()[(b * n + i) * n + j], a = prior.adjacency(i, j);
                    total += -a * std::log(p) - (1 - a) * std::log(1 - p);
                    count += 1;
                }
            }
            expect += total / count / 2.0;
        }
        EXPECT_NEAR(consistency_loss(theta, EdgeKind::binary, prior).item(), expect, 1e-12);
    }
}

TEST(ConsistencyLoss, UnobservedEntriesAreIgnored) {
    std::mt19937_64 rng(2);
    for (auto kind : {EdgeKind::binary, EdgeKind::continuous}) {
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t n = 5;
            Eigen::MatrixXd mask = random_mask(n, rng);
            mask(1, 2) = 0.0;
            StructuralKnowledge prior{random_binary(n, rng), kind, mask, 1};
            prior.validate();
            Tensor learned = random_tensor({2, n, n}, rng, 0.05, 0.95, true);
            const double before = consistency_loss(learned, kind, prior).item();
            StructuralKnowledge flipped = prior;
            flipped.adjacency(1, 2) = 1.0 - flipped.adjacency(1, 2);
            EXPECT_EQ(consistency_loss(learned, kind, flipped).item(), before);

            backward(consistency_loss(learned, kind, prior));
            for (std::size_t b = 0; b < 2; ++b) {
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        if (mask(i, j) == 0) EXPECT_EQ(learned.grad()[(b * n + i) * n + j], 0.0);
                    }
                }
            }
        }
    }
}

TEST(ConsistencyLoss, NonNegative) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        StructuralKnowledge bin{random_binary(4, rng), EdgeKind::binary, random_mask(4, rng), 0};
        EXPECT_GE(consistency_loss(random_tensor({1, 4, 4}, rng, 0, 1, false), EdgeKind::binary, bin).item(), 0.0);
        StructuralKnowledge cont{random_binary(4, rng) * 0.7, EdgeKind::continuous, random_mask(4, rng), 0};
        EXPECT_GE(consistency_loss(random_tensor({1, 4, 4}, rng, 0, 2, false), EdgeKind::continuous, cont).item(),
                  0.0);
    }
}

TEST(ConsistencyLoss, DescentOnPriorAloneIsMonotone) {
    std::mt19937_64 rng(4);
    for (auto kind : {EdgeKind::binary, EdgeKind::continuous}) {
        const std::size_t n = 6;
        StructuralKnowledge prior{random_binary(n, rng), kind, random_mask(n, rng), 0};
        // binary: descend on logits behind the sigmoid; continuous: descend on the weights directly
        Tensor raw = random_tensor({1, n, n}, rng, -2.0, 2.0, true);
        double previous = std::numeric_limits<double>::infinity();
        for (int step = 0; step < 100; ++step) {
            raw.zero_grad();
            Tensor learned = kind == EdgeKind::binary ? activate_edges(raw, kind) : raw;
            Tensor loss = consistency_loss(learned, kind, prior);
            EXPECT_LT(loss.item(), previous) << "step " << step;
            previous = loss.item();
            backward(loss);
            auto v = raw.mutable_values();
            for (std::size_t k = 0; k < v.size(); ++k) v[k] -= 1.0 * raw.grad()[k];
        }
    }
}

TEST(TotalLoss, LambdaWeighting) {
    Tensor lf = Tensor::scalar(2.5), lg = Tensor::scalar(0.5);
    EXPECT_DOUBLE_EQ(total_loss(lf, lg, 1.0).item(), 3.0);
    EXPECT_DOUBLE_EQ(total_loss(lf, lg, 0.0).item(), 2.5);
    EXPECT_THROW(total_loss(lf, lg, -0.1), ConfigError);
}

TEST(StructuralKnowledge, Validation) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    auto full = StructuralKnowledge::fully_observed(a, EdgeKind::binary, 2);
    EXPECT_TRUE(full.is_fully_observed());
    EXPECT_EQ(full.size(), 3u);
    EXPECT_NO_THROW(full.validate());

    auto bad = full;
    bad.adjacency(0, 1) = 0.5;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad.mask(0, 1) = 0.0;  // unobserved entries are unconstrained
    EXPECT_NO_THROW(bad.validate());
    EXPECT_FALSE(bad.is_fully_observed());

    auto neg = StructuralKnowledge::fully_observed(-a, EdgeKind::continuous);
    EXPECT_THROW(neg.validate(), std::invalid_argument);
}
