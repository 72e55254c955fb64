#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "skicl/metrics/metrics.hpp"

using namespace skicl;

namespace {

StructuralKnowledge binary_prior(const Eigen::MatrixXd& a) {
    return StructuralKnowledge::fully_observed(a, EdgeKind::binary);
}

Eigen::MatrixXd random_binary(int n, std::mt19937_64& rng, double p = 0.4) {
    std::bernoulli_distribution bit(p);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = bit(rng) ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST(ErrorMetrics, HandExample) {
    const std::vector<double> y{1, 2}, yhat{2, 4};
    EXPECT_DOUBLE_EQ(mae(y, yhat), 1.5);
    EXPECT_NEAR(rmse(y, yhat), std::sqrt(2.5), 1e-15);
    EXPECT_NEAR(rmse(y, yhat), 1.5811, 1e-4);
}

TEST(ErrorMetrics, ExactAndConstantOffset) {
    const std::vector<double> y{0.3, -1.0, 2.0, 5.5};
    EXPECT_EQ(mae(y, y), 0.0);
    EXPECT_EQ(rmse(y, y), 0.0);
    std::vector<double> shifted = y;
    for (auto& v : shifted) v -= 0.25;
    EXPECT_NEAR(mae(y, shifted), 0.25, 1e-15);
    EXPECT_NEAR(rmse(y, shifted), 0.25, 1e-15);
}

TEST(ErrorMetrics, RejectsEmptyOrMismatched) {
    const std::vector<double> empty, one{1.0}, two{1.0, 2.0};
    EXPECT_THROW(mae(empty, empty), std::invalid_argument);
    EXPECT_THROW(rmse(empty, empty), std::invalid_argument);
    EXPECT_THROW(mae(one, two), std::invalid_argument);
}

TEST(ErrorMetrics, RmseNeverBelowMae) {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> len(1, 50);
    std::normal_distribution<double> value(0.0, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = len(rng);
        std::vector<double> y(n), yhat(n);
        for (int i = 0; i < n; ++i) {
            y[i] = value(rng);
            yhat[i] = value(rng);
        }
        const double m = mae(y, yhat), r = rmse(y, yhat);
        EXPECT_GE(m, 0.0);
        EXPECT_GE(r + 1e-12, m) << "trial " << trial;
    }
}

TEST(StructureMetrics, ExactRecovery) {
    Eigen::MatrixXd a(3, 3);
    a << 1, 1, 0, 1, 1, 0, 0, 0, 1;
    const PrecisionRecall pr = precision_recall(a, binary_prior(a));
    EXPECT_EQ(pr.precision, 1.0);
    EXPECT_EQ(pr.recall, 1.0);
    EXPECT_TRUE(pr.precision_defined && pr.recall_defined);
}

TEST(StructureMetrics, AllOnesAgainstHalfDensePrior) {
    // 4 nodes, 12 off-diagonal entries, 6 of them set.
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(4, 4);
    a(0, 1) = a(1, 0) = a(2, 3) = a(3, 2) = a(0, 2) = a(2, 0) = 1.0;
    const PrecisionRecall pr = precision_recall(Eigen::MatrixXd::Ones(4, 4), binary_prior(a));
    EXPECT_DOUBLE_EQ(pr.precision, 0.5);
    EXPECT_DOUBLE_EQ(pr.recall, 1.0);
}

TEST(StructureMetrics, NothingPredicted) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    a(0, 1) = 1.0;
    const PrecisionRecall pr = precision_recall(Eigen::MatrixXd::Zero(3, 3), binary_prior(a));
    EXPECT_EQ(pr.precision, 0.0);
    EXPECT_FALSE(pr.precision_defined);
    EXPECT_EQ(pr.recall, 0.0);
    EXPECT_TRUE(pr.recall_defined);
    const PrecisionRecall empty = precision_recall(Eigen::MatrixXd::Ones(3, 3), binary_prior(Eigen::MatrixXd::Identity(3, 3)));
    EXPECT_FALSE(empty.recall_defined);
    EXPECT_EQ(empty.recall, 0.0);
}

TEST(StructureMetrics, DiagonalAndMaskedEntriesIgnored) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
    a(0, 1) = 1.0;
    StructuralKnowledge prior = binary_prior(a);
    prior.mask(1, 2) = 0.0;
    Eigen::MatrixXd predicted = Eigen::MatrixXd::Identity(3, 3);
    predicted(0, 1) = 1.0;
    predicted(1, 2) = 1.0;  // unobserved: not a false positive
    const PrecisionRecall pr = precision_recall(predicted, prior);
    EXPECT_EQ(pr.precision, 1.0);
    EXPECT_EQ(pr.recall, 1.0);
}

TEST(StructureMetrics, RejectsNonBinaryInput) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd predicted = a;
    predicted(0, 1) = 0.7;
    EXPECT_THROW(precision_recall(predicted, binary_prior(a)), std::invalid_argument);
    EXPECT_THROW(precision_recall(a, StructuralKnowledge::fully_observed(a, EdgeKind::continuous)), std::invalid_argument);
}

TEST(StructureMetrics, InvariantUnderJointPermutationAndBounded) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 6;
        const Eigen::MatrixXd predicted = random_binary(n, rng), prior = random_binary(n, rng);
        Eigen::VectorXi order = Eigen::VectorXi::LinSpaced(n, 0, n - 1);
        std::shuffle(order.data(), order.data() + n, rng);
        const Eigen::PermutationMatrix<Eigen::Dynamic> perm(order);
        const PrecisionRecall a = precision_recall(predicted, binary_prior(prior));
        const PrecisionRecall b =
            precision_recall(perm * predicted * perm.transpose(), binary_prior(perm * prior * perm.transpose()));
        EXPECT_DOUBLE_EQ(a.precision, b.precision);
        EXPECT_DOUBLE_EQ(a.recall, b.recall);
        EXPECT_GE(a.precision, 0.0);
        EXPECT_LE(a.precision, 1.0);
        EXPECT_GE(a.recall, 0.0);
        EXPECT_LE(a.recall, 1.0);
    }
}

TEST(ContinualMetrics, HandExample) {
    PerformanceMatrix p(2);
    p.set(1, 1, 10.0);
    p.set(2, 1, 12.0);
    p.set(2, 2, 8.0);
    EXPECT_DOUBLE_EQ(average_performance(p, 1), 10.0);
    EXPECT_DOUBLE_EQ(average_performance(p, 2), 10.0);
    EXPECT_DOUBLE_EQ(average_forgetting(p, 2), 2.0);
    EXPECT_THROW(average_forgetting(p, 1), std::domain_error);
}

TEST(ContinualMetrics, NoForgettingGivesZero) {
    PerformanceMatrix p(3);
    const double diag[] = {0.4, 0.7, 0.2};
    for (std::size_t i = 1; i <= 3; ++i)
        for (std::size_t j = 1; j <= i; ++j) p.set(i, j, diag[j - 1]);
    EXPECT_DOUBLE_EQ(average_forgetting(p, 2), 0.0);
    EXPECT_DOUBLE_EQ(average_forgetting(p, 3), 0.0);
    EXPECT_NEAR(average_performance(p, 3), (0.4 + 0.7 + 0.2) / 3.0, 1e-15);
}

TEST(ContinualMetrics, MatrixBoundsAndCsv) {
    PerformanceMatrix p(2);
    EXPECT_THROW(p.set(1, 2, 1.0), std::out_of_range);
    EXPECT_THROW(p.set(0, 1, 1.0), std::out_of_range);
    EXPECT_FALSE(p.has(2, 1));
    EXPECT_THROW(average_performance(p, 1), std::logic_error);
    p.set(1, 1, 0.5);
    p.set(2, 1, 0.25);
    p.set(2, 2, 1.0);
    EXPECT_EQ(p.to_csv(), "trained_through,regime_1,regime_2\nregime_1,0.5,\nregime_2,0.25,1\n");
}
