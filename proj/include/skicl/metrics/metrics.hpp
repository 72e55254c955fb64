#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skicl/consistency.hpp"

namespace skicl {

/// Mean absolute error over every entry. Throws on empty or mismatched input.
double mae(std::span<const double> truth, std::span<const double> prediction);
double rmse(std::span<const double> truth, std::span<const double> prediction);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    bool precision_defined = true;  // false when nothing was predicted
    bool recall_defined = true;     // false when the prior has no edges
};

/// Structure similarity of a 0/1 prediction against a binary prior. The
/// diagonal and unobserved prior entries are left out of every count. An
/// undefined ratio is reported as 0 with its flag cleared; callers warn.
PrecisionRecall precision_recall(const Eigen::MatrixXd& predicted, const StructuralKnowledge& prior);

enum class Metric { mae, rmse, precision, recall };
inline constexpr std::array<Metric, 4> kAllMetrics{Metric::mae, Metric::rmse, Metric::precision, Metric::recall};
std::string to_string(Metric metric);

/// Lower-triangular S x S table: entry (i, j) is the score on regime j after
/// training through regime i. Indices are 1-based.
class PerformanceMatrix {
public:
    explicit PerformanceMatrix(std::size_t regimes = 0);

    std::size_t regimes() const { return size_; }
    void set(std::size_t i, std::size_t j, double value);
    bool has(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j) const;
    /// Rows are trained-through regimes, columns evaluated regimes; the upper
    /// triangle and missing entries are left blank.
    std::string to_csv() const;

private:
    void check(std::size_t i, std::size_t j) const;
    std::size_t size_;
    std::vector<std::optional<double>> cells_;
};

/// Mean of row i over regimes 1..i.
double average_performance(const PerformanceMatrix& p, std::size_t i);
/// Mean of P(i, j) - P(j, j) over j < i. Throws std::domain_error for i < 2.
double average_forgetting(const PerformanceMatrix& p, std::size_t i);

}  // namespace skicl
