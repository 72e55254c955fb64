#include "skicl/metrics/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace skicl {

namespace {

void check_pair(const char* name, std::span<const double> a, std::span<const double> b) {
    if (a.empty()) throw std::invalid_argument(std::string(name) + ": empty input");
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(name) + ": " + std::to_string(a.size()) + " targets vs " +
                                    std::to_string(b.size()) + " predictions");
    }
}

}  // namespace

double mae(std::span<const double> truth, std::span<const double> prediction) {
    check_pair("mae", truth, prediction);
    double total = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) total += std::abs(truth[k] - prediction[k]);
    return total / static_cast<double>(truth.size());
}

double rmse(std::span<const double> truth, std::span<const double> prediction) {
    check_pair("rmse", truth, prediction);
    double total = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) total += (truth[k] - prediction[k]) * (truth[k] - prediction[k]);
    return std::sqrt(total / static_cast<double>(truth.size()));
}

PrecisionRecall precision_recall(const Eigen::MatrixXd& predicted, const StructuralKnowledge& prior) {
    if (prior.kind != EdgeKind::binary) throw std::invalid_argument("precision_recall: prior must be binary");
    if (predicted.rows() != prior.adjacency.rows() || predicted.cols() != prior.adjacency.cols()) {
        throw std::invalid_argument("precision_recall: prediction and prior sizes differ");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < predicted.rows(); ++i) {
        for (Eigen::Index j = 0; j < predicted.cols(); ++j) {
            const double p = predicted(i, j), a = prior.adjacency(i, j);
            if ((p != 0.0 && p != 1.0) || (prior.mask(i, j) == 1.0 && a != 0.0 && a != 1.0)) {
                throw std::invalid_argument("precision_recall: inputs must be 0/1");
            }
            if (i == j || prior.mask(i, j) == 0.0) continue;
            tp += p == 1.0 && a == 1.0;
            fp += p == 1.0 && a == 0.0;
            fn += p == 0.0 && a == 1.0;
        }
    }
    PrecisionRecall out;
    if (tp + fp == 0) {
        out.precision_defined = false;
    } else {
        out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
        out.recall_defined = false;
    } else {
        out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    return out;
}

std::string to_string(Metric metric) {
    switch (metric) {
        case Metric::mae: return "mae";
        case Metric::rmse: return "rmse";
        case Metric::precision: return "precision";
        case Metric::recall: return "recall";
    }
    return "unknown";
}

PerformanceMatrix::PerformanceMatrix(std::size_t regimes) : size_(regimes), cells_(regimes * regimes) {}

void PerformanceMatrix::check(std::size_t i, std::size_t j) const {
    if (i < 1 || i > size_ || j < 1 || j > i) {
        throw std::out_of_range("performance matrix: entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") outside the lower triangle of " + std::to_string(size_) + " regimes");
    }
}

void PerformanceMatrix::set(std::size_t i, std::size_t j, double value) {
    check(i, j);
    cells_[(i - 1) * size_ + (j - 1)] = value;
}

bool PerformanceMatrix::has(std::size_t i, std::size_t j) const {
    check(i, j);
    return cells_[(i - 1) * size_ + (j - 1)].has_value();
}

double PerformanceMatrix::at(std::size_t i, std::size_t j) const {
    if (!has(i, j)) {
        throw std::out_of_range("performance matrix: entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") not filled");
    }
    return *cells_[(i - 1) * size_ + (j - 1)];
}

std::string PerformanceMatrix::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(17) << "trained_through";
    for (std::size_t j = 1; j <= size_; ++j) out << ",regime_" << j;
    out << '\n';
    for (std::size_t i = 1; i <= size_; ++i) {
        out << "regime_" << i;
        for (std::size_t j = 1; j <= size_; ++j) {
            out << ',';
            if (j <= i && has(i, j)) out << at(i, j);
        }
        out << '\n';
    }
    return out.str();
}

double average_performance(const PerformanceMatrix& p, std::size_t i) {
    double total = 0.0;
    for (std::size_t j = 1; j <= i; ++j) total += p.at(i, j);
    return total / static_cast<double>(i);
}

double average_forgetting(const PerformanceMatrix& p, std::size_t i) {
    if (i < 2) throw std::domain_error("average forgetting is undefined for i<2");
    double total = 0.0;
    for (std::size_t j = 1; j < i; ++j) total += p.at(i, j) - p.at(j, j);
    return total / static_cast<double>(i - 1);
}

}  // namespace skicl
