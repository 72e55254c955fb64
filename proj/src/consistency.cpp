#include "skicl/consistency.hpp"

#include <cmath>

#include "skicl/errors.hpp"
#include "skicl/tensor/ops.hpp"

namespace skicl {

StructuralKnowledge StructuralKnowledge::fully_observed(Eigen::MatrixXd adjacency, EdgeKind kind, int regime_id) {
    StructuralKnowledge k;
    k.mask = Eigen::MatrixXd::Ones(adjacency.rows(), adjacency.cols());
    k.adjacency = std::move(adjacency);
    k.kind = kind;
    k.regime_id = regime_id;
    return k;
}

bool StructuralKnowledge::is_fully_observed() const { return (mask.array() == 1.0).all(); }

void StructuralKnowledge::validate() const {
    if (adjacency.rows() == 0 || adjacency.rows() != adjacency.cols()) {
        throw std::invalid_argument("structural knowledge: adjacency must be square and non-empty");
    }
    if (mask.rows() != adjacency.rows() || mask.cols() != adjacency.cols()) {
        throw std::invalid_argument("structural knowledge: mask shape differs from adjacency");
    }
    for (Eigen::Index i = 0; i < adjacency.rows(); ++i) {
        for (Eigen::Index j = 0; j < adjacency.cols(); ++j) {
            const double m = mask(i, j);
            if (m != 0.0 && m != 1.0) throw std::invalid_argument("structural knowledge: mask entries must be 0 or 1");
            if (m == 0.0) continue;
            const double a = adjacency(i, j);
            if (kind == EdgeKind::binary && a != 0.0 && a != 1.0) {
                throw std::invalid_argument("structural knowledge: binary prior has entry " + std::to_string(a) +
                                            " at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
            }
            if (kind == EdgeKind::continuous && !(std::isfinite(a) && a >= 0.0)) {
                throw std::invalid_argument("structural knowledge: continuous prior has invalid entry at (" +
                                            std::to_string(i) + ", " + std::to_string(j) + ")");
            }
        }
    }
}

namespace {

Tensor matrix_tensor(const Eigen::MatrixXd& m) {
    const auto rows = static_cast<std::size_t>(m.rows());
    const auto cols = static_cast<std::size_t>(m.cols());
    std::vector<double> values(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) values[i * cols + j] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return Tensor({rows, cols}, std::move(values));
}

}  // namespace

Tensor consistency_loss(const Tensor& learned, EdgeKind learned_kind, const StructuralKnowledge& prior) {
    if (learned_kind != prior.kind) {
        throw ConfigError("consistency_loss: learned graph is " + to_string(learned_kind) + " but prior is " +
                          to_string(prior.kind));
    }
    const Tensor target = matrix_tensor(prior.adjacency);
    const Tensor mask = matrix_tensor(prior.mask);
    return prior.kind == EdgeKind::binary ? masked_bce(learned, target, mask) : masked_mse(learned, target, mask);
}

Tensor total_loss(const Tensor& forecasting, const Tensor& consistency, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("total_loss: lambda must be non-negative");
    return add(forecasting, scale(consistency, lambda));
}

}  // namespace skicl
