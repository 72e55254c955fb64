#pragma once

#include <Eigen/Core>

#include "skicl/model/config.hpp"
#include "skicl/tensor/tensor.hpp"

namespace skicl {

/// Per-regime prior adjacency with an observation mask (1 = known entry).
struct StructuralKnowledge {
    Eigen::MatrixXd adjacency;
    EdgeKind kind = EdgeKind::binary;
    Eigen::MatrixXd mask;
    int regime_id = 0;

    static StructuralKnowledge fully_observed(Eigen::MatrixXd adjacency, EdgeKind kind, int regime_id = 0);

    std::size_t size() const { return static_cast<std::size_t>(adjacency.rows()); }
    bool is_fully_observed() const;

    /// Throws std::invalid_argument when shapes, mask entries, or the
    /// kind-specific value constraints on observed entries are violated.
    void validate() const;
};

/// L_G between a learned adjacency batch [B, N, N] and the prior, restricted to
/// observed entries. Binary kind: BCE averaged over observed entries (and over
/// the batch). Continuous kind: squared error averaged the same way.
/// Throws ConfigError when the learned and prior edge kinds differ.
Tensor consistency_loss(const Tensor& learned, EdgeKind learned_kind, const StructuralKnowledge& prior);

/// L_F + lambda * L_G; lambda must be non-negative.
Tensor total_loss(const Tensor& forecasting, const Tensor& consistency, double lambda);

}  // namespace skicl
