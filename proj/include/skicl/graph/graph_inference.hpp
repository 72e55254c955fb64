#pragma once

#include <Eigen/Core>
#include <random>

#include "skicl/model/config.hpp"
#include "skicl/tensor/ops.hpp"
#include "skicl/tensor/optim.hpp"

namespace skicl {

/// Per-variable temporal encoder. Maps a window batch [B, N, tau] to node
/// embeddings [B, N, h]; each embedding row depends only on its own variable's
/// history (kernel height one, no cross-variable mixing).
class NodeEncoder {
public:
    NodeEncoder(const EncoderConfig& config, std::size_t input_steps, std::mt19937_64& rng);

    Tensor forward(const Tensor& windows, bool training);

    void collect(ParameterList& params, ParameterList& buffers, const std::string& prefix) const;
    std::size_t embedding_width() const { return config_.embedding_width; }

private:
    struct ConvLayer {
        Tensor weight;  // [K, C_in, C_out]
        Tensor bias;    // [C_out]
        Tensor gamma;
        Tensor beta;
        BatchNormState norm;
    };

    EncoderConfig config_;
    std::vector<ConvLayer> layers_;
    std::size_t output_steps_ = 0;
    Tensor proj_weight_;  // [T_out * C_last, h]
    Tensor proj_bias_;    // [h]
};

/// Pairwise edge scorer psi(z_i || z_j): a two-layer perceptron with ReLU
/// hidden units. The first layer is stored as two blocks acting on z_i and
/// z_j, which evaluates the same map as one layer on the concatenation.
class EdgeGenerator {
public:
    EdgeGenerator(EdgeKind kind, std::size_t embedding_width, const EdgeGeneratorConfig& config,
                  std::mt19937_64& rng);

    /// z: [B, N, h] -> raw scores [B, N, N], entry (i, j) scores edge i -> j.
    Tensor logits(const Tensor& z) const;

    /// Activated adjacency: sigmoid for binary edges, ReLU for continuous ones.
    Tensor forward(const Tensor& z) const;

    EdgeKind kind() const { return kind_; }
    void collect(ParameterList& params, const std::string& prefix) const;

private:
    EdgeKind kind_;
    Tensor w_src_;   // [h, H] acts on z_i
    Tensor w_dst_;   // [h, H] acts on z_j
    Tensor b_hidden_;
    Tensor w_out_;   // [H, 1]
    Tensor b_out_;   // [1]
};

/// Applies the edge-kind activation to raw scores.
Tensor activate_edges(const Tensor& logits, EdgeKind kind);

/// Entry is 1 iff prob(i, j) > threshold. Threshold must lie in (0, 1).
Eigen::MatrixXd binarize(const Eigen::MatrixXd& prob, double threshold = 0.5);

}  // namespace skicl
