#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace skicl {

enum class EdgeKind { binary, continuous };

std::string to_string(EdgeKind kind);
EdgeKind edge_kind_from_string(const std::string& name);

/// Temporal encoder: stacked valid dilated convolutions over each variable's
/// window, then a linear projection to the embedding width.
struct EncoderConfig {
    std::vector<std::size_t> channels{8, 16, 32};
    std::vector<std::size_t> kernels{2, 3, 3};
    std::size_t dilation = 2;
    bool batch_norm = true;
    std::size_t embedding_width = 128;

    std::size_t receptive_field() const;
};

struct EdgeGeneratorConfig {
    std::size_t hidden = 128;
};

struct TgconvConfig {
    std::vector<std::size_t> channels{16, 16};  // output channels per block
    std::size_t kernel = 2;
    std::vector<std::size_t> dilations{1, 2};
    bool residual_projection = true;

    std::size_t num_blocks() const { return channels.size(); }
    std::size_t receptive_field() const;
};

struct ModelConfig {
    std::size_t num_variables = 10;
    std::size_t input_steps = 12;
    std::size_t horizon = 12;
    EdgeKind edge_kind = EdgeKind::binary;
    EncoderConfig encoder;
    EdgeGeneratorConfig edge;
    TgconvConfig tgconv;

    /// Throws ConfigError on inconsistent extents or a receptive field that
    /// exceeds the input window.
    void validate() const;
};

}  // namespace skicl
