#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "skicl/consistency.hpp"
#include "skicl/tensor/tensor.hpp"

namespace skicl {

inline constexpr int kRegimeFormatVersion = 1;

struct SyntheticConfig {
    std::size_t num_variables = 10;
    std::size_t total_steps = 4000;
    std::size_t num_regimes = 4;
    double noise_std = 0.01;
    double sparsity = 0.1;
    double spectral_radius = 0.9;
    double prior_threshold = 0.5;
    double train_fraction = 0.6;
    // Unrecorded steps under the first regime's dynamics, so the decay from
    // X^(0) does not dominate regime 1 statistics. 0 records from X^(0).
    std::size_t burn_in = 200;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t regime_length() const { return num_regimes ? total_steps / num_regimes : 0; }
};

/// One regime of a multivariate series. `values` is N x T (variables by time).
struct RegimeData {
    std::string name;
    std::vector<std::string> variables;
    Eigen::MatrixXd values;
    StructuralKnowledge structure;
    std::optional<Eigen::MatrixXd> transition;  // ground truth, synthetic only

    std::size_t num_variables() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t length() const { return static_cast<std::size_t>(values.cols()); }
    void validate() const;
};

/// Symmetric 0/1 adjacency with edge probability `sparsity`, zero diagonal and
/// at least one edge (up to 100 draws).
Eigen::MatrixXd random_sparse_adjacency(std::size_t n, double sparsity, std::mt19937_64& rng);

/// Rescaled random-walk Laplacian: radius * (I - D^-1 A) / rho(I - D^-1 A).
/// Rows of isolated nodes keep the identity row.
Eigen::MatrixXd stabilized_transition(const Eigen::MatrixXd& adjacency, double radius);

/// Non-repeating random walk: a continuous trajectory whose transition matrix
/// switches at every multiple of the regime length. Each regime carries the
/// correlation-threshold prior computed on its training share.
std::vector<RegimeData> generate_synthetic(const SyntheticConfig& config);

/// A_ij = exp(-d_ij^2 / sigma^2) for i != j and d_ij <= cutoff, else 0.
StructuralKnowledge gaussian_kernel_adjacency(const Eigen::MatrixXd& distances, double sigma, double cutoff);

/// Pearson correlation between rows of x (N x T). Zero-variance rows correlate 0.
Eigen::MatrixXd pearson_matrix(const Eigen::MatrixXd& x);

/// Confidence rule for partial priors: slide a window over the series, take
/// the `percentile` and `1 - percentile` quantiles of each |corr| entry. An
/// entry is observed when the low quantile clears the threshold (confident
/// edge) or the high quantile stays at or below it (confident non-edge).
struct PercentileRule {
    std::size_t window = 50;
    double percentile = 0.15;
};

/// Binary prior from |Pearson| > threshold on x (N x T), diagonal set to 1.
StructuralKnowledge extract_correlation_prior(const Eigen::MatrixXd& x, double threshold,
                                              const std::optional<PercentileRule>& rule = std::nullopt);

/// Ordered sliding windows over one series. Input i covers steps
/// [start_i - tau, start_i), target covers [start_i, start_i + horizon).
struct WindowSet {
    std::size_t num_variables = 0;
    std::size_t input_steps = 0;
    std::size_t horizon = 0;
    std::vector<std::size_t> starts;  // window ids: first target step in regime time
    std::vector<double> inputs;       // [n, N, tau]
    std::vector<double> targets;      // [n, N, horizon]

    std::size_t size() const { return starts.size(); }
    bool empty() const { return starts.empty(); }
    Tensor input_batch(const std::vector<std::size_t>& rows) const;
    Tensor target_batch(const std::vector<std::size_t>& rows) const;
    WindowSet subset(const std::vector<std::size_t>& rows) const;
    void append(const WindowSet& other);
};

/// x: N x T. `offset` is added to every window id.
WindowSet window_dataset(const Eigen::MatrixXd& x, std::size_t tau, std::size_t horizon, std::size_t stride = 1,
                         std::size_t offset = 0);

struct ZScore {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static ZScore fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
};

/// Boundaries [0, a), [a, b), [b, T) of a regime of length T.
std::pair<std::size_t, std::size_t> split_points(std::size_t length, const SplitRatios& ratios);

/// A regime ready for training: normalized with its own training statistics.
struct RegimeDataset {
    int id = 0;
    std::string name;
    StructuralKnowledge structure;
    ZScore scaler;
    WindowSet train;
    WindowSet val;
    WindowSet test;
};

RegimeDataset prepare_regime(const RegimeData& regime, int id, std::size_t tau, std::size_t horizon,
                             const SplitRatios& ratios = {});

/// File name and contents of every file describing a regime directory.
std::vector<std::pair<std::string, std::string>> serialize_regime(const RegimeData& regime);

RegimeData load_regime_csv(const std::filesystem::path& dir);

std::string matrix_to_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header = {});
/// Numeric CSV; `skip_header` drops the first line. `source` names the file in errors.
Eigen::MatrixXd parse_matrix_csv(const std::string& text, bool skip_header, const std::string& source,
                                 std::vector<std::string>* header = nullptr);

}  // namespace skicl
