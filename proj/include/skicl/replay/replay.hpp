#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "skicl/consistency.hpp"
#include "skicl/data/data.hpp"

namespace skicl {

inline constexpr int kManifestFormatVersion = 1;

class SkiclModel;

/// Sample covariance of the rows of h (normalized by n - 1). Fewer than two
/// rows give the zero matrix.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& h);

/// ||C_a - C_b||_F^2 / (4 q^2) for q-column representation sets.
double coral_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double coral_from_covariances(const Eigen::MatrixXd& ca, const Eigen::MatrixXd& cb);

/// Contiguous modes: mode k holds rows [boundaries[k], boundaries[k + 1]).
struct ModeSplit {
    std::vector<std::size_t> boundaries;
    bool fallback = false;  // no feasible split existed; one mode spans everything

    std::size_t modes() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
    std::size_t mode_size(std::size_t k) const { return boundaries[k + 1] - boundaries[k]; }
};

struct ModeSearchOptions {
    std::size_t parts = 10;                // even pieces; their inner edges are the candidate cuts
    std::size_t max_modes = 7;             // K0
    std::size_t min_size = 1;              // every mode must be strictly larger
    std::optional<std::size_t> max_size;   // every mode must be strictly smaller (default n)
};

struct ModeSearchResult {
    ModeSplit split;
    double objective = 0.0;
    std::vector<std::size_t> greedy_cuts;  // cuts in the order the greedy pass added them
};

/// floor(k n / parts) for k = 1..parts-1, without duplicates or ends.
std::vector<std::size_t> candidate_cuts(std::size_t n, std::size_t parts);

/// (1/K) * sum over ordered pairs i != j of CORAL(mode i, mode j).
double split_objective(const Eigen::MatrixXd& h, const std::vector<std::size_t>& boundaries);

bool split_is_feasible(const ModeSplit& split, std::size_t n, const ModeSearchOptions& options);

/// Greedy incremental cuts over the candidate set, sweeping K from 2 up to
/// min(K0, parts - 1). Returns the feasible K with the best objective (ties
/// go to the smaller K); falls back to a single flagged mode.
ModeSearchResult characterize_modes(const Eigen::MatrixXd& h, const ModeSearchOptions& options = {});

/// max(1, floor(budget * |M_k| / n)) per mode, trimmed to fit the budget:
/// largest quotas shrink first (later modes on ties), then trailing modes drop.
std::vector<std::size_t> mode_quotas(const std::vector<std::size_t>& sizes, std::size_t budget);

/// Greedy representation matching inside rows [begin, end): repeatedly adds the
/// row whose inclusion brings the subset covariance closest to the mode's.
std::vector<std::size_t> greedy_match(const Eigen::MatrixXd& h, std::size_t begin, std::size_t end,
                                      std::size_t quota);

/// Union of per-mode greedy selections, ascending. A budget of n or more
/// returns every row.
std::vector<std::size_t> select_samples(const Eigen::MatrixXd& h, const ModeSplit& split, std::size_t budget);

/// Uniform sample of `budget` row indices out of n without replacement, ascending.
std::vector<std::size_t> random_select(std::size_t n, std::size_t budget, std::uint64_t seed);

/// ceil(ratio * n), at least one and at most n.
std::size_t memory_budget(std::size_t n, double ratio);

/// Node-mean of the encoder embedding for every window, in window order.
Eigen::MatrixXd build_representations(SkiclModel& model, const WindowSet& windows, std::size_t batch = 64);

enum class Selector { ski_cl, er, none };
std::string to_string(Selector selector);
Selector selector_from_string(const std::string& name);

struct MemoryEntry {
    int regime_id = 0;
    std::string regime_name;
    std::size_t budget = 0;
    std::vector<std::size_t> rows;  // indices into the regime's training windows
    WindowSet windows;
    StructuralKnowledge structure;
};

class MemoryBuffer {
public:
    /// Rejects duplicate regimes and windows whose variable count differs from
    /// earlier entries.
    void add(MemoryEntry entry);
    bool empty() const { return total_windows() == 0; }
    std::size_t total_windows() const;
    const std::vector<MemoryEntry>& entries() const { return entries_; }
    /// {format_version, entries: [{regime_id, regime_name, budget, window_ids}]}.
    nlohmann::json manifest(Selector selector) const;

private:
    std::vector<MemoryEntry> entries_;
};

}  // namespace skicl
