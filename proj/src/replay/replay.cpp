#include "skicl/replay/replay.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "skicl/errors.hpp"
#include "skicl/log.hpp"
#include "skicl/model/model.hpp"

namespace skicl {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Covariances of contiguous row ranges, computed once per range.
class SegmentCovariances {
public:
    explicit SegmentCovariances(const Eigen::MatrixXd& h) : h_(h) {}

    const Eigen::MatrixXd& get(std::size_t begin, std::size_t end) {
        auto [it, inserted] = cache_.try_emplace({begin, end});
        if (inserted) it->second = covariance(h_.middleRows(idx(begin), idx(end - begin)));
        return it->second;
    }

    double objective(const std::vector<std::size_t>& b) {
        const std::size_t k = b.size() - 1;
        if (k < 2) return 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) total += coral_from_covariances(get(b[i], b[i + 1]), get(b[j], b[j + 1]));
        }
        return 2.0 * total / static_cast<double>(k);
    }

private:
    const Eigen::MatrixXd& h_;
    std::map<std::pair<std::size_t, std::size_t>, Eigen::MatrixXd> cache_;
};

std::vector<std::size_t> with_ends(std::vector<std::size_t> cuts, std::size_t n) {
    std::sort(cuts.begin(), cuts.end());
    cuts.insert(cuts.begin(), 0);
    cuts.push_back(n);
    return cuts;
}

}  // namespace

Eigen::MatrixXd covariance(const Eigen::MatrixXd& h) {
    const Eigen::Index q = h.cols();
    if (h.rows() < 2) return Eigen::MatrixXd::Zero(q, q);
    const Eigen::MatrixXd centered = h.rowwise() - h.colwise().mean();
    return (centered.transpose() * centered) / static_cast<double>(h.rows() - 1);
}

double coral_from_covariances(const Eigen::MatrixXd& ca, const Eigen::MatrixXd& cb) {
    if (ca.rows() != cb.rows() || ca.cols() != cb.cols()) {
        throw std::invalid_argument("coral: covariance sizes " + std::to_string(ca.rows()) + " and " +
                                    std::to_string(cb.rows()) + " differ");
    }
    const auto q = static_cast<double>(ca.rows());
    return (ca - cb).squaredNorm() / (4.0 * q * q);
}

double coral_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("coral: representation widths " + std::to_string(a.cols()) + " and " +
                                    std::to_string(b.cols()) + " differ");
    }
    if (a.cols() == 0) throw std::invalid_argument("coral: zero-width representations");
    return coral_from_covariances(covariance(a), covariance(b));
}

std::vector<std::size_t> candidate_cuts(std::size_t n, std::size_t parts) {
    std::vector<std::size_t> cuts;
    for (std::size_t k = 1; k < parts; ++k) {
        const std::size_t c = k * n / parts;
        if (c > 0 && c < n && (cuts.empty() || cuts.back() != c)) cuts.push_back(c);
    }
    return cuts;
}

double split_objective(const Eigen::MatrixXd& h, const std::vector<std::size_t>& boundaries) {
    SegmentCovariances cov(h);
    return cov.objective(boundaries);
}

bool split_is_feasible(const ModeSplit& split, std::size_t n, const ModeSearchOptions& options) {
    const std::size_t upper = options.max_size.value_or(n);
    for (std::size_t k = 0; k < split.modes(); ++k) {
        const std::size_t size = split.mode_size(k);
        if (size <= options.min_size || size >= upper) return false;
    }
    return split.modes() >= 2 && split.boundaries.front() == 0 && split.boundaries.back() == n;
}

ModeSearchResult characterize_modes(const Eigen::MatrixXd& h, const ModeSearchOptions& options) {
    if (options.parts < 3) throw ConfigError("mode search: parts must be at least 3");
    if (options.max_modes < 2) throw ConfigError("mode search: max_modes must be at least 2");
    const auto n = static_cast<std::size_t>(h.rows());
    const auto candidates = candidate_cuts(n, options.parts);
    const std::size_t k_max = std::min({options.max_modes, options.parts - 1, candidates.size() + 1});

    SegmentCovariances cov(h);
    ModeSearchResult best;
    best.split.boundaries = {0, n};
    best.split.fallback = true;
    bool found = false;

    std::vector<std::size_t> cuts;
    std::vector<bool> used(candidates.size(), false);
    for (std::size_t k = 2; k <= k_max; ++k) {
        double step_best = -1.0;
        std::size_t step_pick = 0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (used[c]) continue;
            auto trial = cuts;
            trial.push_back(candidates[c]);
            const double value = cov.objective(with_ends(trial, n));
            if (value > step_best) {
                step_best = value;
                step_pick = c;
            }
        }
        used[step_pick] = true;
        cuts.push_back(candidates[step_pick]);
        best.greedy_cuts.push_back(candidates[step_pick]);

        ModeSplit split{with_ends(cuts, n), false};
        if (!split_is_feasible(split, n, options)) continue;
        if (!found || step_best > best.objective) {
            best.split = split;
            best.objective = step_best;
            found = true;
        }
    }
    if (!found) {
        best.objective = 0.0;
        log_warning("mode search: no feasible split of " + std::to_string(n) + " rows, using a single mode");
    }
    return best;
}

std::vector<std::size_t> mode_quotas(const std::vector<std::size_t>& sizes, std::size_t budget) {
    const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (n == 0) throw std::invalid_argument("mode quotas: empty modes");
    std::vector<std::size_t> quotas;
    for (auto s : sizes) quotas.push_back(std::max<std::size_t>(1, budget * s / n));
    std::size_t total = std::accumulate(quotas.begin(), quotas.end(), std::size_t{0});
    while (total > budget) {
        std::size_t largest = 0;
        for (std::size_t k = 0; k < quotas.size(); ++k) {
            if (quotas[k] >= quotas[largest]) largest = k;
        }
        if (quotas[largest] > 1) {
            --quotas[largest];
        } else {
            // every mode is down to one sample: drop trailing modes
            auto last = std::find_if(quotas.rbegin(), quotas.rend(), [](auto q) { return q > 0; });
            *last = 0;
        }
        --total;
    }
    return quotas;
}

std::vector<std::size_t> greedy_match(const Eigen::MatrixXd& h, std::size_t begin, std::size_t end,
                                      std::size_t quota) {
    if (begin > end || end > static_cast<std::size_t>(h.rows())) throw std::out_of_range("greedy match: bad row range");
    quota = std::min(quota, end - begin);
    const Eigen::Index q = h.cols();
    const Eigen::MatrixXd target = covariance(h.middleRows(idx(begin), idx(end - begin)));
    const double scale = 4.0 * static_cast<double>(q) * static_cast<double>(q);

    std::vector<std::size_t> chosen;
    std::vector<bool> taken(end - begin, false);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(q);
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd trial(q, q);
    while (chosen.size() < quota) {
        const auto m = static_cast<double>(chosen.size() + 1);
        double best = std::numeric_limits<double>::infinity();
        std::size_t pick = end;
        for (std::size_t r = begin; r < end; ++r) {
            if (taken[r - begin]) continue;
            double distance;
            if (chosen.empty()) {
                distance = target.squaredNorm() / scale;
            } else {
                const Eigen::VectorXd x = h.row(idx(r)).transpose();
                const Eigen::VectorXd sum = total + x;
                trial.noalias() = scatter + x * x.transpose() - sum * sum.transpose() / m;
                trial /= (m - 1.0);
                distance = (trial - target).squaredNorm() / scale;
            }
            if (distance < best) {
                best = distance;
                pick = r;
            }
        }
        taken[pick - begin] = true;
        chosen.push_back(pick);
        const Eigen::VectorXd x = h.row(idx(pick)).transpose();
        total += x;
        scatter.noalias() += x * x.transpose();
    }
    return chosen;
}

std::vector<std::size_t> select_samples(const Eigen::MatrixXd& h, const ModeSplit& split, std::size_t budget) {
    const auto n = static_cast<std::size_t>(h.rows());
    if (budget == 0) throw ConfigError("select samples: budget must be positive");
    if (budget >= n) {
        log_warning("select samples: budget " + std::to_string(budget) + " covers all " + std::to_string(n) +
                    " rows, keeping everything");
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }
    if (split.modes() == 0 || split.boundaries.front() != 0 || split.boundaries.back() != n) {
        throw std::invalid_argument("select samples: split does not cover the representation set");
    }
    std::vector<std::size_t> sizes;
    for (std::size_t k = 0; k < split.modes(); ++k) sizes.push_back(split.mode_size(k));
    const auto quotas = mode_quotas(sizes, budget);
    std::vector<std::size_t> selected;
    for (std::size_t k = 0; k < split.modes(); ++k) {
        if (quotas[k] == 0) continue;
        auto part = greedy_match(h, split.boundaries[k], split.boundaries[k + 1], quotas[k]);
        selected.insert(selected.end(), part.begin(), part.end());
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

std::vector<std::size_t> random_select(std::size_t n, std::size_t budget, std::uint64_t seed) {
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(std::min(budget, n));
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::size_t memory_budget(std::size_t n, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("memory budget ratio must lie in (0, 1]");
    const auto raw = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(raw, 1, std::max<std::size_t>(n, 1));
}

Eigen::MatrixXd build_representations(SkiclModel& model, const WindowSet& windows, std::size_t batch) {
    const std::size_t width = model.config().encoder.embedding_width;
    const std::size_t nodes = windows.num_variables;
    Eigen::MatrixXd reps(idx(windows.size()), idx(width));
    NoGradGuard guard;
    for (std::size_t start = 0; start < windows.size(); start += batch) {
        std::vector<std::size_t> rows;
        for (std::size_t r = start; r < std::min(start + batch, windows.size()); ++r) rows.push_back(r);
        const Tensor z = model.encoder().forward(windows.input_batch(rows), false);
        auto zv = z.values();
        for (std::size_t b = 0; b < rows.size(); ++b) {
            for (std::size_t c = 0; c < width; ++c) {
                double total = 0.0;
                for (std::size_t i = 0; i < nodes; ++i) total += zv[(b * nodes + i) * width + c];
                reps(idx(rows[b]), idx(c)) = total / static_cast<double>(nodes);
            }
        }
    }
    return reps;
}

std::string to_string(Selector selector) {
    switch (selector) {
        case Selector::ski_cl: return "ski-cl";
        case Selector::er: return "er";
        case Selector::none: return "none";
    }
    return "unknown";
}

Selector selector_from_string(const std::string& name) {
    if (name == "ski-cl") return Selector::ski_cl;
    if (name == "er") return Selector::er;
    if (name == "none") return Selector::none;
    throw ConfigError("unknown selector '" + name + "' (expected ski-cl, er or none)");
}

void MemoryBuffer::add(MemoryEntry entry) {
    for (const auto& e : entries_) {
        if (e.regime_id == entry.regime_id) {
            throw std::invalid_argument("memory: regime " + std::to_string(entry.regime_id) + " stored twice");
        }
        if (!e.windows.empty() && !entry.windows.empty() && e.windows.num_variables != entry.windows.num_variables) {
            throw std::invalid_argument("memory: regime " + std::to_string(entry.regime_id) + " has " +
                                        std::to_string(entry.windows.num_variables) + " variables, buffer holds " +
                                        std::to_string(e.windows.num_variables));
        }
    }
    if (entry.rows.size() != entry.windows.size()) throw std::invalid_argument("memory: rows and windows disagree");
    entries_.push_back(std::move(entry));
}

std::size_t MemoryBuffer::total_windows() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.windows.size();
    return n;
}

nlohmann::json MemoryBuffer::manifest(Selector selector) const {
    nlohmann::json doc{{"format_version", kManifestFormatVersion}, {"selector", to_string(selector)}};
    doc["entries"] = nlohmann::json::array();
    for (const auto& e : entries_) {
        doc["entries"].push_back({{"regime_id", e.regime_id},
                                  {"regime_name", e.regime_name},
                                  {"budget", e.budget},
                                  {"rows", e.rows},
                                  {"window_ids", e.windows.starts},
                                  {"structure_file", "structure_regime_" + std::to_string(e.regime_id) + ".csv"}});
    }
    return doc;
}

}  // namespace skicl
