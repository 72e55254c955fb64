#include "skicl/data/data.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "skicl/errors.hpp"
#include "skicl/json_keys.hpp"
#include "skicl/log.hpp"

namespace skicl {

namespace {

constexpr int kMaxAdjacencyDraws = 100;
constexpr double kClip = 10.0;

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace

void SyntheticConfig::validate() const {
    if (num_variables < 2) throw ConfigError("synthetic: need at least two variables");
    if (num_regimes == 0) throw ConfigError("synthetic: num_regimes must be positive");
    if (regime_length() < 2) throw ConfigError("synthetic: total_steps too small for the regime count");
    if (!(noise_std > 0.0)) throw ConfigError("synthetic: noise_std must be positive");
    if (!(sparsity > 0.0 && sparsity < 1.0)) throw ConfigError("synthetic: sparsity must lie in (0, 1)");
    if (!(spectral_radius > 0.0)) throw ConfigError("synthetic: spectral_radius must be positive");
    if (!(prior_threshold > 0.0 && prior_threshold < 1.0)) throw ConfigError("synthetic: prior_threshold must lie in (0, 1)");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("synthetic: train_fraction must lie in (0, 1]");
}

void RegimeData::validate() const {
    if (values.rows() == 0 || values.cols() == 0) throw std::invalid_argument(name + ": empty series");
    if (!values.allFinite()) throw std::invalid_argument(name + ": series contains non-finite values");
    if (!variables.empty() && variables.size() != num_variables()) {
        throw std::invalid_argument(name + ": " + std::to_string(variables.size()) + " variable names for " +
                                    std::to_string(num_variables()) + " series");
    }
    if (structure.size() != num_variables()) {
        throw std::invalid_argument(name + ": structure is " + std::to_string(structure.size()) + "x" +
                                    std::to_string(structure.size()) + " but the series has " +
                                    std::to_string(num_variables()) + " variables");
    }
    structure.validate();
}

Eigen::MatrixXd random_sparse_adjacency(std::size_t n, double sparsity, std::mt19937_64& rng) {
    std::bernoulli_distribution edge(sparsity);
    for (int attempt = 0; attempt < kMaxAdjacencyDraws; ++attempt) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(idx(n), idx(n));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (edge(rng)) a(idx(i), idx(j)) = a(idx(j), idx(i)) = 1.0;
            }
        }
        if (a.sum() > 0.0) return a;
    }
    throw std::runtime_error("synthetic: no non-empty adjacency after " + std::to_string(kMaxAdjacencyDraws) +
                             " draws at sparsity " + std::to_string(sparsity));
}

Eigen::MatrixXd stabilized_transition(const Eigen::MatrixXd& adjacency, double radius) {
    const Eigen::Index n = adjacency.rows();
    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double degree = adjacency.row(i).sum();
        if (degree > 0.0) lap.row(i) -= adjacency.row(i) / degree;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(lap, false);
    const double rho = solver.eigenvalues().cwiseAbs().maxCoeff();
    return radius * lap / rho;
}

std::vector<RegimeData> generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    const std::size_t n = config.num_variables;
    const std::size_t length = config.regime_length();

    static constexpr double kLevels[] = {-1.0, -0.5, 0.5, 1.0};
    std::uniform_int_distribution<int> level(0, 3);
    Eigen::VectorXd state(idx(n));
    for (std::size_t i = 0; i < n; ++i) state(idx(i)) = kLevels[level(rng)];

    std::normal_distribution<double> noise(0.0, config.noise_std);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("x" + std::to_string(i));

    std::vector<RegimeData> regimes;
    for (std::size_t s = 0; s < config.num_regimes; ++s) {
        const Eigen::MatrixXd adjacency = random_sparse_adjacency(n, config.sparsity, rng);
        const Eigen::MatrixXd transition = stabilized_transition(adjacency, config.spectral_radius);
        if (s == 0) {
            for (std::size_t t = 0; t < config.burn_in; ++t) {
                state = transition * state;
                for (Eigen::Index i = 0; i < state.size(); ++i) state(i) = std::clamp(state(i) + noise(rng), -kClip, kClip);
            }
        }
        Eigen::MatrixXd values(idx(n), idx(length));
        for (std::size_t t = 0; t < length; ++t) {
            if (s == 0 && t == 0) {
                values.col(0) = state;
                continue;
            }
            Eigen::VectorXd next = transition * state;
            for (Eigen::Index i = 0; i < next.size(); ++i) next(i) = std::clamp(next(i) + noise(rng), -kClip, kClip);
            state = next;
            values.col(idx(t)) = state;
        }
        const auto train_steps = static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(length)));
        RegimeData regime;
        regime.name = "regime_" + std::to_string(s + 1);
        regime.variables = names;
        regime.structure = extract_correlation_prior(values.leftCols(idx(std::max<std::size_t>(train_steps, 1))),
                                                     config.prior_threshold);
        regime.structure.regime_id = static_cast<int>(s + 1);
        regime.values = std::move(values);
        regime.transition = transition;
        regimes.push_back(std::move(regime));
    }
    return regimes;
}

StructuralKnowledge gaussian_kernel_adjacency(const Eigen::MatrixXd& distances, double sigma, double cutoff) {
    if (!(sigma > 0.0)) throw ConfigError("gaussian kernel: sigma must be positive");
    if (distances.rows() != distances.cols()) throw std::invalid_argument("gaussian kernel: distances must be square");
    if ((distances.array() < 0.0).any() || !distances.allFinite()) {
        throw std::invalid_argument("gaussian kernel: distances must be finite and non-negative");
    }
    const Eigen::Index n = distances.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = distances(i, j);
            if (i != j && d <= cutoff) a(i, j) = std::exp(-(d * d) / (sigma * sigma));
        }
    }
    return StructuralKnowledge::fully_observed(std::move(a), EdgeKind::continuous);
}

Eigen::MatrixXd pearson_matrix(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
    Eigen::VectorXd norms = centered.rowwise().norm();
    Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (norms(i) == 0.0 || norms(j) == 0.0) continue;
            corr(i, j) = std::clamp(centered.row(i).dot(centered.row(j)) / (norms(i) * norms(j)), -1.0, 1.0);
        }
    }
    return corr;
}

StructuralKnowledge extract_correlation_prior(const Eigen::MatrixXd& x, double threshold,
                                              const std::optional<PercentileRule>& rule) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("correlation prior: threshold must lie in (0, 1)");
    if (x.cols() < 30) {
        throw std::invalid_argument("correlation prior: need at least 30 steps, got " + std::to_string(x.cols()));
    }
    const Eigen::Index n = x.rows();
    Eigen::VectorXd spread = (x.colwise() - x.rowwise().mean()).rowwise().norm();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (spread(i) == 0.0) log_warning("correlation prior: variable " + std::to_string(i) + " has zero variance");
    }
    const Eigen::MatrixXd corr = pearson_matrix(x);
    Eigen::MatrixXd a = (corr.array().abs() > threshold).cast<double>();
    a.diagonal().setOnes();
    StructuralKnowledge prior = StructuralKnowledge::fully_observed(std::move(a), EdgeKind::binary);
    if (!rule) return prior;

    if (rule->window < 3 || static_cast<Eigen::Index>(rule->window) > x.cols()) {
        throw ConfigError("correlation prior: percentile window must lie in [3, series length]");
    }
    if (!(rule->percentile > 0.0 && rule->percentile < 0.5)) {
        throw ConfigError("correlation prior: percentile must lie in (0, 0.5)");
    }
    std::vector<Eigen::MatrixXd> windows;
    const auto w = idx(rule->window);
    for (Eigen::Index start = 0; start + w <= x.cols(); start += w) {
        windows.push_back(pearson_matrix(x.middleCols(start, w)).cwiseAbs());
    }
    const auto quantile = [](std::vector<double> v, double p) {
        std::sort(v.begin(), v.end());
        return v[static_cast<std::size_t>(std::floor(p * static_cast<double>(v.size() - 1)))];
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            std::vector<double> samples;
            for (const auto& c : windows) samples.push_back(c(i, j));
            const double low = quantile(samples, rule->percentile);
            const double high = quantile(samples, 1.0 - rule->percentile);
            prior.mask(i, j) = (low > threshold || high <= threshold) ? 1.0 : 0.0;
        }
    }
    return prior;
}

Tensor WindowSet::input_batch(const std::vector<std::size_t>& rows) const {
    const std::size_t width = num_variables * input_steps;
    std::vector<double> out;
    out.reserve(rows.size() * width);
    for (auto r : rows) out.insert(out.end(), inputs.begin() + static_cast<long>(r * width), inputs.begin() + static_cast<long>((r + 1) * width));
    return Tensor({rows.size(), num_variables, input_steps}, std::move(out));
}

Tensor WindowSet::target_batch(const std::vector<std::size_t>& rows) const {
    const std::size_t width = num_variables * horizon;
    std::vector<double> out;
    out.reserve(rows.size() * width);
    for (auto r : rows) out.insert(out.end(), targets.begin() + static_cast<long>(r * width), targets.begin() + static_cast<long>((r + 1) * width));
    return Tensor({rows.size(), num_variables, horizon}, std::move(out));
}

WindowSet WindowSet::subset(const std::vector<std::size_t>& rows) const {
    WindowSet out{num_variables, input_steps, horizon, {}, {}, {}};
    const std::size_t in_w = num_variables * input_steps, out_w = num_variables * horizon;
    for (auto r : rows) {
        if (r >= size()) throw std::out_of_range("window subset: row " + std::to_string(r) + " of " + std::to_string(size()));
        out.starts.push_back(starts[r]);
        out.inputs.insert(out.inputs.end(), inputs.begin() + static_cast<long>(r * in_w), inputs.begin() + static_cast<long>((r + 1) * in_w));
        out.targets.insert(out.targets.end(), targets.begin() + static_cast<long>(r * out_w), targets.begin() + static_cast<long>((r + 1) * out_w));
    }
    return out;
}

void WindowSet::append(const WindowSet& other) {
    if (other.empty()) return;
    if (empty() && inputs.empty()) {
        num_variables = other.num_variables;
        input_steps = other.input_steps;
        horizon = other.horizon;
    }
    if (other.num_variables != num_variables || other.input_steps != input_steps || other.horizon != horizon) {
        throw std::invalid_argument("window append: layouts differ (N " + std::to_string(num_variables) + " vs " +
                                    std::to_string(other.num_variables) + ")");
    }
    starts.insert(starts.end(), other.starts.begin(), other.starts.end());
    inputs.insert(inputs.end(), other.inputs.begin(), other.inputs.end());
    targets.insert(targets.end(), other.targets.begin(), other.targets.end());
}

WindowSet window_dataset(const Eigen::MatrixXd& x, std::size_t tau, std::size_t horizon, std::size_t stride,
                         std::size_t offset) {
    if (tau == 0 || horizon == 0 || stride == 0) throw ConfigError("windows: tau, horizon and stride must be positive");
    const auto steps = static_cast<std::size_t>(x.cols());
    if (steps < tau + horizon) {
        throw std::invalid_argument("windows: series of " + std::to_string(steps) + " steps is shorter than tau + horizon = " +
                                    std::to_string(tau + horizon));
    }
    const auto n = static_cast<std::size_t>(x.rows());
    WindowSet set{n, tau, horizon, {}, {}, {}};
    const std::size_t count = (steps - tau - horizon) / stride + 1;
    set.inputs.reserve(count * n * tau);
    set.targets.reserve(count * n * horizon);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t t = tau + k * stride;
        set.starts.push_back(t + offset);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = 0; s < tau; ++s) set.inputs.push_back(x(idx(i), idx(t - tau + s)));
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = 0; s < horizon; ++s) set.targets.push_back(x(idx(i), idx(t + s)));
        }
    }
    return set;
}

ZScore ZScore::fit(const Eigen::MatrixXd& x) {
    if (x.cols() == 0) throw std::invalid_argument("z-score: empty series");
    ZScore z;
    z.mean = x.rowwise().mean();
    z.scale.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double var = (x.row(i).array() - z.mean(i)).square().mean();
        if (var > 0.0) {
            z.scale(i) = std::sqrt(var);
        } else {
            log_warning("z-score: variable " + std::to_string(i) + " is constant on the fitting span");
            z.scale(i) = 1.0;
        }
    }
    return z;
}

Eigen::MatrixXd ZScore::apply(const Eigen::MatrixXd& x) const {
    return (x.colwise() - mean).array().colwise() / scale.array();
}

std::pair<std::size_t, std::size_t> split_points(std::size_t length, const SplitRatios& ratios) {
    if (!(ratios.train > 0.0 && ratios.val >= 0.0 && ratios.train + ratios.val < 1.0)) {
        throw ConfigError("split: ratios must leave a positive test share");
    }
    const auto len = static_cast<double>(length);
    const auto a = static_cast<std::size_t>(std::floor(ratios.train * len));
    const auto b = static_cast<std::size_t>(std::floor((ratios.train + ratios.val) * len));
    return {a, b};
}

RegimeDataset prepare_regime(const RegimeData& regime, int id, std::size_t tau, std::size_t horizon,
                             const SplitRatios& ratios) {
    regime.validate();
    const auto [a, b] = split_points(regime.length(), ratios);
    const auto need = tau + horizon;
    const auto check = [&](const char* part, std::size_t len) {
        if (len < need) {
            throw ConfigError(regime.name + ": " + part + " split has " + std::to_string(len) +
                              " steps, fewer than tau + horizon = " + std::to_string(need) + " (zero windows)");
        }
    };
    check("train", a);
    check("validation", b - a);
    check("test", regime.length() - b);

    RegimeDataset out;
    out.id = id;
    out.name = regime.name;
    out.structure = regime.structure;
    out.structure.regime_id = id;
    out.scaler = ZScore::fit(regime.values.leftCols(idx(a)));
    const Eigen::MatrixXd z = out.scaler.apply(regime.values);
    out.train = window_dataset(z.leftCols(idx(a)), tau, horizon, 1, 0);
    out.val = window_dataset(z.middleCols(idx(a), idx(b - a)), tau, horizon, 1, a);
    out.test = window_dataset(z.rightCols(idx(regime.length() - b)), tau, horizon, 1, b);
    return out;
}

std::string matrix_to_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
    if (!header.empty()) out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
        out << '\n';
    }
    return out.str();
}

Eigen::MatrixXd parse_matrix_csv(const std::string& text, bool skip_header, const std::string& source,
                                 std::vector<std::string>* header) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0, width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && skip_header) {
            if (header) {
                header->clear();
                for (auto& c : split_line(line)) header->push_back(trim(c));
            }
            width = split_line(line).size();
            continue;
        }
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (width == 0) width = cells.size();
        if (cells.size() != width) {
            throw std::runtime_error(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                     " columns, found " + std::to_string(cells.size()));
        }
        std::vector<double> row;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string cell = trim(cells[c]);
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size()) {
                throw std::runtime_error(source + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell +
                                         "' in column " + std::to_string(c + 1));
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(idx(rows.size()), idx(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) m(idx(i), idx(j)) = rows[i][j];
    return m;
}

std::vector<std::pair<std::string, std::string>> serialize_regime(const RegimeData& regime) {
    std::vector<std::pair<std::string, std::string>> files;
    std::vector<std::string> names = regime.variables;
    if (names.empty()) {
        for (std::size_t i = 0; i < regime.num_variables(); ++i) names.push_back("x" + std::to_string(i));
    }
    files.emplace_back("data.csv", matrix_to_csv(regime.values.transpose(), names));
    files.emplace_back("structure.csv", matrix_to_csv(regime.structure.adjacency));
    if (!regime.structure.is_fully_observed()) files.emplace_back("mask.csv", matrix_to_csv(regime.structure.mask));
    nlohmann::json meta{{"format_version", kRegimeFormatVersion},
                        {"name", regime.name},
                        {"edge_kind", to_string(regime.structure.kind)}};
    files.emplace_back("meta.json", meta.dump(2) + "\n");
    if (regime.transition) files.emplace_back("ground_truth_W.csv", matrix_to_csv(*regime.transition));
    return files;
}

RegimeData load_regime_csv(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("regime directory not found: " + dir.string());
    RegimeData regime;
    const auto meta_path = dir / "meta.json";
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(meta_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(meta_path.string() + ": " + e.what());
    }
    reject_unknown_keys(meta, {"format_version", "name", "edge_kind"}, meta_path.string());
    if (meta.value("format_version", kRegimeFormatVersion) != kRegimeFormatVersion) {
        throw std::runtime_error(meta_path.string() + ": unsupported format_version");
    }
    regime.name = meta.value("name", dir.filename().string());
    const EdgeKind kind = edge_kind_from_string(meta.value("edge_kind", std::string("binary")));

    const auto data_path = dir / "data.csv";
    regime.values = parse_matrix_csv(read_file(data_path), true, data_path.string(), &regime.variables).transpose();
    const auto n = regime.num_variables();

    const auto load_square = [&](const char* file) {
        const auto path = dir / file;
        Eigen::MatrixXd m = parse_matrix_csv(read_file(path), false, path.string());
        if (static_cast<std::size_t>(m.rows()) != n || static_cast<std::size_t>(m.cols()) != n) {
            throw std::runtime_error(path.string() + ": expected " + std::to_string(n) + "x" + std::to_string(n) +
                                     " matrix to match data.csv, found " + std::to_string(m.rows()) + "x" +
                                     std::to_string(m.cols()));
        }
        return m;
    };
    regime.structure.adjacency = load_square("structure.csv");
    regime.structure.kind = kind;
    regime.structure.mask = std::filesystem::exists(dir / "mask.csv") ? load_square("mask.csv")
                                                                       : Eigen::MatrixXd::Ones(idx(n), idx(n));
    if (std::filesystem::exists(dir / "ground_truth_W.csv")) regime.transition = load_square("ground_truth_W.csv");
    try {
        regime.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(dir.string() + ": " + e.what());
    }
    return regime;
}

}  // namespace skicl
