#pragma once

// Brute-force reference computations written without the library's helpers.

#include <Eigen/Core>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

// Two-pass sample covariance, (n - 1) normalization, zero for n < 2.
inline std::vector<std::vector<double>> covariance(const Eigen::MatrixXd& h, std::size_t begin, std::size_t end) {
    const std::size_t q = static_cast<std::size_t>(h.cols());
    std::vector<std::vector<double>> c(q, std::vector<double>(q, 0.0));
    const std::size_t n = end - begin;
    if (n < 2) return c;
    std::vector<double> mean(q, 0.0);
    for (std::size_t r = begin; r < end; ++r)
        for (std::size_t a = 0; a < q; ++a) mean[a] += h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a));
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = begin; r < end; ++r) {
        for (std::size_t a = 0; a < q; ++a) {
            for (std::size_t b = 0; b < q; ++b) {
                c[a][b] += (h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) - mean[a]) *
                           (h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(b)) - mean[b]);
            }
        }
    }
    for (auto& row : c)
        for (auto& v : row) v /= static_cast<double>(n - 1);
    return c;
}

inline double coral(const std::vector<std::vector<double>>& ca, const std::vector<std::vector<double>>& cb) {
    const double q = static_cast<double>(ca.size());
    double f = 0.0;
    for (std::size_t a = 0; a < ca.size(); ++a)
        for (std::size_t b = 0; b < ca.size(); ++b) f += (ca[a][b] - cb[a][b]) * (ca[a][b] - cb[a][b]);
    return f / (4.0 * q * q);
}

inline double coral(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return coral(covariance(a, 0, static_cast<std::size_t>(a.rows())), covariance(b, 0, static_cast<std::size_t>(b.rows())));
}

// Sorted, de-duplicated interior points floor(k n / parts).
inline std::vector<std::size_t> even_cuts(std::size_t n, std::size_t parts) {
    std::vector<std::size_t> cuts;
    for (std::size_t k = 1; k < parts; ++k) {
        const std::size_t c = (k * n) / parts;
        bool seen = false;
        for (auto x : cuts) seen = seen || x == c;
        if (c > 0 && c < n && !seen) cuts.push_back(c);
    }
    return cuts;
}

// Exhaustive best single cut: argmax CORAL(H[0:c], H[c:n]); ties to the smaller cut.
inline std::size_t best_single_cut(const Eigen::MatrixXd& h, std::size_t parts) {
    const std::size_t n = static_cast<std::size_t>(h.rows());
    std::size_t best_cut = 0;
    double best = -1.0;
    for (std::size_t c : even_cuts(n, parts)) {
        const double d = coral(covariance(h, 0, c), covariance(h, c, n));
        if (d > best) {
            best = d;
            best_cut = c;
        }
    }
    return best_cut;
}

// Exhaustive singleton argmin of CORAL({row}, mode) over rows [begin, end).
inline std::size_t best_singleton(const Eigen::MatrixXd& h, std::size_t begin, std::size_t end) {
    const auto mode = covariance(h, begin, end);
    std::size_t pick = begin;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = begin; r < end; ++r) {
        const double d = coral(covariance(h, r, r + 1), mode);
        if (d < best) {
            best = d;
            pick = r;
        }
    }
    return pick;
}

// Rows drawn in blocks whose scale changes between blocks.
inline Eigen::MatrixXd blocky_rows(std::size_t n, std::size_t q, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> scale(0.2, 3.0);
    std::uniform_int_distribution<std::size_t> block(3, 12);
    Eigen::MatrixXd h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
    std::size_t r = 0;
    while (r < n) {
        const std::size_t len = block(rng);
        const double s = scale(rng);
        for (std::size_t i = 0; i < len && r < n; ++i, ++r)
            for (std::size_t a = 0; a < q; ++a) h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) = s * z(rng);
    }
    return h;
}

}  // namespace oracle
