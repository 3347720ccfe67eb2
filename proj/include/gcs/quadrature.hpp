#ifndef GCS_QUADRATURE_HPP
#define GCS_QUADRATURE_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gcs {

/// Gauss-Hermite rule for ∫ e^{-x²} f(x) dx ≈ Σ α_l f(ξ_l).
/// Weights sum to √π; nodes are symmetric about 0.
struct QuadratureRule {
    std::vector<double> nodes;   // ξ_1..ξ_J, ascending
    std::vector<double> weights; // α_1..α_J, positive
    int J() const { return static_cast<int>(nodes.size()); }
};

namespace detail {

/// Implicit-QL eigensolver for a symmetric tridiagonal matrix (EISPACK tql2
/// lineage). d = diagonal, e = subdiagonal (e[0..n-2]); on return d holds the
/// eigenvalues and z0 the first component of each normalized eigenvector.
inline void tridiag_eigen_first_row(std::vector<double>& d,
                                    std::vector<double>& e,
                                    std::vector<double>& z0) {
    const int n = static_cast<int>(d.size());
    e.push_back(0.0);
    // Full eigenvector accumulation is O(n^3); n is tiny (quadrature order).
    std::vector<double> z(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        z[static_cast<std::size_t>(i) * n + i] = 1.0;

    for (int l = 0; l < n; ++l) {
        for (int iter = 0;; ++iter) {
            int m = l;
            for (; m < n - 1; ++m) {
                const double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) <= 1e-300 || std::fabs(e[m]) <= 2.3e-16 * dd)
                    break;
            }
            if (m == l)
                break;
            if (iter >= 50)
                throw std::runtime_error("tridiagonal eigensolver failed to converge");
            double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            double r = std::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
            double s = 1.0, c = 1.0, p = 0.0;
            int i = m - 1;
            for (; i >= l; --i) {
                double f = s * e[i];
                const double b = c * e[i];
                r = std::hypot(f, g);
                e[i + 1] = r;
                if (r == 0.0) { // rotation underflowed; restart this sweep
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for (int k = 0; k < n; ++k) {
                    double* zk = &z[static_cast<std::size_t>(k) * n];
                    f = zk[i + 1];
                    zk[i + 1] = s * zk[i] + c * f;
                    zk[i] = c * zk[i] - s * f;
                }
            }
            if (r == 0.0 && i >= l)
                continue;
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return d[a] < d[b]; });
    std::vector<double> ds(n);
    z0.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        ds[i] = d[order[i]];
        z0[i] = z[static_cast<std::size_t>(order[i])]; // row 0, column order[i]
    }
    d = std::move(ds);
}

} // namespace detail

/// Nodes and weights via Golub-Welsch: eigen-decomposition of the Jacobi
/// matrix of the (physicists') Hermite recurrence, off-diagonal √(k/2).
/// α_l = √π · (first eigenvector component)². Symmetry is enforced exactly
/// by pairing ±ξ after the solve.
inline QuadratureRule gauss_hermite(int j) {
    if (j < 1)
        throw std::invalid_argument("gauss_hermite: order must be >= 1");
    std::vector<double> d(j, 0.0), e;
    for (int k = 1; k < j; ++k)
        e.push_back(std::sqrt(k / 2.0));
    std::vector<double> z0;
    detail::tridiag_eigen_first_row(d, e, z0);

    const double sqrt_pi = std::sqrt(M_PI);
    QuadratureRule rule;
    rule.nodes.resize(j);
    rule.weights.resize(j);
    for (int i = 0; i < j; ++i) {
        rule.nodes[i] = d[i];
        rule.weights[i] = sqrt_pi * z0[i] * z0[i];
    }
    for (int i = 0; i < j / 2; ++i) {
        const int k = j - 1 - i;
        const double x = 0.5 * (rule.nodes[k] - rule.nodes[i]);
        rule.nodes[i] = -x;
        rule.nodes[k] = x;
        const double w = 0.5 * (rule.weights[i] + rule.weights[k]);
        rule.weights[i] = w;
        rule.weights[k] = w;
    }
    if (j % 2 == 1)
        rule.nodes[j / 2] = 0.0;
    return rule;
}

} // namespace gcs

#endif
