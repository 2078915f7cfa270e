#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "blendflow/errors.hpp"

namespace blendflow::detail {

// Dense row-major matrix, only as large as a network's node count.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Solves A x = b by LU with partial pivoting. A is modified in place.
inline std::vector<double> solve_dense(Matrix a, std::vector<double> b) {
    const std::size_t n = a.rows;
    if (a.cols != n || b.size() != n) throw SimulationError("solve_dense: shape mismatch");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::abs(a(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > best) {
                best = std::abs(a(i, k));
                piv = i;
            }
        }
        if (!(best > 0.0) || !std::isfinite(best)) {
            throw SimulationError("solve_dense: singular matrix");
        }
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(b[k], b[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double m = a(i, k) / a(k, k);
            a(i, k) = m;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= m * a(k, j);
            b[i] -= m * b[k];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= a(ii, j) * x[j];
        x[ii] = s / a(ii, ii);
    }
    return x;
}

// Spectral norm (largest singular value) via power iteration on A^T A.
inline double spectral_norm(const Matrix& a, double tol = 1e-10,
                            int max_iter = 20000) {
    const std::size_t m = a.rows, n = a.cols;
    if (m == 0 || n == 0) return 0.0;
    std::vector<double> v(n), av(m), w(n);
    for (std::size_t j = 0; j < n; ++j) v[j] = 1.0 + 0.01 * static_cast<double>(j);
    double nv = 0;
    for (double x : v) nv += x * x;
    nv = std::sqrt(nv);
    for (auto& x : v) x /= nv;

    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < n; ++j) s += a(i, j) * v[j];
            av[i] = s;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t i = 0; i < m; ++i) s += a(i, j) * av[i];
            w[j] = s;
        }
        double nw = 0;
        for (double x : w) nw += x * x;
        nw = std::sqrt(nw);
        if (nw == 0.0) return 0.0;
        const double lambda_new = nw;  // eigenvalue of A^T A
        for (std::size_t j = 0; j < n; ++j) v[j] = w[j] / nw;
        if (std::abs(lambda_new - lambda) <= tol * std::max(1.0, lambda_new)) {
            return std::sqrt(lambda_new);
        }
        lambda = lambda_new;
    }
    return std::sqrt(lambda);
}

}  // namespace blendflow::detail
