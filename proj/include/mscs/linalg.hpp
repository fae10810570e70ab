#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace mscs::linalg {

/**
 * Solve the symmetric positive (semi)definite system A x = b in place via
 * unpivoted LDL^T. A is n x n row-major and is overwritten with the factors.
 * Returns false when a pivot collapses (rank deficiency), in which case the
 * caller usually retries with a small ridge.
 */
inline bool ldlt_solve(std::vector<double>& A, std::vector<double>& b, int n) {
    std::vector<double> diag(n);
    for (int j = 0; j < n; ++j) {
        double d = A[static_cast<std::size_t>(j) * n + j];
        for (int k = 0; k < j; ++k) {
            const double l = A[static_cast<std::size_t>(j) * n + k];
            d -= l * l * diag[k];
        }
        if (!(std::fabs(d) > 1e-13 * (1.0 + std::fabs(A[static_cast<std::size_t>(j) * n + j]))))
            return false;
        diag[j] = d;
        for (int i = j + 1; i < n; ++i) {
            double v = A[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                v -= A[static_cast<std::size_t>(i) * n + k] *
                     A[static_cast<std::size_t>(j) * n + k] * diag[k];
            A[static_cast<std::size_t>(i) * n + j] = v / d;
        }
    }
    // Forward solve L z = b, scale by D, back solve L^T x = z.
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < i; ++k)
            b[i] -= A[static_cast<std::size_t>(i) * n + k] * b[k];
    for (int i = 0; i < n; ++i) b[i] /= diag[i];
    for (int i = n - 1; i >= 0; --i)
        for (int k = i + 1; k < n; ++k)
            b[i] -= A[static_cast<std::size_t>(k) * n + i] * b[k];
    return true;
}

/// Solve A x = b for symmetric A, retrying with a tiny ridge when the plain
/// factorization fails. Returns false only if the ridged system fails too.
inline bool solve_spd(const std::vector<double>& A, const std::vector<double>& b,
                      std::vector<double>& x, int n) {
    std::vector<double> work = A;
    x = b;
    if (ldlt_solve(work, x, n)) return true;
    double trace = 0.0;
    for (int j = 0; j < n; ++j) trace += A[static_cast<std::size_t>(j) * n + j];
    const double ridge = 1e-10 * (trace / std::max(1, n) + 1.0);
    work = A;
    for (int j = 0; j < n; ++j) work[static_cast<std::size_t>(j) * n + j] += ridge;
    x = b;
    return ldlt_solve(work, x, n);
}

}  // namespace mscs::linalg
