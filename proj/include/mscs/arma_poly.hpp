#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace mscs::poly {

/**
 * true iff every root of 1 + c1 L + ... + cm L^m lies strictly outside
 * |L| <= radius. Schur-Cohn recursion on the reversed, radius-scaled
 * polynomial; no root extraction needed.
 */
inline bool roots_outside(const std::vector<double>& c, double radius = 1.0) {
    // Scale L -> radius * w, then reverse so the question becomes Schur
    // stability (all roots inside the open unit disc).
    std::vector<double> scaled;
    scaled.reserve(c.size() + 1);
    scaled.push_back(1.0);
    double rpow = 1.0;
    for (double cj : c) {
        rpow *= radius;
        scaled.push_back(cj * rpow);
    }
    while (scaled.size() > 1 && scaled.back() == 0.0) scaled.pop_back();
    const std::size_t m = scaled.size() - 1;
    if (m == 0) return true;

    std::vector<double> a(scaled.rbegin(), scaled.rend());  // reversed
    std::vector<double> b;
    for (std::size_t n = m; n >= 1; --n) {
        const double k = a[0] / a[n];
        if (!(std::fabs(k) < 1.0) || !std::isfinite(k)) return false;
        b.resize(n);
        for (std::size_t i = 1; i <= n; ++i) b[i - 1] = a[i] - k * a[n - i];
        a.swap(b);
    }
    return true;
}

/// Stationarity of the AR polynomial 1 - sum_j phi_j L^j with a safety margin.
inline bool ar_stationary(const std::vector<double>& phi, double margin = 0.0) {
    std::vector<double> c(phi.size());
    for (std::size_t j = 0; j < phi.size(); ++j) c[j] = -phi[j];
    return roots_outside(c, 1.0 + margin);
}

/// Invertibility of the MA polynomial 1 + sum_k theta_k L^k with a margin.
inline bool ma_invertible(const std::vector<double>& theta, double margin = 0.0) {
    return roots_outside(theta, 1.0 + margin);
}

/**
 * Map partial autocorrelations r in (-1,1)^m to the coefficients of a
 * stationary AR polynomial 1 - sum phi_j L^j (Durbin-Levinson). A bijection
 * onto the stationary region, which makes unconstrained optimization over
 * the mapped space equivalent to constrained optimization over coefficients.
 */
inline std::vector<double> pacf_to_ar(const std::vector<double>& r) {
    const std::size_t m = r.size();
    std::vector<double> phi(m, 0.0), prev(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        phi[k] = r[k];
        for (std::size_t j = 0; j < k; ++j) phi[j] = prev[j] - r[k] * prev[k - 1 - j];
        prev = phi;
    }
    return phi;
}

/// Inverse of pacf_to_ar. Returns false if the coefficients are not strictly
/// stationary (some implied partial hits or exceeds 1 in magnitude).
inline bool ar_to_pacf(const std::vector<double>& phi, std::vector<double>& r) {
    std::vector<double> work = phi;
    const std::size_t m = phi.size();
    r.assign(m, 0.0);
    for (std::size_t k = m; k >= 1; --k) {
        const double rk = work[k - 1];
        if (!(std::fabs(rk) < 1.0)) return false;
        r[k - 1] = rk;
        std::vector<double> prev(k - 1);
        const double denom = 1.0 - rk * rk;
        for (std::size_t j = 0; j + 1 < k; ++j)
            prev[j] = (work[j] + rk * work[k - 2 - j]) / denom;
        work = prev;
    }
    return true;
}

}  // namespace mscs::poly
