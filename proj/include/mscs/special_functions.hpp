#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mscs {

namespace detail {

// Regularized lower incomplete gamma P(a, x), evaluated by the power series
// for x < a + 1 and via the continued fraction for Q otherwise
// (Abramowitz & Stegun 6.5.29 / 6.5.31, modified Lentz recurrence).
inline double regularized_gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0)
        throw std::domain_error("regularized_gamma_p: requires a > 0, x >= 0");
    if (x == 0.0) return 0.0;

    const double log_prefix = a * std::log(x) - x - std::lgamma(a);
    if (log_prefix < -745.0) return x < a ? 0.0 : 1.0;  // underflow of x^a e^-x / Gamma(a)

    if (x < a + 1.0) {
        // Series: P(a,x) = x^a e^-x / Gamma(a) * sum_n x^n / (a(a+1)...(a+n))
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int n = 0; n < 1000; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-16)
                return sum * std::exp(log_prefix);
        }
        return sum * std::exp(log_prefix);
    }

    // Continued fraction for Q(a,x); P = 1 - Q.
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return 1.0 - std::exp(log_prefix) * h;
}

inline double regularized_gamma_q(double a, double x) {
    if (x < a + 1.0) return 1.0 - regularized_gamma_p(a, x);
    // Evaluate the continued fraction directly so small upper tails keep
    // full relative precision.
    const double log_prefix = a * std::log(x) - x - std::lgamma(a);
    if (log_prefix < -745.0) return 0.0;
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(log_prefix) * h;
}

}  // namespace detail

/// Chi-square CDF with `df` degrees of freedom: P(df/2, x/2).
inline double chi2_cdf(double x, int df) {
    if (df <= 0) throw std::domain_error("chi2_cdf: df must be positive");
    if (x < 0.0) throw std::domain_error("chi2_cdf: x must be nonnegative");
    if (x == 0.0) return 0.0;
    return detail::regularized_gamma_p(0.5 * df, 0.5 * x);
}

/// Upper tail 1 - CDF, computed directly so tiny p-values survive.
inline double chi2_sf(double x, int df) {
    if (df <= 0) throw std::domain_error("chi2_sf: df must be positive");
    if (x < 0.0) throw std::domain_error("chi2_sf: x must be nonnegative");
    if (x == 0.0) return 1.0;
    return detail::regularized_gamma_q(0.5 * df, 0.5 * x);
}

/// Smallest q with chi2_cdf(q, df) = confidence, |CDF(q) - confidence| <= 1e-10.
/// Bisection on the CDF; the bracket is grown geometrically first.
inline double chi2_quantile(double confidence, int df) {
    if (df <= 0) throw std::domain_error("chi2_quantile: df must be positive");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::domain_error("chi2_quantile: confidence must be in (0,1)");

    double lo = 0.0;
    double hi = std::max(1.0, static_cast<double>(df));
    while (chi2_cdf(hi, df) < confidence) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12)
            throw std::runtime_error("chi2_quantile: bracket expansion failed");
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (chi2_cdf(mid, df) < confidence)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-13 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

/// Quantile by upper-tail mass: the q with chi2_sf(q, df) = tail_prob. For
/// tiny tails this keeps full relative precision where inverting the CDF
/// would hit the resolution of doubles near 1.
inline double chi2_quantile_complement(double tail_prob, int df) {
    if (df <= 0)
        throw std::domain_error("chi2_quantile_complement: df must be positive");
    if (!(tail_prob > 0.0 && tail_prob < 1.0))
        throw std::domain_error("chi2_quantile_complement: tail_prob must be in (0,1)");

    double lo = 0.0;
    double hi = std::max(1.0, static_cast<double>(df));
    while (chi2_sf(hi, df) > tail_prob) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12)
            throw std::runtime_error("chi2_quantile_complement: bracket expansion failed");
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (chi2_sf(mid, df) > tail_prob)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-13 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace mscs
