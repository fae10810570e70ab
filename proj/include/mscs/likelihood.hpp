#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mscs/arma_poly.hpp"
#include "mscs/dataset.hpp"
#include "mscs/linalg.hpp"
#include "mscs/model_spec.hpp"
#include "mscs/rng.hpp"

namespace mscs {

/**
 * Coefficients for a ModelSpec, stored in the spec's canonical term order:
 * ar[i] pairs with spec.ar_lags()[i], ma[i] with spec.ma_lags()[i], exo[i]
 * with spec.exo_terms()[i]. sigma is the innovation standard deviation.
 */
struct ParamVector {
    double intercept = 0.0;
    std::vector<double> ar;
    std::vector<double> ma;
    std::vector<double> exo;
    double sigma = 1.0;

    void validate_for(const ModelSpec& spec) const {
        if (ar.size() != spec.ar_lags().size() ||
            ma.size() != spec.ma_lags().size() ||
            exo.size() != spec.exo_terms().size())
            throw std::invalid_argument("ParamVector: shape does not match spec");
        if (!(sigma > 0.0))
            throw std::invalid_argument("ParamVector: sigma must be positive");
    }
};

/// How the Gaussian likelihood treats pre-sample innovations of MA terms.
/// Css zeroes them (pure conditional recursion); ExactMa integrates them out
/// under the stationary MA distribution via the innovations algorithm. The
/// two agree for MA-free models and converge to each other as T grows.
enum class LikelihoodKind { Css, ExactMa };

struct FitOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-6;
    int n_restarts = 1;
    bool enforce_stationarity = true;
    bool enforce_invertibility = true;
    LikelihoodKind likelihood = LikelihoodKind::ExactMa;

    void validate() const {
        if (max_iterations <= 0)
            throw std::invalid_argument("FitOptions: max_iterations must be positive");
        if (!(gradient_tolerance > 0.0))
            throw std::invalid_argument("FitOptions: gradient_tolerance must be positive");
        if (n_restarts < 0)
            throw std::invalid_argument("FitOptions: n_restarts must be nonnegative");
    }
};

struct FittedModel {
    ModelSpec spec;
    ParamVector params;
    double loglik = -std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
    int conditioning_length = 0;
};

/// Thrown when a likelihood evaluation produces a non-finite value; carries
/// the offending parameter point.
class LikelihoodError : public std::runtime_error {
public:
    LikelihoodError(std::string what, ModelSpec spec, ParamVector params)
        : std::runtime_error(std::move(what)),
          spec(std::move(spec)),
          params(std::move(params)) {}
    ModelSpec spec;
    ParamVector params;
};

namespace detail {

// Innovation recursion over t = cond..T-1 with pre-sample innovations zero.
// Returns false if any residual is non-finite.
inline bool innovation_residuals(const ModelSpec& spec, const ParamVector& p,
                                 const TimeSeriesDataset& data, int cond,
                                 std::vector<double>& eps) {
    const auto& y = data.y();
    const int T = static_cast<int>(y.size());
    eps.assign(T - cond, 0.0);
    const auto& ar = spec.ar_lags();
    const auto& ma = spec.ma_lags();
    const auto& exo = spec.exo_terms();
    for (int t = cond; t < T; ++t) {
        double pred = spec.intercept() ? p.intercept : 0.0;
        for (std::size_t i = 0; i < ar.size(); ++i) pred += p.ar[i] * y[t - ar[i]];
        for (std::size_t i = 0; i < exo.size(); ++i)
            pred += p.exo[i] * data.x(t - exo[i].lag, exo[i].predictor);
        for (std::size_t i = 0; i < ma.size(); ++i) {
            const int lagged = t - ma[i] - cond;
            if (lagged >= 0) pred += p.ma[i] * eps[lagged];
        }
        const double e = y[t] - pred;
        if (!std::isfinite(e)) return false;
        eps[t - cond] = e;
    }
    return true;
}

}  // namespace detail

/**
 * Conditional Gaussian log-likelihood of observations cond+1..T given the
 * first cond observations, with pre-sample innovations set to zero. Using a
 * common cond across all candidates of a run keeps nested likelihoods
 * directly comparable.
 */
inline double log_likelihood(const ModelSpec& spec, const ParamVector& params,
                             const TimeSeriesDataset& data, int cond) {
    params.validate_for(spec);
    const int T = static_cast<int>(data.length());
    if (cond < spec.max_lag())
        throw std::invalid_argument("log_likelihood: conditioning length below max lag");
    if (T <= cond)
        throw std::invalid_argument("log_likelihood: no effective observations");

    std::vector<double> eps;
    if (!detail::innovation_residuals(spec, params, data, cond, eps))
        throw LikelihoodError("log_likelihood: non-finite innovation recursion", spec,
                              params);
    const int n = T - cond;
    double ss = 0.0;
    for (double e : eps) ss += e * e;
    const double s2 = params.sigma * params.sigma;
    const double ll = -0.5 * n * std::log(2.0 * M_PI * s2) - 0.5 * ss / s2;
    if (!std::isfinite(ll))
        throw LikelihoodError("log_likelihood: non-finite value", spec, params);
    return ll;
}

/**
 * Analytic gradient of log_likelihood in the canonical parameter order
 * [intercept?, ar..., ma..., exo..., sigma], via the derivative recursion of
 * the innovations.
 */
inline std::vector<double> log_likelihood_gradient(const ModelSpec& spec,
                                                   const ParamVector& params,
                                                   const TimeSeriesDataset& data,
                                                   int cond) {
    params.validate_for(spec);
    const auto& y = data.y();
    const int T = static_cast<int>(y.size());
    const int n = T - cond;
    std::vector<double> eps;
    if (!detail::innovation_residuals(spec, params, data, cond, eps))
        throw LikelihoodError("log_likelihood_gradient: non-finite recursion", spec,
                              params);

    const auto& ar = spec.ar_lags();
    const auto& ma = spec.ma_lags();
    const auto& exo = spec.exo_terms();
    const int n_lin = (spec.intercept() ? 1 : 0) + static_cast<int>(ar.size()) +
                      static_cast<int>(exo.size());
    const int n_par = n_lin + static_cast<int>(ma.size());

    // deriv[j][t] = d eps_t / d param_j; the MA feedback term applies to all.
    std::vector<std::vector<double>> deriv(n_par, std::vector<double>(n, 0.0));
    for (int t = cond; t < T; ++t) {
        const int tt = t - cond;
        int j = 0;
        auto feedback = [&](std::vector<double>& d) {
            for (std::size_t i = 0; i < ma.size(); ++i) {
                const int lagged = tt - ma[i];
                if (lagged >= 0) d[tt] -= params.ma[i] * d[lagged];
            }
        };
        if (spec.intercept()) {
            deriv[j][tt] = -1.0;
            feedback(deriv[j]);
            ++j;
        }
        for (std::size_t i = 0; i < ar.size(); ++i, ++j) {
            deriv[j][tt] = -y[t - ar[i]];
            feedback(deriv[j]);
        }
        for (std::size_t i = 0; i < ma.size(); ++i, ++j) {
            const int lagged = tt - ma[i];
            deriv[j][tt] = lagged >= 0 ? -eps[lagged] : 0.0;
            feedback(deriv[j]);
        }
        for (std::size_t i = 0; i < exo.size(); ++i, ++j) {
            deriv[j][tt] = -data.x(t - exo[i].lag, exo[i].predictor);
            feedback(deriv[j]);
        }
    }

    const double s2 = params.sigma * params.sigma;
    std::vector<double> grad(n_par + 1, 0.0);
    for (int j = 0; j < n_par; ++j) {
        double acc = 0.0;
        for (int t = 0; t < n; ++t) acc += eps[t] * deriv[j][t];
        grad[j] = -acc / s2;
    }
    double ss = 0.0;
    for (double e : eps) ss += e * e;
    grad[n_par] = -n / params.sigma + ss / (s2 * params.sigma);
    return grad;
}

namespace detail {

constexpr double kPartialCap = 1.0 - 1e-6;   // keeps roots off the unit circle
constexpr double kRootMargin = 1e-6;         // radius margin for admissibility
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Shared per-dataset state for fitting many specs: the effective response,
/// one column per distinct term, and a Gram matrix serving closed-form
/// solutions for MA-free candidates.
class FitContext {
public:
    FitContext(const TimeSeriesDataset& data, const ModelSpec& column_superset,
               int conditioning_length)
        : data_(&data), cond_(conditioning_length) {
        const int T = static_cast<int>(data.length());
        if (cond_ < column_superset.max_lag())
            throw std::invalid_argument(
                "FitContext: conditioning length below the largest lag in use");
        if (T - cond_ < 2)
            throw std::invalid_argument("FitContext: no effective sample");
        n_eff_ = T - cond_;

        y_eff_.resize(n_eff_);
        for (int t = 0; t < n_eff_; ++t) y_eff_[t] = data.y()[cond_ + t];

        // Column pool: intercept, AR lags, exogenous terms of the superset.
        if (column_superset.intercept())
            add_column(Term{TermKind::Intercept, 0, 0},
                       std::vector<double>(n_eff_, 1.0));
        for (int j : column_superset.ar_lags()) {
            std::vector<double> col(n_eff_);
            for (int t = 0; t < n_eff_; ++t) col[t] = data.y()[cond_ + t - j];
            add_column(Term{TermKind::AR, j, 0}, std::move(col));
        }
        for (const auto& x : column_superset.exo_terms()) {
            std::vector<double> col(n_eff_);
            for (int t = 0; t < n_eff_; ++t)
                col[t] = data.x(cond_ + t - x.lag, x.predictor);
            add_column(Term{TermKind::Exo, x.lag, x.predictor}, std::move(col));
        }

        // Gram over [columns | y] for the MA-free closed form.
        const int m = static_cast<int>(columns_.size());
        gram_.assign(static_cast<std::size_t>(m) * m, 0.0);
        gram_y_.assign(m, 0.0);
        for (int a = 0; a < m; ++a) {
            for (int b = 0; b <= a; ++b) {
                double acc = 0.0;
                for (int t = 0; t < n_eff_; ++t) acc += columns_[a][t] * columns_[b][t];
                gram_[static_cast<std::size_t>(a) * m + b] = acc;
                gram_[static_cast<std::size_t>(b) * m + a] = acc;
            }
            double acc = 0.0;
            for (int t = 0; t < n_eff_; ++t) acc += columns_[a][t] * y_eff_[t];
            gram_y_[a] = acc;
        }
        yy_ = 0.0;
        for (double v : y_eff_) yy_ += v * v;
        y_var_ = 0.0;
        double mean = 0.0;
        for (double v : y_eff_) mean += v;
        mean /= n_eff_;
        for (double v : y_eff_) y_var_ += (v - mean) * (v - mean);
        y_var_ /= n_eff_;
    }

    const TimeSeriesDataset& data() const { return *data_; }
    int conditioning_length() const { return cond_; }
    int n_eff() const { return n_eff_; }
    const std::vector<double>& y_eff() const { return y_eff_; }
    double y_variance() const { return y_var_; }

    int column_id(const Term& t) const {
        for (std::size_t i = 0; i < terms_.size(); ++i)
            if (terms_[i] == t) return static_cast<int>(i);
        throw std::logic_error("FitContext: term has no prepared column");
    }
    const std::vector<double>& column(int id) const { return columns_[id]; }

    double gram(int a, int b) const {
        return gram_[static_cast<std::size_t>(a) * columns_.size() + b];
    }
    double gram_y(int a) const { return gram_y_[a]; }
    double yy() const { return yy_; }

private:
    void add_column(Term t, std::vector<double> col) {
        terms_.push_back(t);
        columns_.push_back(std::move(col));
    }

    const TimeSeriesDataset* data_;
    int cond_;
    int n_eff_ = 0;
    std::vector<double> y_eff_;
    std::vector<Term> terms_;
    std::vector<std::vector<double>> columns_;
    std::vector<double> gram_, gram_y_;
    double yy_ = 0.0, y_var_ = 0.0;
};

/// Scratch buffers reused across fits; one per worker thread.
struct FitWorkspace {
    std::vector<std::vector<double>> filtered;  // filtered design columns
    std::vector<double> fy;                     // filtered response
    std::vector<double> eps, gram, rhs, beta;
    std::vector<std::vector<double>> dk;        // MA derivative recursions
    std::vector<double> inn_coeff, inn_r, inn_scale;  // innovations filter
};

// In-place inverse-MA filter: u_t = v_t - sum_k theta_k u_{t-k_local}.
inline void ma_filter(const std::vector<double>& v, const std::vector<int>& ma_lags,
                      const std::vector<double>& theta, std::vector<double>& u) {
    const int n = static_cast<int>(v.size());
    u.resize(n);
    for (int t = 0; t < n; ++t) {
        double acc = v[t];
        for (std::size_t i = 0; i < ma_lags.size(); ++i) {
            const int lagged = t - ma_lags[i];
            if (lagged >= 0) acc -= theta[i] * u[lagged];
        }
        u[t] = acc;
    }
}

/**
 * Time-varying one-step prediction filter of a Gaussian MA process under its
 * stationary distribution (innovations algorithm on the banded Toeplitz
 * autocovariance). Row t carries the coefficients on the previous min(t, q)
 * innovations and r[t] the prediction-error variance in sigma^2 units; both
 * converge to the invertible MA representation and 1 as t grows.
 */
class InnovationsFilter {
public:
    /// theta over active lags; internally densified to degree max(ma_lags).
    bool build(const std::vector<int>& ma_lags, const std::vector<double>& theta,
               int n, FitWorkspace& ws) {
        q_ = ma_lags.empty() ? 0 : ma_lags.back();
        n_ = n;
        std::vector<double> c(q_ + 1, 0.0);
        c[0] = 1.0;
        for (std::size_t i = 0; i < ma_lags.size(); ++i) c[ma_lags[i]] = theta[i];

        std::vector<double> g(q_ + 1, 0.0);
        for (int m = 0; m <= q_; ++m)
            for (int i = 0; i + m <= q_; ++i) g[m] += c[i] * c[i + m];

        coeff_ = &ws.inn_coeff;
        r_ = &ws.inn_r;
        coeff_->assign(static_cast<std::size_t>(n_) * q_, 0.0);
        r_->assign(n_, 0.0);
        log_det_ = 0.0;

        auto at = [this](int t, int lag) -> double& {
            return (*coeff_)[static_cast<std::size_t>(t) * q_ + (lag - 1)];
        };
        (*r_)[0] = g[0];
        log_det_ = std::log(g[0]);
        for (int t = 1; t < n_; ++t) {
            const int lo = std::max(0, t - q_);
            for (int k = lo; k <= t - 1; ++k) {
                const int m = t - k;
                double acc = g[m];
                for (int j = lo; j < k; ++j) {
                    if (k - j <= q_) acc -= at(k, k - j) * at(t, t - j) * (*r_)[j];
                }
                at(t, m) = acc / (*r_)[k];
            }
            double rt = g[0];
            for (int j = lo; j <= t - 1; ++j) rt -= at(t, t - j) * at(t, t - j) * (*r_)[j];
            if (!(rt > 1e-14) || !std::isfinite(rt)) return false;
            (*r_)[t] = rt;
            log_det_ += std::log(rt);
        }
        return true;
    }

    int order() const { return q_; }
    double log_det() const { return log_det_; }
    double r(int t) const { return (*r_)[t]; }

    /// Whitening transform: v_t = w_t - sum coeff(t,m) v_{t-m}, then scaled
    /// by 1/sqrt(r_t) so downstream least squares can treat it as spherical.
    void apply(const std::vector<double>& w, std::vector<double>& v,
               const std::vector<double>& inv_sqrt_r) const {
        const int n = static_cast<int>(w.size());
        v.resize(n);
        std::vector<double>& raw = scratch_;
        raw.resize(n);
        for (int t = 0; t < n; ++t) {
            double acc = w[t];
            const int m_max = std::min(t, q_);
            for (int m = 1; m <= m_max; ++m)
                acc -= (*coeff_)[static_cast<std::size_t>(t) * q_ + (m - 1)] * raw[t - m];
            raw[t] = acc;
            v[t] = acc * inv_sqrt_r[t];
        }
    }

private:
    int q_ = 0;
    int n_ = 0;
    std::vector<double>* coeff_ = nullptr;
    std::vector<double>* r_ = nullptr;
    double log_det_ = 0.0;
    mutable std::vector<double> scratch_;
};

struct ProfiledEval {
    double loglik = kNegInf;
    double ssr = 0.0;  // sum of squared (whitened) innovations
    bool ok = false;
};

/**
 * Generalized least squares of the target on the design after removing the
 * MA structure: a zero-initialized inverse filter under Css, the stationary
 * whitening transform under ExactMa. Fills ws.beta and ws.eps and returns
 * the sigma-profiled log-likelihood.
 */
inline ProfiledEval profiled_eval(const FitContext& ctx,
                                  const std::vector<const std::vector<double>*>& cols,
                                  const std::vector<double>& target,
                                  const std::vector<int>& ma_lags,
                                  const std::vector<double>& theta,
                                  LikelihoodKind kind, FitWorkspace& ws) {
    ProfiledEval out;
    const int n = ctx.n_eff();
    const int d = static_cast<int>(cols.size());

    double log_det = 0.0;
    ws.filtered.resize(d);
    if (kind == LikelihoodKind::Css || ma_lags.empty()) {
        ma_filter(target, ma_lags, theta, ws.fy);
        for (int j = 0; j < d; ++j) ma_filter(*cols[j], ma_lags, theta, ws.filtered[j]);
    } else {
        InnovationsFilter filt;
        if (!filt.build(ma_lags, theta, n, ws)) return out;
        ws.inn_scale.resize(n);
        for (int t = 0; t < n; ++t) ws.inn_scale[t] = 1.0 / std::sqrt(filt.r(t));
        filt.apply(target, ws.fy, ws.inn_scale);
        for (int j = 0; j < d; ++j) filt.apply(*cols[j], ws.filtered[j], ws.inn_scale);
        log_det = filt.log_det();
    }

    ws.gram.assign(static_cast<std::size_t>(d) * d, 0.0);
    ws.rhs.assign(d, 0.0);
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b <= a; ++b) {
            double acc = 0.0;
            for (int t = 0; t < n; ++t) acc += ws.filtered[a][t] * ws.filtered[b][t];
            ws.gram[static_cast<std::size_t>(a) * d + b] = acc;
            ws.gram[static_cast<std::size_t>(b) * d + a] = acc;
        }
        double acc = 0.0;
        for (int t = 0; t < n; ++t) acc += ws.filtered[a][t] * ws.fy[t];
        ws.rhs[a] = acc;
    }
    if (d > 0 && !linalg::solve_spd(ws.gram, ws.rhs, ws.beta, d)) return out;
    if (d == 0) ws.beta.clear();

    ws.eps.resize(n);
    double ssr = 0.0;
    for (int t = 0; t < n; ++t) {
        double e = ws.fy[t];
        for (int j = 0; j < d; ++j) e -= ws.beta[j] * ws.filtered[j][t];
        ws.eps[t] = e;
        ssr += e * e;
    }
    if (!std::isfinite(ssr) || ssr < 0.0) return out;
    const double s2 = ssr / n;
    if (s2 <= 0.0) return out;
    out.loglik = -0.5 * n * (std::log(2.0 * M_PI * s2) + 1.0) - 0.5 * log_det;
    out.ssr = ssr;
    out.ok = std::isfinite(out.loglik);
    return out;
}

/// d loglik / d theta_k at the profiled optimum (envelope: the inner OLS and
/// the profiled variance have zero first-order effect).
inline void profiled_gradient(const std::vector<int>& ma_lags,
                              const std::vector<double>& theta, double ssr,
                              FitWorkspace& ws, std::vector<double>& grad) {
    const int n = static_cast<int>(ws.eps.size());
    const int q = static_cast<int>(ma_lags.size());
    const double s2 = ssr / n;
    ws.dk.resize(q);
    grad.assign(q, 0.0);
    for (int k = 0; k < q; ++k) {
        auto& d = ws.dk[k];
        d.assign(n, 0.0);
        for (int t = 0; t < n; ++t) {
            const int lagged = t - ma_lags[k];
            double acc = lagged >= 0 ? -ws.eps[lagged] : 0.0;
            for (int i = 0; i < q; ++i) {
                const int li = t - ma_lags[i];
                if (li >= 0) acc -= theta[i] * d[li];
            }
            d[t] = acc;
        }
        double acc = 0.0;
        for (int t = 0; t < n; ++t) acc += ws.eps[t] * d[t];
        grad[k] = -acc / s2;
    }
}

// ---- parameterization of the MA search space ------------------------------

struct MaParameterization {
    std::vector<int> lags;
    bool use_pacf = false;  // dense {1..q} with invertibility enforced
    bool barrier = false;   // gapped set with invertibility enforced

    explicit MaParameterization(const std::vector<int>& ma_lags, bool enforce)
        : lags(ma_lags) {
        const int q = static_cast<int>(ma_lags.size());
        const bool dense = q > 0 && ma_lags.back() == q;
        use_pacf = enforce && dense;
        barrier = enforce && !dense;
    }

    int dim() const { return static_cast<int>(lags.size()); }

    /// Unconstrained point -> MA coefficients. Returns false when a barrier
    /// parameterization lands outside the invertibility region.
    bool to_theta(const std::vector<double>& u, std::vector<double>& theta) const {
        const int q = dim();
        theta.resize(q);
        if (use_pacf) {
            std::vector<double> r(q);
            for (int i = 0; i < q; ++i) r[i] = kPartialCap * std::tanh(u[i]);
            const std::vector<double> phi = poly::pacf_to_ar(r);
            for (int i = 0; i < q; ++i) theta[i] = -phi[i];
            return true;
        }
        theta = u;
        if (barrier) {
            std::vector<double> dense_theta(lags.empty() ? 0 : lags.back(), 0.0);
            for (int i = 0; i < q; ++i) dense_theta[lags[i] - 1] = theta[i];
            if (!poly::ma_invertible(dense_theta, kRootMargin)) return false;
        }
        return true;
    }

    /// MA coefficients -> unconstrained start value (best effort; shrinks
    /// toward zero until admissible).
    std::vector<double> from_theta(std::vector<double> theta) const {
        const int q = dim();
        std::vector<double> u(q, 0.0);
        for (int attempt = 0; attempt < 80; ++attempt) {
            if (use_pacf) {
                std::vector<double> phi(q);
                for (int i = 0; i < q; ++i) phi[i] = -theta[i];
                std::vector<double> r;
                if (poly::ar_to_pacf(phi, r)) {
                    bool ok = true;
                    for (int i = 0; i < q; ++i) {
                        const double x = r[i] / kPartialCap;
                        if (!(std::fabs(x) < 1.0)) { ok = false; break; }
                        u[i] = std::atanh(x);
                    }
                    if (ok) return u;
                }
            } else if (barrier) {
                std::vector<double> dense_theta(lags.empty() ? 0 : lags.back(), 0.0);
                for (int i = 0; i < q; ++i) dense_theta[lags[i] - 1] = theta[i];
                if (poly::ma_invertible(dense_theta, 2.0 * kRootMargin)) return theta;
            } else {
                return theta;
            }
            for (double& v : theta) v *= 0.85;
        }
        return std::vector<double>(q, 0.0);
    }

    /// Jacobian d theta / d u by central differences of the (cheap) map.
    void jacobian(const std::vector<double>& u, std::vector<double>& jac) const {
        const int q = dim();
        jac.assign(static_cast<std::size_t>(q) * q, 0.0);
        if (!use_pacf) {
            for (int i = 0; i < q; ++i) jac[static_cast<std::size_t>(i) * q + i] = 1.0;
            return;
        }
        const double h = 1e-6;
        std::vector<double> up = u, um = u, tp, tm;
        for (int j = 0; j < q; ++j) {
            up[j] = u[j] + h;
            um[j] = u[j] - h;
            to_theta(up, tp);
            to_theta(um, tm);
            for (int i = 0; i < q; ++i)
                jac[static_cast<std::size_t>(i) * q + j] = (tp[i] - tm[i]) / (2.0 * h);
            up[j] = u[j];
            um[j] = u[j];
        }
    }
};

// ---- BFGS (maximization, monotone line search) -----------------------------

struct BfgsResult {
    std::vector<double> x;
    double f = kNegInf;
    int iterations = 0;
    bool converged = false;
};

/// eval(x, f, grad) returns false for inadmissible points. grad may be null
/// when only the value is needed (line search probes).
inline BfgsResult bfgs_maximize(
    const std::function<bool(const std::vector<double>&, double&,
                             std::vector<double>*)>& eval,
    std::vector<double> x0, int max_iterations, double gradient_tolerance) {
    BfgsResult res;
    const int n = static_cast<int>(x0.size());
    std::vector<double> x = std::move(x0), g(n), g_new(n);
    double f;
    if (!eval(x, f, &g)) {
        res.x = x;
        return res;
    }

    std::vector<double> H(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) H[static_cast<std::size_t>(i) * n + i] = 1.0;
    std::vector<double> dir(n), x_new(n), s(n), yv(n), Hy(n);

    int it = 0;
    for (; it < max_iterations; ++it) {
        double gmax = 0.0;
        for (double v : g) gmax = std::max(gmax, std::fabs(v));
        if (gmax <= gradient_tolerance * std::max(1.0, std::fabs(f))) {
            res.converged = true;
            break;
        }

        double dg = 0.0;
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += H[static_cast<std::size_t>(i) * n + j] * g[j];
            dir[i] = acc;
            dg += acc * g[i];
        }
        if (!(dg > 0.0)) {  // curvature lost: steepest ascent restart
            for (auto& v : H) v = 0.0;
            for (int i = 0; i < n; ++i) H[static_cast<std::size_t>(i) * n + i] = 1.0;
            dir = g;
            dg = 0.0;
            for (double v : g) dg += v * v;
            if (!(dg > 0.0)) break;
        }

        double step = 1.0;
        double f_new = kNegInf;
        bool improved = false;
        for (int ls = 0; ls < 40; ++ls) {
            for (int i = 0; i < n; ++i) x_new[i] = x[i] + step * dir[i];
            double f_try;
            if (eval(x_new, f_try, nullptr) && f_try >= f + 1e-4 * step * dg) {
                f_new = f_try;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) {
            res.converged = true;  // no ascent direction left at this scale
            break;
        }

        eval(x_new, f_new, &g_new);
        double sy = 0.0;
        for (int i = 0; i < n; ++i) {
            s[i] = x_new[i] - x[i];
            yv[i] = g[i] - g_new[i];  // gradient of -f increases: flip sign below
            sy += s[i] * yv[i];
        }
        if (sy > 1e-12) {
            // BFGS update of the inverse Hessian of -f (H maps gradients of f
            // to ascent directions).
            double yHy = 0.0;
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j)
                    acc += H[static_cast<std::size_t>(i) * n + j] * yv[j];
                Hy[i] = acc;
            }
            for (int i = 0; i < n; ++i) yHy += yv[i] * Hy[i];
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    H[static_cast<std::size_t>(i) * n + j] +=
                        ((sy + yHy) * s[i] * s[j]) / (sy * sy) -
                        (Hy[i] * s[j] + s[i] * Hy[j]) / sy;
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
    res.x = x;
    res.f = f;
    res.iterations = it;
    return res;
}

}  // namespace detail

// ---- fitting ----------------------------------------------------------------

namespace detail {

struct CandidateColumns {
    std::vector<const std::vector<double>*> cols;  // [intercept][ar][exo]
    std::vector<int> pool_ids;
};

inline CandidateColumns linear_columns(const FitContext& ctx, const ModelSpec& spec) {
    CandidateColumns out;
    if (spec.intercept())
        out.pool_ids.push_back(ctx.column_id(Term{TermKind::Intercept, 0, 0}));
    for (int j : spec.ar_lags())
        out.pool_ids.push_back(ctx.column_id(Term{TermKind::AR, j, 0}));
    for (const auto& x : spec.exo_terms())
        out.pool_ids.push_back(ctx.column_id(Term{TermKind::Exo, x.lag, x.predictor}));
    for (int id : out.pool_ids) out.cols.push_back(&ctx.column(id));
    return out;
}

/// Hannan-Rissanen starting value for the MA coefficients: residuals from a
/// long AR regression serve as innovation proxies, then one joint OLS yields
/// initial theta.
inline std::vector<double> hannan_rissanen_theta(const FitContext& ctx,
                                                 const ModelSpec& spec,
                                                 const CandidateColumns& lin,
                                                 FitWorkspace& ws) {
    const int n = ctx.n_eff();
    const int q = static_cast<int>(spec.ma_lags().size());
    const int long_ar =
        std::min(std::max(8, 2 * (spec.max_ar_lag() + spec.max_ma_lag())), n / 4);
    if (long_ar < 1 || n - long_ar < long_ar + static_cast<int>(lin.cols.size()) + q + 2)
        return std::vector<double>(q, 0.0);

    // Step 1: y on its own long lags plus the candidate's linear columns.
    const auto& y = ctx.y_eff();
    std::vector<std::vector<double>> longcols(long_ar);
    for (int j = 1; j <= long_ar; ++j) {
        longcols[j - 1].assign(n, 0.0);
        for (int t = j; t < n; ++t) longcols[j - 1][t] = y[t - j];
    }
    std::vector<const std::vector<double>*> step1;
    for (auto& c : longcols) step1.push_back(&c);
    for (auto* c : lin.cols) step1.push_back(c);
    const int d1 = static_cast<int>(step1.size());
    std::vector<double> G(static_cast<std::size_t>(d1) * d1, 0.0), r(d1, 0.0), b;
    for (int a = 0; a < d1; ++a) {
        for (int bb = 0; bb <= a; ++bb) {
            double acc = 0.0;
            for (int t = long_ar; t < n; ++t) acc += (*step1[a])[t] * (*step1[bb])[t];
            G[static_cast<std::size_t>(a) * d1 + bb] = acc;
            G[static_cast<std::size_t>(bb) * d1 + a] = acc;
        }
        double acc = 0.0;
        for (int t = long_ar; t < n; ++t) acc += (*step1[a])[t] * y[t];
        r[a] = acc;
    }
    if (!linalg::solve_spd(G, r, b, d1)) return std::vector<double>(q, 0.0);
    std::vector<double> ehat(n, 0.0);
    for (int t = long_ar; t < n; ++t) {
        double e = y[t];
        for (int a = 0; a < d1; ++a) e -= b[a] * (*step1[a])[t];
        ehat[t] = e;
    }

    // Step 2: y on linear columns plus lagged residual proxies.
    std::vector<std::vector<double>> elag(q);
    for (int i = 0; i < q; ++i) {
        const int k = spec.ma_lags()[i];
        elag[i].assign(n, 0.0);
        for (int t = k; t < n; ++t) elag[i][t] = ehat[t - k];
    }
    std::vector<const std::vector<double>*> step2 = lin.cols;
    for (auto& c : elag) step2.push_back(&c);
    const int d2 = static_cast<int>(step2.size());
    G.assign(static_cast<std::size_t>(d2) * d2, 0.0);
    r.assign(d2, 0.0);
    for (int a = 0; a < d2; ++a) {
        for (int bb = 0; bb <= a; ++bb) {
            double acc = 0.0;
            for (int t = long_ar; t < n; ++t) acc += (*step2[a])[t] * (*step2[bb])[t];
            G[static_cast<std::size_t>(a) * d2 + bb] = acc;
            G[static_cast<std::size_t>(bb) * d2 + a] = acc;
        }
        double acc = 0.0;
        for (int t = long_ar; t < n; ++t) acc += (*step2[a])[t] * y[t];
        r[a] = acc;
    }
    if (!linalg::solve_spd(G, r, b, d2)) return std::vector<double>(q, 0.0);
    std::vector<double> theta(q);
    for (int i = 0; i < q; ++i) theta[i] = b[d2 - q + i];
    for (double& v : theta)
        if (!std::isfinite(v)) v = 0.0;
    return theta;
}

inline std::uint64_t spec_hash(const ModelSpec& spec) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    };
    for (int j : spec.ar_lags()) mix(static_cast<std::uint64_t>(j));
    mix(0xABCDULL);
    for (int k : spec.ma_lags()) mix(static_cast<std::uint64_t>(k));
    mix(0xBCDEULL);
    for (const auto& x : spec.exo_terms()) {
        mix(static_cast<std::uint64_t>(x.predictor) << 16);
        mix(static_cast<std::uint64_t>(x.lag));
    }
    mix(spec.intercept() ? 7ULL : 3ULL);
    return h;
}

inline FittedModel fit_with_context(const FitContext& ctx, const ModelSpec& spec,
                                    const FitOptions& opts, FitWorkspace& ws,
                                    const std::vector<double>* warm_theta = nullptr) {
    opts.validate();
    FittedModel out;
    out.spec = spec;
    out.conditioning_length = ctx.conditioning_length();
    const int n = ctx.n_eff();
    if (n <= spec.dimension() + 1)
        throw std::invalid_argument("fit_mle: effective sample smaller than model dimension");

    const CandidateColumns lin = linear_columns(ctx, spec);
    const int q = static_cast<int>(spec.ma_lags().size());
    const int d = static_cast<int>(lin.cols.size());

    auto finalize = [&](const std::vector<double>& theta, double ssr, int iters,
                        bool converged) {
        out.params.ar.assign(spec.ar_lags().size(), 0.0);
        out.params.exo.assign(spec.exo_terms().size(), 0.0);
        out.params.ma = theta;
        int j = 0;
        if (spec.intercept()) out.params.intercept = ws.beta[j++];
        for (std::size_t i = 0; i < spec.ar_lags().size(); ++i)
            out.params.ar[i] = ws.beta[j++];
        for (std::size_t i = 0; i < spec.exo_terms().size(); ++i)
            out.params.exo[i] = ws.beta[j++];
        const double s2 = ssr / n;
        out.params.sigma = std::sqrt(s2);
        out.loglik = -0.5 * n * (std::log(2.0 * M_PI * s2) + 1.0);
        out.iterations = iters;
        out.converged = converged;
        if (s2 < 1e-12 * std::max(ctx.y_variance(), 1e-300))
            out.converged = false;  // boundary collapse of the innovation variance
    };

    if (q == 0) {
        // Closed form: plain least squares via the precomputed Gram.
        std::vector<double> G(static_cast<std::size_t>(d) * d), r(d);
        for (int a = 0; a < d; ++a) {
            for (int b = 0; b < d; ++b)
                G[static_cast<std::size_t>(a) * d + b] =
                    ctx.gram(lin.pool_ids[a], lin.pool_ids[b]);
            r[a] = ctx.gram_y(lin.pool_ids[a]);
        }
        if (d > 0 && !linalg::solve_spd(G, r, ws.beta, d)) {
            out.converged = false;
            out.loglik = kNegInf;
            return out;
        }
        if (d == 0) ws.beta.clear();
        double ssr = 0.0;
        const auto& y = ctx.y_eff();
        for (int t = 0; t < n; ++t) {
            double e = y[t];
            for (int j2 = 0; j2 < d; ++j2) e -= ws.beta[j2] * (*lin.cols[j2])[t];
            ssr += e * e;
        }
        if (!(ssr > 0.0) || !std::isfinite(ssr)) {
            out.converged = false;
            out.loglik = kNegInf;
            return out;
        }
        finalize(std::vector<double>{}, ssr, 0, true);

        if (out.converged && opts.enforce_stationarity && !spec.ar_lags().empty()) {
            std::vector<double> phi(spec.max_ar_lag(), 0.0);
            for (std::size_t i = 0; i < spec.ar_lags().size(); ++i)
                phi[spec.ar_lags()[i] - 1] = out.params.ar[i];
            if (!poly::ar_stationary(phi, kRootMargin)) {
                // fall through to the constrained joint path below
            } else {
                return out;
            }
        } else {
            return out;
        }
    }

    // Iterative path: quasi-Newton over the MA block with the remaining
    // coefficients profiled out by filtered OLS. The AR block stays linear
    // here; when its profiled estimate breaches an enforced stationarity
    // region, control falls through to the joint constrained path below.
    if (q > 0) {
        MaParameterization par(spec.ma_lags(), opts.enforce_invertibility);
        std::vector<double> theta_scratch;
        double last_ssr = 0.0;
        auto eval_value = [&](const std::vector<double>& u, double& f) -> bool {
            if (!par.to_theta(u, theta_scratch)) return false;
            const ProfiledEval pe =
                profiled_eval(ctx, lin.cols, ctx.y_eff(), spec.ma_lags(),
                              theta_scratch, opts.likelihood, ws);
            if (!pe.ok) return false;
            f = pe.loglik;
            last_ssr = pe.ssr;
            return true;
        };
        auto eval = [&](const std::vector<double>& u, double& f,
                        std::vector<double>* grad) -> bool {
            if (!eval_value(u, f)) return false;
            if (!grad) return true;
            if (opts.likelihood == LikelihoodKind::Css) {
                // envelope gradient: the profiled inner solution contributes
                // no first-order terms
                std::vector<double> gtheta;
                profiled_gradient(spec.ma_lags(), theta_scratch, last_ssr, ws, gtheta);
                std::vector<double> jac;
                par.jacobian(u, jac);
                grad->assign(q, 0.0);
                for (int j = 0; j < q; ++j)
                    for (int i = 0; i < q; ++i)
                        (*grad)[j] += jac[static_cast<std::size_t>(i) * q + j] * gtheta[i];
            } else {
                const double h = 1e-6;
                grad->assign(q, 0.0);
                std::vector<double> up = u;
                for (int j = 0; j < q; ++j) {
                    up[j] = u[j] + h;
                    double fp;
                    if (!eval_value(up, fp)) fp = f;
                    up[j] = u[j] - h;
                    double fm;
                    if (!eval_value(up, fm)) fm = f;
                    up[j] = u[j];
                    (*grad)[j] = (fp - fm) / (2.0 * h);
                }
            }
            return true;
        };

        std::vector<std::vector<double>> starts;
        starts.push_back(par.from_theta(hannan_rissanen_theta(ctx, spec, lin, ws)));
        if (warm_theta && static_cast<int>(warm_theta->size()) == q)
            starts.push_back(par.from_theta(*warm_theta));
        RngStream restart_rng(spec_hash(spec), 0x5EED);
        for (int rser = 0; rser < opts.n_restarts; ++rser) {
            std::vector<double> u = starts.front();
            for (double& v : u) v += 0.5 * restart_rng.normal();
            starts.push_back(std::move(u));
        }

        BfgsResult best;
        for (const auto& s : starts) {
            BfgsResult r = bfgs_maximize(eval, s, opts.max_iterations,
                                         opts.gradient_tolerance);
            if (r.f > best.f) best = r;
        }
        if (!std::isfinite(best.f)) {
            out.converged = false;
            out.loglik = kNegInf;
            return out;
        }
        std::vector<double> theta;
        par.to_theta(best.x, theta);
        const ProfiledEval pe =
            profiled_eval(ctx, lin.cols, ctx.y_eff(), spec.ma_lags(), theta, ws);
        if (!pe.ok) {
            out.converged = false;
            out.loglik = kNegInf;
            return out;
        }
        finalize(theta, pe.ssr, best.iterations, best.converged);

        if (out.converged && opts.enforce_stationarity && !spec.ar_lags().empty()) {
            std::vector<double> phi(spec.max_ar_lag(), 0.0);
            for (std::size_t i = 0; i < spec.ar_lags().size(); ++i)
                phi[spec.ar_lags()[i] - 1] = out.params.ar[i];
            if (poly::ar_stationary(phi, kRootMargin)) return out;
            // else fall through to the joint constrained path
        } else {
            return out;
        }
    }

    // Joint constrained path: optimize AR and MA blocks together, profiling
    // only intercept and exogenous coefficients. Rare; triggered when the
    // profiled AR solution is outside the enforced stationary region.
    {
        const auto& ar_lags = spec.ar_lags();
        const int p = static_cast<int>(ar_lags.size());
        const bool ar_dense = p > 0 && ar_lags.back() == p;
        MaParameterization ma_par(spec.ma_lags(), opts.enforce_invertibility);

        std::vector<const std::vector<double>*> exo_cols;
        std::vector<int> exo_ids;
        if (spec.intercept())
            exo_ids.push_back(ctx.column_id(Term{TermKind::Intercept, 0, 0}));
        for (const auto& x : spec.exo_terms())
            exo_ids.push_back(ctx.column_id(Term{TermKind::Exo, x.lag, x.predictor}));
        for (int id : exo_ids) exo_cols.push_back(&ctx.column(id));

        std::vector<const std::vector<double>*> ar_cols;
        for (int j : ar_lags) ar_cols.push_back(&ctx.column(ctx.column_id(Term{TermKind::AR, j, 0})));

        std::vector<double> w(n), phi(p), theta;
        auto unpack = [&](const std::vector<double>& u) -> bool {
            if (ar_dense) {
                std::vector<double> r(p);
                for (int i = 0; i < p; ++i) r[i] = kPartialCap * std::tanh(u[i]);
                phi = poly::pacf_to_ar(r);
            } else {
                for (int i = 0; i < p; ++i) phi[i] = u[i];
                std::vector<double> dense_phi(p ? ar_lags.back() : 0, 0.0);
                for (int i = 0; i < p; ++i) dense_phi[ar_lags[i] - 1] = phi[i];
                if (!poly::ar_stationary(dense_phi, kRootMargin)) return false;
            }
            std::vector<double> mu(u.begin() + p, u.end());
            return ma_par.to_theta(mu, theta);
        };
        auto eval_value = [&](const std::vector<double>& u, double& f) -> bool {
            if (!unpack(u)) return false;
            const auto& y = ctx.y_eff();
            for (int t = 0; t < n; ++t) {
                double v = y[t];
                for (int i = 0; i < p; ++i) v -= phi[i] * (*ar_cols[i])[t];
                w[t] = v;
            }
            const ProfiledEval pe =
                profiled_eval(ctx, exo_cols, w, spec.ma_lags(), theta, ws);
            if (!pe.ok) return false;
            f = pe.loglik;
            return true;
        };
        auto eval = [&](const std::vector<double>& u, double& f,
                        std::vector<double>* grad) -> bool {
            if (!eval_value(u, f)) return false;
            if (grad) {
                // numerical gradient; this path is rare enough for it
                const double h = 1e-6;
                grad->assign(u.size(), 0.0);
                std::vector<double> up = u;
                for (std::size_t j = 0; j < u.size(); ++j) {
                    up[j] = u[j] + h;
                    double fp;
                    if (!eval_value(up, fp)) fp = f;
                    up[j] = u[j] - h;
                    double fm;
                    if (!eval_value(up, fm)) fm = f;
                    up[j] = u[j];
                    (*grad)[j] = (fp - fm) / (2.0 * h);
                }
            }
            return true;
        };

        std::vector<double> u0(p + q, 0.0);
        BfgsResult r = bfgs_maximize(eval, u0, opts.max_iterations,
                                     opts.gradient_tolerance);
        if (!std::isfinite(r.f) || !unpack(r.x)) {
            out.converged = false;
            out.loglik = kNegInf;
            return out;
        }
        const auto& y = ctx.y_eff();
        for (int t = 0; t < n; ++t) {
            double v = y[t];
            for (int i = 0; i < p; ++i) v -= phi[i] * (*ar_cols[i])[t];
            w[t] = v;
        }
        const ProfiledEval pe =
            profiled_eval(ctx, exo_cols, w, spec.ma_lags(), theta, ws);
        if (!pe.ok) {
            out.converged = false;
            out.loglik = kNegInf;
            return out;
        }
        // Assemble: beta holds [intercept][exo]; AR comes from the outer block.
        out.params.ar.assign(p, 0.0);
        for (int i = 0; i < p; ++i) out.params.ar[i] = phi[i];
        out.params.ma = theta;
        out.params.exo.assign(spec.exo_terms().size(), 0.0);
        int j = 0;
        if (spec.intercept()) out.params.intercept = ws.beta[j++];
        for (std::size_t i = 0; i < spec.exo_terms().size(); ++i)
            out.params.exo[i] = ws.beta[j++];
        const double s2 = pe.ssr / n;
        out.params.sigma = std::sqrt(s2);
        out.loglik = -0.5 * n * (std::log(2.0 * M_PI * s2) + 1.0);
        out.iterations = r.iterations;
        out.converged = r.converged;
        if (s2 < 1e-12 * std::max(ctx.y_variance(), 1e-300)) out.converged = false;

        if (out.converged && opts.enforce_stationarity && p > 0) {
            std::vector<double> dense_phi(ar_lags.back(), 0.0);
            for (int i = 0; i < p; ++i) dense_phi[ar_lags[i] - 1] = phi[i];
            if (!poly::ar_stationary(dense_phi, 1e-8)) out.converged = false;
        }
        return out;
    }
}

}  // namespace detail

/**
 * Maximum-likelihood fit of a spec by conditional Gaussian likelihood with a
 * profiled innovation variance. MA-free specs reduce to ordinary least
 * squares on the lagged regressors; otherwise a quasi-Newton search runs over
 * the MA coefficients with everything else concentrated out. Never throws on
 * optimizer trouble: non-convergence is reported through the returned flag.
 */
inline FittedModel fit_mle(const ModelSpec& spec, const TimeSeriesDataset& data,
                           const FitOptions& opts, int conditioning_length) {
    if (conditioning_length < spec.max_lag())
        throw std::invalid_argument("fit_mle: conditioning length below max lag");
    if (static_cast<int>(data.length()) - conditioning_length < spec.dimension() + 2)
        throw std::invalid_argument("fit_mle: insufficient effective sample");
    detail::FitContext ctx(data, spec, conditioning_length);
    detail::FitWorkspace ws;
    return detail::fit_with_context(ctx, spec, opts, ws);
}

/**
 * One-step-ahead point forecast from the end of `history`, with in-sample
 * innovations reconstructed by forward recursion (zero-seeded). Exogenous
 * values for the forecast period come from `next_exogenous`.
 */
inline double one_step_forecast(const FittedModel& model,
                                const TimeSeriesDataset& history,
                                const std::vector<double>& next_exogenous) {
    const ModelSpec& spec = model.spec;
    const auto& p = model.params;
    const int H = static_cast<int>(history.length());
    const int burn = spec.max_lag();
    if (H < std::max(burn, 1))
        throw std::invalid_argument("one_step_forecast: history shorter than max lag");
    for (const auto& x : spec.exo_terms())
        if (x.lag == 0 &&
            x.predictor >= static_cast<int>(next_exogenous.size()))
            throw std::invalid_argument("one_step_forecast: missing next exogenous value");

    std::vector<double> eps(H, 0.0);
    const auto& y = history.y();
    for (int t = burn; t < H; ++t) {
        double pred = spec.intercept() ? p.intercept : 0.0;
        for (std::size_t i = 0; i < spec.ar_lags().size(); ++i)
            pred += p.ar[i] * y[t - spec.ar_lags()[i]];
        for (std::size_t i = 0; i < spec.exo_terms().size(); ++i) {
            const auto& x = spec.exo_terms()[i];
            pred += p.exo[i] * history.x(t - x.lag, x.predictor);
        }
        for (std::size_t i = 0; i < spec.ma_lags().size(); ++i) {
            const int lag = t - spec.ma_lags()[i];
            if (lag >= 0) pred += p.ma[i] * eps[lag];
        }
        eps[t] = y[t] - pred;
    }

    double fc = spec.intercept() ? p.intercept : 0.0;
    for (std::size_t i = 0; i < spec.ar_lags().size(); ++i)
        fc += p.ar[i] * y[H - spec.ar_lags()[i]];
    for (std::size_t i = 0; i < spec.exo_terms().size(); ++i) {
        const auto& x = spec.exo_terms()[i];
        fc += p.exo[i] * (x.lag == 0 ? next_exogenous[x.predictor]
                                     : history.x(H - x.lag, x.predictor));
    }
    for (std::size_t i = 0; i < spec.ma_lags().size(); ++i) {
        const int lag = H - spec.ma_lags()[i];
        if (lag >= 0) fc += p.ma[i] * eps[lag];
    }
    return fc;
}

}  // namespace mscs
