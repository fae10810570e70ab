#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mscs/arma_poly.hpp"
#include "mscs/confidence_set.hpp"
#include "mscs/dataset.hpp"
#include "mscs/model_space.hpp"
#include "mscs/parallel.hpp"
#include "mscs/rng.hpp"

namespace mscs {

/**
 * A true data-generating process for the simulation studies: dense AR/MA
 * coefficient vectors (index i = lag i+1), one contemporaneous coefficient
 * per predictor column, innovation scale, and the equicorrelation of the
 * predictor design.
 */
struct DgpConfig {
    char label = 'A';
    std::vector<double> ar_coeffs;
    std::vector<double> ma_coeffs;
    std::vector<double> exo_coeffs;
    double sigma = 0.8;
    int n_predictors = 0;  // count of nonzero exogenous coefficients ("x")
    double rho = 0.0;
    int burn_in = 500;

    int n_columns() const { return static_cast<int>(exo_coeffs.size()); }

    void validate() const {
        if (!(sigma > 0.0)) throw std::invalid_argument("DgpConfig: sigma must be positive");
        if (burn_in < 200) throw std::invalid_argument("DgpConfig: burn_in must be >= 200");
        if (!poly::ar_stationary(ar_coeffs))
            throw std::invalid_argument("DgpConfig: AR polynomial is not stationary");
        if (!poly::ma_invertible(ma_coeffs))
            throw std::invalid_argument("DgpConfig: MA polynomial is not invertible");
        int nz = 0;
        for (double c : exo_coeffs) nz += c != 0.0 ? 1 : 0;
        if (n_predictors != 0 && n_predictors != nz)
            throw std::invalid_argument(
                "DgpConfig: n_predictors does not match the nonzero coefficient count");
    }

    /// The model structure actually generating the data: the nonzero terms.
    ModelSpec true_spec() const {
        std::vector<int> ar, ma;
        std::vector<ExoTerm> exo;
        for (std::size_t j = 0; j < ar_coeffs.size(); ++j)
            if (ar_coeffs[j] != 0.0) ar.push_back(static_cast<int>(j) + 1);
        for (std::size_t k = 0; k < ma_coeffs.size(); ++k)
            if (ma_coeffs[k] != 0.0) ma.push_back(static_cast<int>(k) + 1);
        for (std::size_t i = 0; i < exo_coeffs.size(); ++i)
            if (exo_coeffs[i] != 0.0) exo.push_back({static_cast<int>(i), 0});
        return ModelSpec(std::move(ar), std::move(ma), std::move(exo), false);
    }
};

/// The six benchmark processes (labels A-F), all with sigma = 0.8 and six
/// predictor columns of which 2 or 5 carry nonzero coefficients.
inline DgpConfig benchmark_dgp(char label, double rho = 0.0, int burn_in = 500) {
    DgpConfig d;
    d.label = label;
    d.rho = rho;
    d.burn_in = burn_in;
    d.sigma = 0.8;
    const std::vector<double> exo2{-2.0, 0.0, 2.0, 0.0, 0.0, 0.0};
    const std::vector<double> exo5{-2.0, 0.0, 2.0, 1.0, 1.5, -1.5};
    switch (label) {
        case 'A': d.ar_coeffs = {0.8}; d.ma_coeffs = {}; d.exo_coeffs = exo2; d.n_predictors = 2; break;
        case 'B': d.ar_coeffs = {0.8}; d.ma_coeffs = {}; d.exo_coeffs = exo5; d.n_predictors = 5; break;
        case 'C': d.ar_coeffs = {0.7}; d.ma_coeffs = {0.5}; d.exo_coeffs = exo2; d.n_predictors = 2; break;
        case 'D': d.ar_coeffs = {0.7}; d.ma_coeffs = {0.5}; d.exo_coeffs = exo5; d.n_predictors = 5; break;
        case 'E': d.ar_coeffs = {0.6, -0.2}; d.ma_coeffs = {0.5}; d.exo_coeffs = exo2; d.n_predictors = 2; break;
        case 'F': d.ar_coeffs = {0.6, -0.2}; d.ma_coeffs = {0.5}; d.exo_coeffs = exo5; d.n_predictors = 5; break;
        default:
            throw std::invalid_argument("benchmark_dgp: label must be one of A-F");
    }
    return d;
}

/**
 * Simulate t_obs observations: predictors are i.i.d. rows from the
 * equicorrelated normal design, innovations Gaussian with sd sigma, and the
 * recursion starts from zero initial conditions with burn_in observations
 * discarded. Deterministic given (dgp, t_obs, seed).
 */
inline TimeSeriesDataset simulate_armax(const DgpConfig& dgp, int t_obs,
                                        std::uint64_t seed) {
    dgp.validate();
    if (t_obs <= 0) throw std::invalid_argument("simulate_armax: t_obs must be positive");
    const int s = dgp.n_columns();
    const int N = t_obs + dgp.burn_in;

    RngStream rng(seed, 0x51B0);
    std::vector<double> X;  // row-major N x s, drawn before the innovations
    if (s > 0)
        X = sample_correlated_normal(rng, N, s, dgp.rho);
    std::vector<double> eps(N);
    for (int t = 0; t < N; ++t) eps[t] = dgp.sigma * rng.normal();

    const int p = static_cast<int>(dgp.ar_coeffs.size());
    const int q = static_cast<int>(dgp.ma_coeffs.size());
    std::vector<double> y(N, 0.0);
    for (int t = 0; t < N; ++t) {
        double v = eps[t];
        for (int j = 1; j <= p; ++j)
            if (t - j >= 0) v += dgp.ar_coeffs[j - 1] * y[t - j];
        for (int k = 1; k <= q; ++k)
            if (t - k >= 0) v += dgp.ma_coeffs[k - 1] * eps[t - k];
        for (int i = 0; i < s; ++i)
            v += dgp.exo_coeffs[i] * X[static_cast<std::size_t>(t) * s + i];
        y[t] = v;
    }

    std::vector<double> y_keep(y.begin() + dgp.burn_in, y.end());
    std::vector<std::vector<double>> cols(s);
    std::vector<std::string> names(s);
    for (int i = 0; i < s; ++i) {
        cols[i].resize(t_obs);
        for (int t = 0; t < t_obs; ++t)
            cols[i][t] = X[static_cast<std::size_t>(t + dgp.burn_in) * s + i];
        names[i] = "x" + std::to_string(i + 1);
    }
    return TimeSeriesDataset(std::move(y_keep), std::move(cols), std::move(names), {});
}

/// Aggregated cell of the simulation grid.
struct McCellResult {
    char dgp_label = 'A';
    int t_obs = 0;
    double alpha = 0.0;
    double rho = 0.0;
    int x = 0;  // nonzero exogenous coefficients in the truth

    double mean_mscs_size = 0.0;
    double se_mscs_size = 0.0;
    double mean_lbm_size = 0.0;  // boundary set cardinality
    double se_lbm_size = 0.0;
    double mean_lbm_dimension = 0.0;  // secondary reading: average model dimension
    double coverage = 0.0;            // P(true spec in the set)
    double mean_hamming_to_union = 0.0;
    double union_coverage = 0.0;  // P(true spec nested in the LBM union)
    int n_replications = 0;       // completed replications
    int n_fit_failures = 0;       // replications aborted by a full-model failure
    int n_candidate_failures = 0; // candidate fits excluded across replications
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL + (salt << 1));
    return splitmix64(s);
}

struct RepMetrics {
    bool completed = false;
    std::vector<double> size, lbm, lbm_dim, cover, dist, ucover;  // per alpha
    int candidate_failures = 0;
};

inline void mean_se(const std::vector<double>& v, double& mean, double& se) {
    const std::size_t n = v.size();
    mean = 0.0;
    se = 0.0;
    if (n == 0) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    if (n < 2) return;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

}  // namespace detail

/**
 * One grid cell evaluated at several confidence levels in a single sweep:
 * each replication simulates, screens the whole universe once and assembles
 * a set per level. Replications own independent random streams, so results
 * do not depend on worker count.
 */
inline std::vector<McCellResult> run_cell_multi(
    const DgpConfig& dgp, int t_obs, const std::vector<double>& alphas, int n_reps,
    const ModelUniverse& universe, std::uint64_t seed,
    const FitOptions& opts = FitOptions{}, unsigned n_threads = 0) {
    dgp.validate();
    universe.validate();
    if (n_reps <= 0) throw std::invalid_argument("run_cell: n_reps must be positive");
    if (alphas.empty()) throw std::invalid_argument("run_cell: no confidence levels");
    for (double a : alphas)
        if (!(a > 0.0 && a < 1.0))
            throw std::invalid_argument("run_cell: alpha must be in (0,1)");

    const ModelSpec truth = dgp.true_spec();
    const std::size_t n_alpha = alphas.size();
    std::vector<detail::RepMetrics> reps(n_reps);

    parallel_for(
        static_cast<std::size_t>(n_reps),
        [&](std::size_t r) {
            auto& m = reps[r];
            m.size.assign(n_alpha, 0.0);
            m.lbm.assign(n_alpha, 0.0);
            m.lbm_dim.assign(n_alpha, 0.0);
            m.cover.assign(n_alpha, 0.0);
            m.dist.assign(n_alpha, 0.0);
            m.ucover.assign(n_alpha, 0.0);
            const TimeSeriesDataset data =
                simulate_armax(dgp, t_obs, detail::mix_seed(seed, r));
            ScreenResult screen;
            try {
                screen = screen_universe(data, universe, opts, 1);
            } catch (const std::exception&) {
                return;  // full-model failure aborts this replication
            }
            m.candidate_failures = static_cast<int>(screen.failures.size());
            for (std::size_t a = 0; a < n_alpha; ++a) {
                const ConfidenceSet cs = assemble_confidence_set(screen, alphas[a]);
                const LowerBoundary lb = lower_boundary(cs);
                m.size[a] = static_cast<double>(cs.member_count());
                m.lbm[a] = static_cast<double>(lb.models.size());
                double dim = 0.0;
                for (const auto& b : lb.models) dim += b.dimension();
                m.lbm_dim[a] = dim / static_cast<double>(lb.models.size());
                m.cover[a] = cs.contains(truth) ? 1.0 : 0.0;
                m.dist[a] = static_cast<double>(hamming_distance(truth, lb.union_model));
                m.ucover[a] = is_nested(truth, lb.union_model) ? 1.0 : 0.0;
            }
            m.completed = true;
        },
        n_threads);

    std::vector<McCellResult> out(n_alpha);
    for (std::size_t a = 0; a < n_alpha; ++a) {
        McCellResult& cell = out[a];
        cell.dgp_label = dgp.label;
        cell.t_obs = t_obs;
        cell.alpha = alphas[a];
        cell.rho = dgp.rho;
        cell.x = dgp.n_predictors;
        std::vector<double> size, lbm, lbm_dim, cover, dist, ucover;
        for (const auto& m : reps) {
            if (!m.completed) continue;
            size.push_back(m.size[a]);
            lbm.push_back(m.lbm[a]);
            lbm_dim.push_back(m.lbm_dim[a]);
            cover.push_back(m.cover[a]);
            dist.push_back(m.dist[a]);
            ucover.push_back(m.ucover[a]);
        }
        cell.n_replications = static_cast<int>(size.size());
        cell.n_fit_failures = n_reps - cell.n_replications;
        for (const auto& m : reps) cell.n_candidate_failures += m.candidate_failures;
        detail::mean_se(size, cell.mean_mscs_size, cell.se_mscs_size);
        detail::mean_se(lbm, cell.mean_lbm_size, cell.se_lbm_size);
        double dummy;
        detail::mean_se(lbm_dim, cell.mean_lbm_dimension, dummy);
        detail::mean_se(cover, cell.coverage, dummy);
        detail::mean_se(dist, cell.mean_hamming_to_union, dummy);
        detail::mean_se(ucover, cell.union_coverage, dummy);
    }
    return out;
}

inline McCellResult run_cell(const DgpConfig& dgp, int t_obs, double alpha,
                             int n_reps, const ModelUniverse& universe,
                             std::uint64_t seed,
                             const FitOptions& opts = FitOptions{},
                             unsigned n_threads = 0) {
    return run_cell_multi(dgp, t_obs, {alpha}, n_reps, universe, seed, opts,
                          n_threads)[0];
}

}  // namespace mscs
