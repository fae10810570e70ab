#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mscs/dataset.hpp"
#include "mscs/likelihood.hpp"
#include "mscs/model_space.hpp"
#include "mscs/rng.hpp"
#include "support/test_util.hpp"

using namespace mscs;

namespace {

TimeSeriesDataset make_armax_series(int T, double beta, double theta,
                                    std::vector<double> eta, double sigma,
                                    std::uint64_t seed, double rho = 0.0) {
    const int s = static_cast<int>(eta.size());
    const int burn = 300;
    RngStream rng(seed, 0);
    std::vector<double> X;
    if (s > 0) X = sample_correlated_normal(rng, T + burn, s, rho);
    std::vector<double> eps(T + burn), y(T + burn, 0.0);
    for (int t = 0; t < T + burn; ++t) eps[t] = sigma * rng.normal();
    for (int t = 0; t < T + burn; ++t) {
        double v = eps[t];
        if (t >= 1) v += beta * y[t - 1] + theta * eps[t - 1];
        for (int i = 0; i < s; ++i)
            v += eta[i] * X[static_cast<std::size_t>(t) * s + i];
        y[t] = v;
    }
    std::vector<double> yk(y.begin() + burn, y.end());
    std::vector<std::vector<double>> cols(s);
    std::vector<std::string> names(s);
    for (int i = 0; i < s; ++i) {
        cols[i].resize(T);
        for (int t = 0; t < T; ++t)
            cols[i][t] = X[static_cast<std::size_t>(t + burn) * s + i];
        names[i] = "x" + std::to_string(i);
    }
    return TimeSeriesDataset(std::move(yk), std::move(cols), std::move(names), {});
}

// Independent small solver for the normal-equations oracle.
std::vector<double> solve_dense(std::vector<std::vector<double>> A,
                                std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::fabs(A[i][k]) > std::fabs(A[piv][k])) piv = i;
        std::swap(A[k], A[piv]);
        std::swap(b[k], b[piv]);
        for (int i = k + 1; i < n; ++i) {
            const double f = A[i][k] / A[k][k];
            for (int j = k; j < n; ++j) A[i][j] -= f * A[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<double> x(n);
    for (int i = n - 1; i >= 0; --i) {
        double v = b[i];
        for (int j = i + 1; j < n; ++j) v -= A[i][j] * x[j];
        x[i] = v / A[i][i];
    }
    return x;
}

}  // namespace

TEST_CASE("white-noise likelihood matches the closed form") {
    RngStream rng(2024, 0);
    const int T = 120;
    std::vector<double> y(T);
    for (auto& v : y) v = rng.normal(0.0, 1.7);
    TimeSeriesDataset data(y, {}, {}, {});

    const int cond = 3;
    const int n = T - cond;
    double ss = 0.0;
    for (int t = cond; t < T; ++t) ss += y[t] * y[t];
    const double sigma = std::sqrt(ss / n);

    ParamVector p;
    p.sigma = sigma;
    const double ll = log_likelihood(ModelSpec(), p, data, cond);
    const double expected = -0.5 * n * std::log(2.0 * M_PI * sigma * sigma) - 0.5 * n;
    CHECK(ll == Catch::Approx(expected).margin(1e-10));
}

TEST_CASE("pure AR(1) likelihood equals the direct-regression value") {
    const auto data = make_armax_series(200, 0.6, 0.0, {}, 1.0, 88);
    const ModelSpec spec({1}, {}, {});
    ParamVector p;
    p.ar = {0.55};
    p.sigma = 1.1;

    const int cond = 1;
    double oracle = 0.0;
    const auto& y = data.y();
    for (std::size_t t = cond; t < y.size(); ++t) {
        const double e = y[t] - 0.55 * y[t - 1];
        oracle += -0.5 * std::log(2.0 * M_PI * p.sigma * p.sigma) -
                  0.5 * e * e / (p.sigma * p.sigma);
    }
    CHECK(log_likelihood(spec, p, data, cond) == Catch::Approx(oracle).margin(1e-9));
}

TEST_CASE("ARMA(1,1) likelihood matches a hand-rolled innovation loop") {
    std::vector<double> y = {0.3,  -1.2, 0.7,  0.1,  -0.4, 1.9,  -0.2, 0.5,
                             -1.1, 0.8,  0.0,  -0.6, 1.2,  -0.9, 0.4,  0.2,
                             -0.3, 1.0,  -1.4, 0.6};
    TimeSeriesDataset data(y, {}, {}, {});
    const ModelSpec spec({1}, {1}, {});
    ParamVector p;
    p.ar = {0.5};
    p.ma = {0.3};
    p.sigma = 0.9;

    const int cond = 1;
    std::vector<double> eps(y.size(), 0.0);
    double oracle = 0.0;
    for (std::size_t t = cond; t < y.size(); ++t) {
        const double prev_eps = t - 1 >= static_cast<std::size_t>(cond) ? eps[t - 1] : 0.0;
        eps[t] = y[t] - 0.5 * y[t - 1] - 0.3 * prev_eps;
        oracle += -0.5 * std::log(2.0 * M_PI * 0.81) - 0.5 * eps[t] * eps[t] / 0.81;
    }
    CHECK(log_likelihood(spec, p, data, cond) == Catch::Approx(oracle).margin(1e-10));
}

TEST_CASE("analytic gradient agrees with central differences") {
    const auto data = make_armax_series(150, 0.5, 0.4, {1.0, -0.5}, 0.9, 314);
    RngStream rng(99, 3);
    for (int rep = 0; rep < 20; ++rep) {
        const ModelSpec spec({1, 2}, {1}, {{0, 0}, {1, 0}}, true);
        ParamVector p;
        p.intercept = rng.uniform(-0.5, 0.5);
        p.ar = {rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3)};
        p.ma = {rng.uniform(-0.5, 0.5)};
        p.exo = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        p.sigma = rng.uniform(0.5, 2.0);

        const int cond = 2;
        const auto grad = log_likelihood_gradient(spec, p, data, cond);
        REQUIRE(grad.size() == 7);

        auto eval_at = [&](int idx, double delta) {
            ParamVector q = p;
            if (idx == 0) q.intercept += delta;
            else if (idx <= 2) q.ar[idx - 1] += delta;
            else if (idx == 3) q.ma[0] += delta;
            else if (idx <= 5) q.exo[idx - 4] += delta;
            else q.sigma += delta;
            return log_likelihood(spec, q, data, cond);
        };
        for (int idx = 0; idx < 7; ++idx) {
            const double h = 1e-6;
            const double fd = (eval_at(idx, h) - eval_at(idx, -h)) / (2.0 * h);
            CHECK(grad[idx] == Catch::Approx(fd).epsilon(1e-5).margin(1e-7));
        }
    }
}

TEST_CASE("fit recovers an AR(1) coefficient") {
    const auto data = make_armax_series(10000, 0.8, 0.0, {}, 0.8, 7);
    const auto fit = fit_mle(ModelSpec({1}, {}, {}), data, FitOptions{}, 1);
    REQUIRE(fit.converged);
    CHECK(fit.params.ar[0] == Catch::Approx(0.8).margin(0.02));
}

TEST_CASE("fit is deterministic across calls") {
    const auto data = make_armax_series(300, 0.6, 0.4, {1.0}, 0.8, 55);
    const ModelSpec spec({1}, {1}, {{0, 0}});
    FitOptions opts;
    opts.n_restarts = 2;
    const auto a = fit_mle(spec, data, opts, 1);
    const auto b = fit_mle(spec, data, opts, 1);
    REQUIRE(a.converged);
    CHECK(std::fabs(a.loglik - b.loglik) < 1e-6);
    CHECK(a.params.ma[0] == b.params.ma[0]);
}

TEST_CASE("MA-free fit matches the normal equations") {
    const auto data = make_armax_series(400, 0.5, 0.0, {1.5, -1.0}, 1.0, 10, 0.3);
    const ModelSpec spec({1, 2}, {}, {{0, 0}, {1, 0}}, true);
    const int cond = 2;
    const auto fit = fit_mle(spec, data, FitOptions{}, cond);
    REQUIRE(fit.converged);

    // independent normal-equations solution
    const auto& y = data.y();
    const int T = static_cast<int>(y.size());
    std::vector<std::vector<double>> cols;
    cols.push_back(std::vector<double>(T - cond, 1.0));
    for (int lag : {1, 2}) {
        std::vector<double> c(T - cond);
        for (int t = cond; t < T; ++t) c[t - cond] = y[t - lag];
        cols.push_back(std::move(c));
    }
    for (int i = 0; i < 2; ++i) {
        std::vector<double> c(T - cond);
        for (int t = cond; t < T; ++t) c[t - cond] = data.x(t, i);
        cols.push_back(std::move(c));
    }
    const int d = static_cast<int>(cols.size());
    std::vector<std::vector<double>> G(d, std::vector<double>(d, 0.0));
    std::vector<double> r(d, 0.0);
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b)
            for (int t = 0; t < T - cond; ++t) G[a][b] += cols[a][t] * cols[b][t];
        for (int t = 0; t < T - cond; ++t) r[a] += cols[a][t] * y[t + cond];
    }
    const auto beta = solve_dense(G, r);
    CHECK(fit.params.intercept == Catch::Approx(beta[0]).margin(1e-8));
    CHECK(fit.params.ar[0] == Catch::Approx(beta[1]).margin(1e-8));
    CHECK(fit.params.ar[1] == Catch::Approx(beta[2]).margin(1e-8));
    CHECK(fit.params.exo[0] == Catch::Approx(beta[3]).margin(1e-8));
    CHECK(fit.params.exo[1] == Catch::Approx(beta[4]).margin(1e-8));
}

TEST_CASE("profiled sigma maximizes the likelihood") {
    const auto data = make_armax_series(500, 0.5, 0.3, {1.0}, 0.8, 21);
    const auto fit = fit_mle(ModelSpec({1}, {1}, {{0, 0}}), data, FitOptions{}, 1);
    REQUIRE(fit.converged);
    for (double bump : {1.01, 0.99}) {
        ParamVector p = fit.params;
        p.sigma *= bump;
        CHECK(log_likelihood(fit.spec, p, data, 1) < fit.loglik);
    }
}

TEST_CASE("full model dominates every nested candidate") {
    const auto data = make_armax_series(600, 0.6, 0.4, {1.2}, 0.8, 33);
    ModelUniverse u;
    u.mode = UniverseMode::Subset;
    u.p_max = 1;
    u.q_max = 1;
    u.s = 1;
    const auto specs = enumerate_universe(u);
    REQUIRE(specs.size() == 8);

    const int cond = 1;
    const auto full = fit_mle(u.full_model(), data, FitOptions{}, cond);
    REQUIRE(full.converged);
    for (const auto& spec : specs) {
        const auto fit = fit_mle(spec, data, FitOptions{}, cond);
        if (!fit.converged) continue;
        CHECK(full.loglik >= fit.loglik - 1e-6);
    }
}

TEST_CASE("enforcement keeps polynomial roots outside the unit circle") {
    // explosive data pushes the unconstrained AR estimate past 1
    RngStream rng(64, 0);
    const int T = 200;
    std::vector<double> y(T, 0.0);
    for (int t = 1; t < T; ++t) y[t] = 1.04 * y[t - 1] + rng.normal();
    TimeSeriesDataset data(y, {}, {}, {});

    FitOptions opts;
    const auto fit = fit_mle(ModelSpec({1}, {}, {}), data, opts, 1);
    if (fit.converged) {
        const double root = testutil::min_root_magnitude({-fit.params.ar[0]});
        CHECK(root > 1.0 + 1e-8);
    }

    FitOptions loose = opts;
    loose.enforce_stationarity = false;
    const auto unfit = fit_mle(ModelSpec({1}, {}, {}), data, loose, 1);
    REQUIRE(unfit.converged);
    CHECK(unfit.params.ar[0] > 1.0);  // sanity: the constraint was binding

    // borderline-noninvertible MA truth
    const int T2 = 400;
    RngStream rng2(65, 0);
    std::vector<double> eps(T2), y2(T2);
    for (int t = 0; t < T2; ++t) eps[t] = rng2.normal();
    for (int t = 0; t < T2; ++t)
        y2[t] = eps[t] + 1.6 * (t >= 1 ? eps[t - 1] : 0.0);
    TimeSeriesDataset data2(y2, {}, {}, {});
    const auto mfit = fit_mle(ModelSpec({}, {1}, {}), data2, opts, 1);
    if (mfit.converged) {
        const double root = testutil::min_root_magnitude({mfit.params.ma[0]});
        CHECK(root > 1.0 + 1e-8);
    }
}

TEST_CASE("degenerate variance is flagged as non-converged") {
    std::vector<double> y(100);
    y[0] = 1.0;
    for (int t = 1; t < 100; ++t) y[t] = 0.5 * y[t - 1];  // exact AR(1), no noise
    TimeSeriesDataset data(y, {}, {}, {});
    const auto fit = fit_mle(ModelSpec({1}, {}, {}), data, FitOptions{}, 1);
    CHECK_FALSE(fit.converged);
}

TEST_CASE("insufficient sample is a precondition error") {
    std::vector<double> y = {1.0, 2.0, 1.5, 0.5};
    TimeSeriesDataset data(y, {}, {}, {});
    CHECK_THROWS_AS(fit_mle(ModelSpec({1, 2}, {1}, {}), data, FitOptions{}, 2),
                    std::invalid_argument);
}

TEST_CASE("one-step forecast basics") {
    // white noise with intercept: forecast is the intercept
    std::vector<double> y = {1.0, 2.0, 3.0, 2.0, 1.0};
    TimeSeriesDataset data(y, {}, {}, {});
    FittedModel wn;
    wn.spec = ModelSpec({}, {}, {}, true);
    wn.params.intercept = 4.2;
    wn.params.sigma = 1.0;
    CHECK(one_step_forecast(wn, data, {}) == Catch::Approx(4.2));

    // pure AR(1) with coefficient 0.5 and last value 2.0
    std::vector<double> y2 = {0.5, 1.5, 2.0};
    TimeSeriesDataset data2(y2, {}, {}, {});
    FittedModel ar;
    ar.spec = ModelSpec({1}, {}, {});
    ar.params.ar = {0.5};
    ar.params.sigma = 1.0;
    CHECK(one_step_forecast(ar, data2, {}) == Catch::Approx(1.0));

    CHECK_THROWS_AS(one_step_forecast(ar, TimeSeriesDataset({}, {}, {}, {}), {}),
                    std::invalid_argument);
}

TEST_CASE("MA(1) forecast matches a brute-force residual recursion") {
    const auto data = make_armax_series(80, 0.0, 0.5, {}, 1.0, 77);
    FittedModel m;
    m.spec = ModelSpec({}, {1}, {});
    m.params.ma = {0.45};
    m.params.sigma = 1.0;

    const auto& y = data.y();
    const int H = static_cast<int>(y.size());
    std::vector<double> eps(H, 0.0);
    for (int t = 1; t < H; ++t) eps[t] = y[t] - 0.45 * eps[t - 1];
    const double expected = 0.45 * eps[H - 1];
    CHECK(one_step_forecast(m, data, {}) == Catch::Approx(expected).margin(1e-12));
}
