#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mscs/likelihood.hpp"
#include "mscs/model_space.hpp"
#include "mscs/model_spec.hpp"
#include "mscs/parallel.hpp"
#include "mscs/special_functions.hpp"

namespace mscs {

/// Screening outcome for one candidate.
struct ScreenedModel {
    ModelSpec spec;
    int d_m = 0;
    double loglik = 0.0;
    double lr_statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    bool member = false;
};

struct FitFailure {
    ModelSpec spec;
    std::string reason;
};

/**
 * The set of candidates not rejected against the full model, together with
 * the rejected candidates' statistics (needed for p-value tables) and any
 * candidates whose fit failed. members + rejected + failures partition the
 * universe; the full model is always a member.
 */
struct ConfidenceSet {
    double alpha = 0.0;
    FittedModel full_model;
    ModelUniverse universe;
    std::vector<ScreenedModel> rows;  // canonical order, members and rejected
    std::vector<FitFailure> failures;

    std::vector<ScreenedModel> members() const {
        std::vector<ScreenedModel> out;
        for (const auto& r : rows)
            if (r.member) out.push_back(r);
        return out;
    }
    std::size_t member_count() const {
        std::size_t n = 0;
        for (const auto& r : rows) n += r.member ? 1 : 0;
        return n;
    }
    bool contains(const ModelSpec& spec) const {
        for (const auto& r : rows)
            if (r.member && r.spec == spec) return true;
        return false;
    }
};

/// The most parsimonious members: those with no proper nested sub-model
/// among the members. union_model is their term-wise union.
struct LowerBoundary {
    std::vector<ModelSpec> models;
    ModelSpec union_model;
    double source_alpha = 0.0;
};

/**
 * Likelihood-ratio statistic of a candidate against the full model:
 * lambda = 2 (loglik_full - loglik_candidate), df = d_f - d_m. Tiny negative
 * lambdas (within 1e-6) are clamped to zero; anything more negative means the
 * full-model optimum was missed and is reported as an error.
 */
inline std::pair<double, int> lr_statistic(const FittedModel& candidate,
                                           const FittedModel& full) {
    if (!is_nested(candidate.spec, full.spec))
        throw std::invalid_argument("lr_statistic: candidate not nested in full model");
    if (candidate.conditioning_length != full.conditioning_length)
        throw std::invalid_argument("lr_statistic: conditioning lengths differ");
    if (!candidate.converged || !full.converged)
        throw std::invalid_argument("lr_statistic: fits did not converge");
    double lambda = 2.0 * (full.loglik - candidate.loglik);
    if (lambda < -1e-6)
        throw std::runtime_error(
            "lr_statistic: nested fit beat the full fit (lambda = " +
            std::to_string(lambda) + "), full-model optimum is suspect");
    if (lambda < 0.0) lambda = 0.0;
    return {lambda, full.spec.dimension() - candidate.spec.dimension()};
}

namespace detail {

inline double p_value_from(double lambda, int df) {
    if (df == 0) return 1.0;
    return chi2_sf(lambda, df);
}

}  // namespace detail

/**
 * Screening result before any confidence level is applied: the full-model
 * fit plus per-candidate likelihood statistics. Building sets at several
 * levels from one screen avoids refitting the universe.
 */
struct ScreenResult {
    FittedModel full_model;
    ModelUniverse universe;
    std::vector<ScreenedModel> rows;  // member flag not yet assigned
    std::vector<FitFailure> failures;
};

inline ScreenResult screen_universe(const TimeSeriesDataset& data,
                                    const ModelUniverse& universe,
                                    const FitOptions& opts, unsigned n_threads = 0,
                                    int conditioning_length = -1) {
    universe.validate();
    const ModelSpec full_spec = universe.full_model();
    const int cond =
        conditioning_length >= 0 ? conditioning_length : full_spec.max_lag();
    if (cond < full_spec.max_lag())
        throw std::invalid_argument(
            "screen_universe: conditioning length below the full model's max lag");

    const std::vector<ModelSpec> specs = enumerate_universe(universe);
    detail::FitContext ctx(data, full_spec, cond);

    detail::FitWorkspace full_ws;
    FittedModel full = detail::fit_with_context(ctx, full_spec, opts, full_ws);
    if (!full.converged)
        throw std::runtime_error("screen_universe: full-model fit failed to converge");

    struct Slot {
        FittedModel fit;
        bool failed = false;
        std::string reason;
    };
    std::vector<Slot> slots(specs.size());

    auto fit_one = [&](std::size_t i) {
        thread_local detail::FitWorkspace ws;
        if (specs[i] == full_spec) {
            slots[i].fit = full;
            return;
        }
        const std::vector<double>* warm = nullptr;
        std::vector<double> warm_theta;
        if (!specs[i].ma_lags().empty()) {
            // Restriction of the full model's MA estimate: a second start that
            // guards against local optima in the candidate's own search.
            warm_theta.reserve(specs[i].ma_lags().size());
            for (int k : specs[i].ma_lags()) {
                const auto& fl = full.spec.ma_lags();
                const auto it = std::find(fl.begin(), fl.end(), k);
                warm_theta.push_back(it == fl.end()
                                         ? 0.0
                                         : full.params.ma[it - fl.begin()]);
            }
            warm = &warm_theta;
        }
        slots[i].fit = detail::fit_with_context(ctx, specs[i], opts, ws, warm);
        if (!slots[i].fit.converged) {
            slots[i].failed = true;
            slots[i].reason = "optimizer did not converge";
        }
    };
    parallel_for(specs.size(), fit_one, n_threads);

    // The full model must dominate every converged candidate. If a candidate
    // beats it, its optimum is a feasible point of the full problem, so refit
    // the full model warm-started there and rescreen.
    for (int attempt = 0; attempt < 3; ++attempt) {
        double best = full.loglik;
        std::size_t best_idx = specs.size();
        for (std::size_t i = 0; i < specs.size(); ++i) {
            if (!slots[i].failed && slots[i].fit.loglik > best + 5e-7) {
                best = slots[i].fit.loglik;
                best_idx = i;
            }
        }
        if (best_idx == specs.size()) break;
        std::vector<double> warm_theta(full_spec.ma_lags().size(), 0.0);
        const auto& cand = slots[best_idx].fit;
        for (std::size_t k = 0; k < cand.spec.ma_lags().size(); ++k) {
            const auto& fl = full_spec.ma_lags();
            const auto it = std::find(fl.begin(), fl.end(), cand.spec.ma_lags()[k]);
            if (it != fl.end()) warm_theta[it - fl.begin()] = cand.params.ma[k];
        }
        FittedModel refit =
            detail::fit_with_context(ctx, full_spec, opts, full_ws, &warm_theta);
        if (refit.converged && refit.loglik > full.loglik) full = refit;
        for (auto& s : slots)
            if (!s.failed && s.fit.spec == full_spec) s.fit = full;
        if (!(full.loglik + 5e-7 >= best)) continue;
        break;
    }

    ScreenResult out;
    out.full_model = full;
    out.universe = universe;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (slots[i].failed) {
            out.failures.push_back({specs[i], slots[i].reason});
            continue;
        }
        ScreenedModel row;
        row.spec = specs[i];
        row.d_m = specs[i].dimension();
        row.loglik = slots[i].fit.loglik;
        if (specs[i] == full_spec) {
            row.lr_statistic = 0.0;
            row.df = 0;
            row.p_value = 1.0;
        } else {
            auto [lambda, df] = lr_statistic(slots[i].fit, full);
            row.lr_statistic = lambda;
            row.df = df;
            row.p_value = detail::p_value_from(lambda, df);
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

/// Apply one confidence level to a screen. Rejection uses the strict
/// inequality lambda < quantile; a tie rejects. The full model (df = 0) is
/// admitted unconditionally.
inline ConfidenceSet assemble_confidence_set(const ScreenResult& screen,
                                             double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("assemble_confidence_set: alpha must be in (0,1)");
    ConfidenceSet cs;
    cs.alpha = alpha;
    cs.full_model = screen.full_model;
    cs.universe = screen.universe;
    cs.failures = screen.failures;
    cs.rows = screen.rows;

    const int d_f = screen.full_model.spec.dimension();
    std::vector<double> quantile(d_f + 1, 0.0);
    for (int df = 1; df <= d_f; ++df) quantile[df] = chi2_quantile(1.0 - alpha, df);

    for (auto& row : cs.rows)
        row.member = row.df == 0 || row.lr_statistic < quantile[row.df];
    return cs;
}

/// Fit everything, screen against the full model, keep the survivors.
inline ConfidenceSet build_confidence_set(const TimeSeriesDataset& data,
                                          const ModelUniverse& universe,
                                          double alpha, const FitOptions& opts,
                                          unsigned n_threads = 0,
                                          int conditioning_length = -1) {
    return assemble_confidence_set(
        screen_universe(data, universe, opts, n_threads, conditioning_length), alpha);
}

/// Members with no proper nested sub-model among the members (pairwise scan).
inline LowerBoundary lower_boundary(const ConfidenceSet& cs) {
    std::vector<const ScreenedModel*> members;
    for (const auto& r : cs.rows)
        if (r.member) members.push_back(&r);
    if (members.empty())
        throw std::invalid_argument("lower_boundary: confidence set has no members");

    LowerBoundary out;
    out.source_alpha = cs.alpha;
    for (std::size_t i = 0; i < members.size(); ++i) {
        bool minimal = true;
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (i != j && is_proper_nested(members[j]->spec, members[i]->spec)) {
                minimal = false;
                break;
            }
        }
        if (minimal) out.models.push_back(members[i]->spec);
    }
    out.union_model = union_spec(out.models);
    return out;
}

/// Fraction of boundary models containing each full-model term.
inline std::map<Term, double> inclusion_importance(const LowerBoundary& boundary,
                                                   const ModelUniverse& universe) {
    if (boundary.models.empty())
        throw std::invalid_argument("inclusion_importance: empty boundary");
    std::map<Term, double> out;
    const double denom = static_cast<double>(boundary.models.size());
    for (const Term& t : universe.full_model().terms()) {
        int k = 0;
        for (const auto& m : boundary.models) k += m.contains(t) ? 1 : 0;
        out[t] = k / denom;
    }
    return out;
}

/// Set-level importance normalized against the 0.5 base rate with which
/// irrelevant terms ride along in retained models: max{0, (f - 0.5) / 0.5}.
inline std::map<Term, double> normalized_set_importance(const ConfidenceSet& cs) {
    std::size_t n_members = cs.member_count();
    if (n_members == 0)
        throw std::invalid_argument("normalized_set_importance: no members");
    std::map<Term, double> out;
    for (const Term& t : cs.universe.full_model().terms()) {
        int k = 0;
        for (const auto& r : cs.rows)
            if (r.member && r.spec.contains(t)) ++k;
        const double f = static_cast<double>(k) / static_cast<double>(n_members);
        out[t] = std::max(0.0, (f - 0.5) / 0.5);
    }
    return out;
}

/// Raw set-level inclusion frequency (before normalization).
inline std::map<Term, double> set_inclusion_frequency(const ConfidenceSet& cs) {
    std::size_t n_members = cs.member_count();
    if (n_members == 0)
        throw std::invalid_argument("set_inclusion_frequency: no members");
    std::map<Term, double> out;
    for (const Term& t : cs.universe.full_model().terms()) {
        int k = 0;
        for (const auto& r : cs.rows)
            if (r.member && r.spec.contains(t)) ++k;
        out[t] = static_cast<double>(k) / static_cast<double>(n_members);
    }
    return out;
}

}  // namespace mscs
