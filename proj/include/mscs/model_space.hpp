#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mscs/model_spec.hpp"

namespace mscs {

enum class UniverseMode { Subset, Contiguous };

/**
 * Description of a candidate model space.
 *
 * Subset mode: every subset of AR lags {1..p_max}, MA lags {1..q_max} and the
 * exogenous term grid is a candidate (lag gaps allowed).
 *
 * Contiguous mode: AR and MA lag sets have no gaps; candidates are
 * {1..p} x {1..q} for each whitelisted (p, q) order pair, crossed with all
 * exogenous subsets.
 *
 * The intercept is a universe-level switch, never itself selected over.
 */
struct ModelUniverse {
    UniverseMode mode = UniverseMode::Subset;
    int p_max = 0;
    int q_max = 0;
    int r_max = 0;                 // largest exogenous lag
    int s = 0;                     // predictor count
    bool include_lag_zero = true;  // exogenous lags start at 0 rather than 1
    bool intercept_everywhere = false;
    std::vector<std::pair<int, int>> order_whitelist;  // contiguous mode only
    std::uint64_t max_cardinality = 1ULL << 20;

    void validate() const {
        if (p_max < 0 || q_max < 0 || r_max < 0 || s < 0)
            throw std::invalid_argument("ModelUniverse: negative bound");
        if (mode == UniverseMode::Contiguous) {
            if (order_whitelist.empty())
                throw std::invalid_argument(
                    "ModelUniverse: contiguous mode needs an order whitelist");
            for (auto [p, q] : order_whitelist)
                if (p < 0 || p > p_max || q < 0 || q > q_max)
                    throw std::invalid_argument(
                        "ModelUniverse: order pair outside (p_max, q_max)");
        }
        if (!include_lag_zero && r_max == 0 && s > 0)
            throw std::invalid_argument(
                "ModelUniverse: no exogenous lags available (r_max 0 without lag zero)");
    }

    std::vector<int> exo_lags() const {
        std::vector<int> lags;
        for (int l = include_lag_zero ? 0 : 1; l <= r_max; ++l) lags.push_back(l);
        return lags;
    }

    /// The exogenous term grid in canonical order.
    std::vector<ExoTerm> exo_grid() const {
        std::vector<ExoTerm> grid;
        for (int i = 0; i < s; ++i)
            for (int l : exo_lags()) grid.push_back({i, l});
        std::sort(grid.begin(), grid.end());
        return grid;
    }

    /// Largest candidate: the benchmark every other candidate is tested against.
    ModelSpec full_model() const {
        int p = p_max, q = q_max;
        if (mode == UniverseMode::Contiguous) {
            p = 0;
            q = 0;
            for (auto [pp, qq] : order_whitelist) {
                p = std::max(p, pp);
                q = std::max(q, qq);
            }
        }
        std::vector<int> ar(p), ma(q);
        for (int j = 0; j < p; ++j) ar[j] = j + 1;
        for (int k = 0; k < q; ++k) ma[k] = k + 1;
        return ModelSpec(std::move(ar), std::move(ma), exo_grid(),
                         intercept_everywhere);
    }
};

/// Closed-form cardinality; always equals the length of the enumeration.
inline std::uint64_t count(const ModelUniverse& u) {
    u.validate();
    const std::uint64_t n_exo =
        static_cast<std::uint64_t>(u.s) * u.exo_lags().size();
    if (u.mode == UniverseMode::Subset) {
        const std::uint64_t bits = u.p_max + u.q_max + n_exo;
        if (bits >= 63) return ~0ULL;  // saturate; callers compare against the cap
        return 1ULL << bits;
    }
    // De-duplicate whitelist pairs before counting.
    std::vector<std::pair<int, int>> pairs = u.order_whitelist;
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    if (n_exo >= 50) return ~0ULL;
    return static_cast<std::uint64_t>(pairs.size()) * (1ULL << n_exo);
}

namespace detail {

/// Subsets of {0..n-1} in lexicographic order of their sorted element vectors:
/// {}, {0}, {0,1}, {0,1,2}, ..., {0,2}, ..., {1}, ...
class LexSubsetIter {
public:
    explicit LexSubsetIter(int n) : n_(n) {}

    const std::vector<int>& current() const { return v_; }

    bool advance() {
        if (!v_.empty() && v_.back() + 1 < n_) {
            v_.push_back(v_.back() + 1);
            return true;
        }
        if (v_.empty()) {
            if (n_ == 0) return false;
            v_.push_back(0);
            return true;
        }
        while (!v_.empty()) {
            int last = v_.back();
            v_.pop_back();
            if (last + 1 < n_) {
                v_.push_back(last + 1);
                return true;
            }
        }
        return false;
    }

private:
    int n_;
    std::vector<int> v_;  // starts at the empty set
};

}  // namespace detail

/**
 * Streams every candidate exactly once in canonical order (lexicographic over
 * the (AR set, MA set, exogenous set) tuple). Refuses universes whose
 * closed-form cardinality exceeds the configured cap.
 */
class UniverseEnumerator {
public:
    explicit UniverseEnumerator(const ModelUniverse& u) : u_(u) {
        u_.validate();
        const std::uint64_t n = count(u_);
        if (n > u_.max_cardinality)
            throw std::invalid_argument(
                "UniverseEnumerator: cardinality " + std::to_string(n) +
                " exceeds the cap of " + std::to_string(u_.max_cardinality));
        exo_grid_ = u_.exo_grid();
        if (u_.mode == UniverseMode::Contiguous) {
            pairs_ = u_.order_whitelist;
            std::sort(pairs_.begin(), pairs_.end());
            pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());
        }
        reset();
    }

    void reset() {
        done_ = false;
        ar_iter_.emplace(u_.mode == UniverseMode::Subset ? u_.p_max : 0);
        ma_iter_.emplace(u_.mode == UniverseMode::Subset ? u_.q_max : 0);
        exo_iter_.emplace(static_cast<int>(exo_grid_.size()));
        pair_idx_ = 0;
        fresh_ = true;
    }

    /// Next candidate, or nullopt once exhausted.
    std::optional<ModelSpec> next() {
        if (done_) return std::nullopt;
        if (u_.mode == UniverseMode::Subset) {
            if (fresh_) {
                fresh_ = false;
                return make_subset_spec();
            }
            if (exo_iter_->advance()) return make_subset_spec();
            exo_iter_.emplace(static_cast<int>(exo_grid_.size()));
            if (ma_iter_->advance()) return make_subset_spec();
            ma_iter_.emplace(u_.q_max);
            if (ar_iter_->advance()) return make_subset_spec();
            done_ = true;
            return std::nullopt;
        }
        // Contiguous: whitelist pairs are already in lexicographic order of
        // their induced ({1..p}, {1..q}) sets because sets are compared by
        // sorted-vector prefix and p sorts first.
        if (fresh_) {
            fresh_ = false;
            if (pairs_.empty()) {
                done_ = true;
                return std::nullopt;
            }
            return make_contiguous_spec();
        }
        if (exo_iter_->advance()) return make_contiguous_spec();
        exo_iter_.emplace(static_cast<int>(exo_grid_.size()));
        if (++pair_idx_ < pairs_.size()) return make_contiguous_spec();
        done_ = true;
        return std::nullopt;
    }

private:
    ModelSpec make_subset_spec() const {
        std::vector<int> ar, ma;
        for (int i : ar_iter_->current()) ar.push_back(i + 1);
        for (int i : ma_iter_->current()) ma.push_back(i + 1);
        return ModelSpec(std::move(ar), std::move(ma), pick_exo(),
                         u_.intercept_everywhere);
    }

    ModelSpec make_contiguous_spec() const {
        auto [p, q] = pairs_[pair_idx_];
        std::vector<int> ar(p), ma(q);
        for (int j = 0; j < p; ++j) ar[j] = j + 1;
        for (int k = 0; k < q; ++k) ma[k] = k + 1;
        return ModelSpec(std::move(ar), std::move(ma), pick_exo(),
                         u_.intercept_everywhere);
    }

    std::vector<ExoTerm> pick_exo() const {
        std::vector<ExoTerm> out;
        for (int i : exo_iter_->current()) out.push_back(exo_grid_[i]);
        return out;
    }

    ModelUniverse u_;
    std::vector<ExoTerm> exo_grid_;
    std::vector<std::pair<int, int>> pairs_;
    std::size_t pair_idx_ = 0;
    std::optional<detail::LexSubsetIter> ar_iter_, ma_iter_, exo_iter_;
    bool fresh_ = true;
    bool done_ = false;
};

/// Materialize the whole universe in canonical order.
inline std::vector<ModelSpec> enumerate_universe(const ModelUniverse& u) {
    UniverseEnumerator it(u);
    std::vector<ModelSpec> out;
    out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count(u), 1 << 22)));
    while (auto spec = it.next()) out.push_back(std::move(*spec));
    return out;
}

/// Monte Carlo reproduction space: contiguous orders up to (3, 2), six
/// contemporaneous predictors, no intercept.
inline ModelUniverse mc_reproduction_universe() {
    ModelUniverse u;
    u.mode = UniverseMode::Contiguous;
    u.p_max = 3;
    u.q_max = 2;
    u.r_max = 0;
    u.s = 6;
    u.include_lag_zero = true;
    u.intercept_everywhere = false;
    for (int p = 0; p <= 3; ++p)
        for (int q = 0; q <= 2; ++q) u.order_whitelist.push_back({p, q});
    return u;
}

/// Empirical-style space: contiguous orders p in 1..7, q in 1..2 (14 pairs),
/// contemporaneous predictors only, intercept in every candidate. With s = 11
/// this yields 14 * 2^11 = 28672 candidates.
inline ModelUniverse empirical_reproduction_universe(int n_predictors) {
    ModelUniverse u;
    u.mode = UniverseMode::Contiguous;
    u.p_max = 7;
    u.q_max = 2;
    u.r_max = 0;
    u.s = n_predictors;
    u.include_lag_zero = true;
    u.intercept_everywhere = true;
    for (int p = 1; p <= 7; ++p)
        for (int q = 1; q <= 2; ++q) u.order_whitelist.push_back({p, q});
    return u;
}

}  // namespace mscs
