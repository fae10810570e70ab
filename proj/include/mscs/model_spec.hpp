#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mscs {

/// One exogenous regressor: predictor column index and its lag (0 = contemporaneous).
struct ExoTerm {
    int predictor = 0;
    int lag = 0;

    friend bool operator==(const ExoTerm&, const ExoTerm&) = default;
    friend auto operator<=>(const ExoTerm&, const ExoTerm&) = default;
};

enum class TermKind { AR, MA, Exo, Intercept };

/// A single model term, the unit of nesting, Hamming distance and
/// inclusion-importance accounting.
struct Term {
    TermKind kind = TermKind::AR;
    int lag = 0;        // AR/MA/Exo lag; unused for Intercept
    int predictor = 0;  // Exo only

    friend bool operator==(const Term&, const Term&) = default;
    friend auto operator<=>(const Term&, const Term&) = default;
};

/**
 * A candidate model structure: which AR lags of the response, which MA lags
 * of the innovation and which exogenous terms carry a free coefficient,
 * plus an intercept flag. Lag sets are kept sorted and duplicate-free so
 * that comparisons, nesting checks and canonical ordering are cheap.
 *
 * Immutable by convention after construction; safe to share across threads.
 */
class ModelSpec {
public:
    ModelSpec() = default;

    ModelSpec(std::vector<int> ar, std::vector<int> ma,
              std::vector<ExoTerm> exo, bool with_intercept = false)
        : ar_lags_(std::move(ar)),
          ma_lags_(std::move(ma)),
          exo_terms_(std::move(exo)),
          intercept_(with_intercept) {
        normalize(ar_lags_);
        normalize(ma_lags_);
        std::sort(exo_terms_.begin(), exo_terms_.end());
        exo_terms_.erase(std::unique(exo_terms_.begin(), exo_terms_.end()),
                         exo_terms_.end());
        for (int j : ar_lags_)
            if (j < 1) throw std::invalid_argument("ModelSpec: AR lags must be >= 1");
        for (int k : ma_lags_)
            if (k < 1) throw std::invalid_argument("ModelSpec: MA lags must be >= 1");
        for (const auto& x : exo_terms_)
            if (x.predictor < 0 || x.lag < 0)
                throw std::invalid_argument("ModelSpec: exogenous term out of range");
    }

    const std::vector<int>& ar_lags() const { return ar_lags_; }
    const std::vector<int>& ma_lags() const { return ma_lags_; }
    const std::vector<ExoTerm>& exo_terms() const { return exo_terms_; }
    bool intercept() const { return intercept_; }

    /// Number of free mean-equation coefficients. The innovation variance is
    /// estimated for every model and therefore not counted here.
    int dimension() const {
        return static_cast<int>(ar_lags_.size() + ma_lags_.size() +
                                exo_terms_.size()) +
               (intercept_ ? 1 : 0);
    }

    int max_ar_lag() const { return ar_lags_.empty() ? 0 : ar_lags_.back(); }
    int max_ma_lag() const { return ma_lags_.empty() ? 0 : ma_lags_.back(); }
    int max_exo_lag() const {
        int m = 0;
        for (const auto& x : exo_terms_) m = std::max(m, x.lag);
        return m;
    }
    /// Largest lag of any kind; the minimum number of leading observations a
    /// conditional likelihood must skip.
    int max_lag() const {
        return std::max({max_ar_lag(), max_ma_lag(), max_exo_lag()});
    }

    /// All terms in canonical order (AR, MA, exogenous, intercept).
    std::vector<Term> terms() const {
        std::vector<Term> out;
        out.reserve(ar_lags_.size() + ma_lags_.size() + exo_terms_.size() + 1);
        for (int j : ar_lags_) out.push_back({TermKind::AR, j, 0});
        for (int k : ma_lags_) out.push_back({TermKind::MA, k, 0});
        for (const auto& x : exo_terms_)
            out.push_back({TermKind::Exo, x.lag, x.predictor});
        if (intercept_) out.push_back({TermKind::Intercept, 0, 0});
        return out;
    }

    bool contains(const Term& t) const {
        switch (t.kind) {
            case TermKind::AR:
                return std::binary_search(ar_lags_.begin(), ar_lags_.end(), t.lag);
            case TermKind::MA:
                return std::binary_search(ma_lags_.begin(), ma_lags_.end(), t.lag);
            case TermKind::Exo:
                return std::binary_search(exo_terms_.begin(), exo_terms_.end(),
                                          ExoTerm{t.predictor, t.lag});
            case TermKind::Intercept:
                return intercept_;
        }
        return false;
    }

    /// Canonical short form, e.g. "ar{1,2};ma{1};x{0@0,2@0};c".
    std::string to_string() const {
        std::string s = "ar{";
        for (std::size_t i = 0; i < ar_lags_.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(ar_lags_[i]);
        }
        s += "};ma{";
        for (std::size_t i = 0; i < ma_lags_.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(ma_lags_[i]);
        }
        s += "};x{";
        for (std::size_t i = 0; i < exo_terms_.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(exo_terms_[i].predictor) + "@" +
                 std::to_string(exo_terms_[i].lag);
        }
        s += "}";
        if (intercept_) s += ";c";
        return s;
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
    friend auto operator<=>(const ModelSpec&, const ModelSpec&) = default;

private:
    static void normalize(std::vector<int>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    std::vector<int> ar_lags_;
    std::vector<int> ma_lags_;
    std::vector<ExoTerm> exo_terms_;
    bool intercept_ = false;
};

/// true iff every term of `inner` is present in `outer`. Reflexive.
inline bool is_nested(const ModelSpec& inner, const ModelSpec& outer) {
    if (inner.intercept() && !outer.intercept()) return false;
    return std::includes(outer.ar_lags().begin(), outer.ar_lags().end(),
                         inner.ar_lags().begin(), inner.ar_lags().end()) &&
           std::includes(outer.ma_lags().begin(), outer.ma_lags().end(),
                         inner.ma_lags().begin(), inner.ma_lags().end()) &&
           std::includes(outer.exo_terms().begin(), outer.exo_terms().end(),
                         inner.exo_terms().begin(), inner.exo_terms().end());
}

inline bool is_proper_nested(const ModelSpec& inner, const ModelSpec& outer) {
    return inner != outer && is_nested(inner, outer);
}

namespace detail {
template <typename T>
int symmetric_difference_size(const std::vector<T>& a, const std::vector<T>& b) {
    std::size_t i = 0, j = 0;
    int n = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) { ++n; ++i; }
        else if (b[j] < a[i]) { ++n; ++j; }
        else { ++i; ++j; }
    }
    return n + static_cast<int>((a.size() - i) + (b.size() - j));
}
}  // namespace detail

/// Number of terms present in exactly one of the two models. A metric on
/// model structures; the intercept counts as one term like any other.
inline int hamming_distance(const ModelSpec& m1, const ModelSpec& m2) {
    int d = detail::symmetric_difference_size(m1.ar_lags(), m2.ar_lags()) +
            detail::symmetric_difference_size(m1.ma_lags(), m2.ma_lags()) +
            detail::symmetric_difference_size(m1.exo_terms(), m2.exo_terms());
    if (m1.intercept() != m2.intercept()) ++d;
    return d;
}

/// Term-wise union. Every input is nested in the result, and the result is
/// nested in any other common upper bound.
inline ModelSpec union_spec(const std::vector<ModelSpec>& models) {
    if (models.empty())
        throw std::invalid_argument("union_spec: no models supplied");
    std::set<int> ar, ma;
    std::set<ExoTerm> exo;
    bool intercept = false;
    for (const auto& m : models) {
        ar.insert(m.ar_lags().begin(), m.ar_lags().end());
        ma.insert(m.ma_lags().begin(), m.ma_lags().end());
        exo.insert(m.exo_terms().begin(), m.exo_terms().end());
        intercept = intercept || m.intercept();
    }
    return ModelSpec(std::vector<int>(ar.begin(), ar.end()),
                     std::vector<int>(ma.begin(), ma.end()),
                     std::vector<ExoTerm>(exo.begin(), exo.end()), intercept);
}

}  // namespace mscs
