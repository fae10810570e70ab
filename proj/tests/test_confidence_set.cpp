#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "mscs/confidence_set.hpp"
#include "mscs/monte_carlo.hpp"
#include "support/test_util.hpp"

using namespace mscs;

namespace {

ConfidenceSet tiny_set(std::uint64_t seed, double alpha = 0.01) {
    ModelUniverse u;
    u.mode = UniverseMode::Subset;
    u.p_max = 1;
    u.q_max = 1;
    u.s = 2;
    DgpConfig dgp;
    dgp.ar_coeffs = {0.6};
    dgp.ma_coeffs = {};
    dgp.exo_coeffs = {1.5, 0.0};
    dgp.sigma = 0.8;
    const auto data = simulate_armax(dgp, 600, seed);
    return build_confidence_set(data, u, alpha, FitOptions{});
}

}  // namespace

TEST_CASE("lr statistic basics") {
    FittedModel full, cand;
    full.spec = ModelSpec({1, 2}, {}, {});
    full.loglik = -100.0;
    full.converged = true;
    cand = full;
    auto [l0, d0] = lr_statistic(cand, full);
    CHECK(l0 == 0.0);
    CHECK(d0 == 0);

    cand.spec = ModelSpec({1}, {}, {});
    cand.loglik = -103.2;
    auto [l1, d1] = lr_statistic(cand, full);
    CHECK(l1 == Catch::Approx(6.4));
    CHECK(d1 == 1);

    // tiny negative lambda clamps to zero
    cand.loglik = -100.0 + 4e-7;
    auto [l2, d2] = lr_statistic(cand, full);
    CHECK(l2 == 0.0);
    CHECK(d2 == 1);

    // a real inversion is an error
    cand.loglik = -99.0;
    CHECK_THROWS_AS(lr_statistic(cand, full), std::runtime_error);

    // non-nested candidate is an error
    cand.spec = ModelSpec({3}, {}, {});
    cand.loglik = -105.0;
    CHECK_THROWS_AS(lr_statistic(cand, full), std::invalid_argument);
}

TEST_CASE("single-model universe yields a single-member set") {
    ModelUniverse u;
    u.p_max = 0;
    u.q_max = 0;
    u.s = 0;
    u.intercept_everywhere = true;
    DgpConfig dgp;
    dgp.exo_coeffs = {};
    dgp.sigma = 1.0;
    const auto data = simulate_armax(dgp, 100, 5);
    const auto cs = build_confidence_set(data, u, 0.05, FitOptions{});
    CHECK(cs.member_count() == 1);
    CHECK(cs.rows.size() == 1);
    CHECK(cs.rows[0].member);
    CHECK(cs.rows[0].df == 0);
}

TEST_CASE("set membership and partition invariants") {
    const auto cs = tiny_set(42);
    CHECK(cs.contains(cs.full_model.spec));  // full model always a member
    CHECK(cs.rows.size() + cs.failures.size() == count(cs.universe));

    const int d_f = cs.full_model.spec.dimension();
    for (const auto& r : cs.rows) {
        if (r.spec == cs.full_model.spec) continue;
        CHECK(r.df == d_f - r.d_m);
        const double q = chi2_quantile(1.0 - cs.alpha, r.df);
        CHECK(r.member == (r.lr_statistic < q));
        CHECK(r.p_value >= 0.0);
        CHECK(r.p_value <= 1.0);
    }
}

TEST_CASE("lower boundary basics") {
    ConfidenceSet cs;
    cs.alpha = 0.01;
    cs.universe.p_max = 2;
    cs.universe.q_max = 1;
    cs.universe.s = 0;
    auto add = [&](const ModelSpec& m) {
        ScreenedModel row;
        row.spec = m;
        row.member = true;
        cs.rows.push_back(row);
    };
    add(ModelSpec({1}, {}, {}));
    add(ModelSpec({1, 2}, {}, {}));
    add(ModelSpec({}, {1}, {}));
    const auto lb = lower_boundary(cs);
    REQUIRE(lb.models.size() == 2);  // AR{1,2} nests AR{1}
    std::set<ModelSpec> got(lb.models.begin(), lb.models.end());
    CHECK(got.count(ModelSpec({1}, {}, {})) == 1);
    CHECK(got.count(ModelSpec({}, {1}, {})) == 1);
    CHECK(lb.union_model == ModelSpec({1}, {1}, {}));
}

TEST_CASE("boundary from the pairwise scan matches a brute-force search") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        const auto cs = tiny_set(seed, 0.05);
        const auto lb = lower_boundary(cs);

        // independent check: walk the whole universe and test each member
        // for a proper nested member below it
        std::set<ModelSpec> members;
        for (const auto& r : cs.rows)
            if (r.member) members.insert(r.spec);
        std::set<ModelSpec> expected;
        for (const auto& m : members) {
            bool minimal = true;
            UniverseEnumerator it(cs.universe);
            while (auto s = it.next()) {
                if (*s != m && members.count(*s) && is_nested(*s, m)) {
                    minimal = false;
                    break;
                }
            }
            if (minimal) expected.insert(m);
        }
        std::set<ModelSpec> got(lb.models.begin(), lb.models.end());
        CHECK(got == expected);

        // boundary reachability: every member has a boundary model below it
        for (const auto& m : members) {
            bool reachable = false;
            for (const auto& b : lb.models) reachable = reachable || is_nested(b, m);
            CHECK(reachable);
        }
    }
}

TEST_CASE("inclusion importance") {
    ModelUniverse u;
    u.p_max = 1;
    u.q_max = 1;
    u.s = 0;

    LowerBoundary lb;
    lb.models = {ModelSpec({1}, {}, {})};
    lb.union_model = lb.models[0];
    auto ii = inclusion_importance(lb, u);
    CHECK(ii[Term{TermKind::AR, 1, 0}] == 1.0);
    CHECK(ii[Term{TermKind::MA, 1, 0}] == 0.0);

    lb.models = {ModelSpec({1}, {}, {}), ModelSpec({1}, {1}, {})};
    lb.union_model = union_spec(lb.models);
    ii = inclusion_importance(lb, u);
    CHECK(ii[Term{TermKind::AR, 1, 0}] == 1.0);
    CHECK(ii[Term{TermKind::MA, 1, 0}] == 0.5);
}

TEST_CASE("normalized set importance") {
    // direct checks of the normalization pivot points via a synthetic set
    ConfidenceSet cs;
    cs.alpha = 0.05;
    cs.universe.p_max = 1;
    cs.universe.q_max = 1;
    cs.universe.s = 0;
    auto add = [&](const ModelSpec& m) {
        ScreenedModel row;
        row.spec = m;
        row.member = true;
        cs.rows.push_back(row);
    };
    // 4 members: AR1 in all (freq 1.0), MA1 in two (freq 0.5)
    add(ModelSpec({1}, {}, {}));
    add(ModelSpec({1}, {1}, {}));
    add(ModelSpec({1}, {1}, {{0, 0}}));
    add(ModelSpec({1}, {}, {{0, 0}}));

    const auto imp = normalized_set_importance(cs);
    CHECK(imp.at(Term{TermKind::AR, 1, 0}) == 1.0);   // freq 1.0 -> 1.0
    CHECK(imp.at(Term{TermKind::MA, 1, 0}) == 0.0);   // freq 0.5 -> 0.0

    const auto raw = set_inclusion_frequency(cs);
    CHECK(raw.at(Term{TermKind::MA, 1, 0}) == 0.5);

    // freq 0.25 clamps to zero
    ConfidenceSet cs2 = cs;
    cs2.rows.clear();
    for (int i = 0; i < 3; ++i) {
        ScreenedModel row;
        row.spec = ModelSpec({1}, {}, {});
        row.member = true;
        cs2.rows.push_back(row);
    }
    ScreenedModel row;
    row.spec = ModelSpec({1}, {1}, {});
    row.member = true;
    cs2.rows.push_back(row);
    CHECK(normalized_set_importance(cs2).at(Term{TermKind::MA, 1, 0}) == 0.0);
}

TEST_CASE("threshold sharpness: a member pushed past its quantile drops out") {
    ScreenResult screen;
    ModelUniverse u;
    u.p_max = 1;
    u.q_max = 0;
    u.s = 0;
    screen.universe = u;
    screen.full_model.spec = u.full_model();
    screen.full_model.converged = true;
    screen.full_model.loglik = -50.0;

    ScreenedModel full_row;
    full_row.spec = u.full_model();
    full_row.d_m = 1;
    full_row.df = 0;
    full_row.p_value = 1.0;
    ScreenedModel small;
    small.spec = ModelSpec();
    small.d_m = 0;
    small.df = 1;
    small.lr_statistic = 3.0;
    small.p_value = chi2_sf(3.0, 1);
    screen.rows = {small, full_row};

    auto cs = assemble_confidence_set(screen, 0.05);
    CHECK(cs.member_count() == 2);  // 3.0 < 3.84

    screen.rows[0].lr_statistic = chi2_quantile(0.95, 1);  // exact tie rejects
    cs = assemble_confidence_set(screen, 0.05);
    CHECK(cs.member_count() == 1);
}
