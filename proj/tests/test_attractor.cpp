#include <doctest.h>

#include "fixture.hpp"
#include "lorenz/attractor.hpp"

using namespace lorenz;
using fixture::tuned_levels;

namespace {

LevelStructure levels_for(const std::string& types) {
    const auto t = tune_parameters(0.5, 2.0, parse_type_sequence(types));
    return build_levels(LorenzMap(StandardFamilyMap(t.u, t.v, 0.5, 2.0)), t.cascade);
}

}  // namespace

TEST_CASE("the fixture cascade certifies six levels") {
    CHECK(fixture::tuned_cascade().size() == 6);
    CHECK(tuned_levels().depth() == 6);
}

TEST_CASE("return times for constant (1,1): powers of two") {
    const auto ls = levels_for("1,1x4");
    REQUIRE(ls.depth() == 4);
    for (int n = 1; n <= 4; ++n) {
        CHECK(ls.levels[n].s_minus == (1L << n));
        CHECK(ls.levels[n].s_plus == (1L << n));
    }
}

TEST_CASE("return times for constant (2,2): powers of three") {
    const auto& ls = tuned_levels();
    long p = 1;
    for (int n = 1; n <= ls.depth(); ++n) {
        p *= 3;
        CHECK(ls.levels[n].s_minus == p);
        CHECK(ls.levels[n].s_plus == p);
        CHECK(ls.levels[n].s_min() >= (1L << n));
    }
}

TEST_CASE("depth-1 return times are a+1 and b+1") {
    for (auto [a, b] : {std::pair{1, 2}, {3, 1}, {2, 3}}) {
        const auto ls = levels_for(std::to_string(a) + "," + std::to_string(b));
        CHECK(ls.levels[1].s_minus == a + 1);
        CHECK(ls.levels[1].s_plus == b + 1);
    }
}

TEST_CASE("mixed types follow the return-time recursion and direct counts") {
    const auto ls = levels_for("1,2;2,1;1,1");
    REQUIRE(ls.depth() == 3);
    for (int n = 1; n <= 3; ++n) {
        const Level& prev = ls.levels[n - 1];
        const Level& lv = ls.levels[n];
        CHECK(lv.s_minus == prev.s_minus + lv.type.a() * prev.s_plus);
        CHECK(lv.s_plus == lv.type.b() * prev.s_minus + prev.s_plus);
        CHECK(lv.direct_minus == lv.s_minus);
        CHECK(lv.direct_plus == lv.s_plus);
    }
}

TEST_CASE("direct first-return counts on the tuned map") {
    const auto& ls = tuned_levels();
    for (int n = 1; n <= kDirectReturnDepth; ++n) {
        CHECK(ls.levels[n].direct_minus == ls.levels[n].s_minus);
        CHECK(ls.levels[n].direct_plus == ls.levels[n].s_plus);
    }
}

TEST_CASE("cascade over another base is rejected") {
    const LorenzMap other(StandardFamilyMap(0.9, 0.9, 0.5, 2.0));
    CHECK_THROWS_AS(build_levels(other, fixture::tuned_cascade()), std::invalid_argument);
    const LorenzMap composed(fixture::tuned_cascade()[0].renormalized);
    CHECK_THROWS_AS(build_levels(composed, {}), std::invalid_argument);
}

TEST_CASE("cycle intervals are pairwise disjoint") {
    const auto& ls = tuned_levels();
    for (const auto& lv : ls.levels) {
        CHECK(overlap_count(lv) == 0);
        CHECK(lv.cycle_minus.size() == static_cast<std::size_t>(lv.s_minus));
        CHECK(lv.cycle_plus.size() == static_cast<std::size_t>(lv.s_plus));
    }
    CHECK(ls.components(6).size() == 1457);
}

TEST_CASE("bounded geometry of the tuned map") {
    const auto& ls = tuned_levels();
    const auto g = geometry_report(ls);
    CHECK(g.bounded);
    CHECK(g.length_decreasing);
    CHECK(g.audited_depth == ls.depth());
    CHECK(0.0 < g.mu_hat);
    CHECK(g.mu_hat <= g.lambda_hat);
    CHECK(g.lambda_hat < 1.0);
    CHECK(g.k_hat >= 2.0);
    for (const auto& l : g.levels) {
        CHECK(l.child_max < 1.0);
        CHECK(l.gap_max < 1.0);
        CHECK(l.child_min > 1e-3);
        CHECK(l.child_max < 1.0 - 1e-3);
        CHECK(l.gap_min > 1e-3);
        CHECK(l.gap_max < 1.0 - 1e-3);
        CHECK(l.branch_ratio < 1e3);
        CHECK(l.branch_ratio >= 1.0 + g.mu_hat);
    }
    for (int n = 1; n <= ls.depth(); ++n) CHECK(ls.total_length(n) < g.lambda_hat * ls.total_length(n - 1));
}

TEST_CASE("histogram basics") {
    CHECK_THROWS(MeasureHistogram(0.3));
    CHECK(grid_bins(1.0 / 4096.0) == 4096);
    MeasureHistogram a(1.0 / 8.0), b(1.0 / 8.0);
    a.add_point(0.0, 1.0);
    b.add_point(1.0, 1.0);
    CHECK(wasserstein1(a, a) == 0.0);
    // each point mass is spread over its end bin
    CHECK(wasserstein1(a, b) == doctest::Approx(1.0 - 1.0 / 8.0).epsilon(1e-12));
    MeasureHistogram c(1.0 / 8.0);
    c.add_interval({0.125, 0.625}, 2.0);
    c.normalize();
    CHECK(c.total() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c.mass({0.125, 0.625}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.mass({0.125, 0.375}) == doctest::Approx(0.5).epsilon(1e-12));
    // point mass at 0.35 against uniform on [0.1, 0.6]: 2 * (0.25^2 / 2) / 0.5
    MeasureHistogram d(1.0 / 1000.0), e(1.0 / 1000.0);
    d.add_interval({0.1, 0.6}, 1.0);
    e.add_point(0.3505, 1.0);
    CHECK(wasserstein1(d, e) == doctest::Approx(0.125).epsilon(1e-3));
}

TEST_CASE("physical measure of the (1,1) cascade") {
    const auto ls = levels_for("1,1x4");
    const auto pm = physical_measure(ls, 4);
    for (int n = 0; n <= 4; ++n) {
        CHECK(pm.x[n] == doctest::Approx(std::ldexp(1.0, -(n + 1))).epsilon(1e-14));
        CHECK(pm.y[n] == doctest::Approx(std::ldexp(1.0, -(n + 1))).epsilon(1e-14));
    }
}

TEST_CASE("physical measure bounds on the tuned map") {
    const auto& ls = tuned_levels();
    const int N = ls.depth();
    const auto pm = physical_measure(ls, N);
    for (int n = 0; n <= N; ++n) {
        const Level& lv = ls.levels[n];
        CHECK(lv.s_minus * pm.x[n] + lv.s_plus * pm.y[n] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(pm.x[n] <= 1.0 / static_cast<double>(lv.s_minus) + 1e-15);
        CHECK(pm.y[n] <= 1.0 / static_cast<double>(lv.s_plus) + 1e-15);
        if (n > 0) CHECK(pm.mass(lv.window) <= 2.0 / static_cast<double>(lv.s_min()) + 1e-15);
    }
    CHECK(pm.x[N] == doctest::Approx(pm.mass(ls.levels[N].minus())).epsilon(1e-9));
    const auto h = pm.histogram(1.0 / 4096.0);
    CHECK(h.total() == doctest::Approx(1.0).epsilon(1e-12));
    for (double w : h.weights()) CHECK(w >= 0.0);
}

TEST_CASE("physical measure is consistent across truncation depths") {
    const auto& ls = tuned_levels();
    for (int N = 1; N < ls.depth(); ++N) {
        const auto a = physical_measure(ls, N), b = physical_measure(ls, N + 1);
        const double tol = 2.0 / static_cast<double>(ls.levels[N].s_min());
        for (int n = 0; n <= N; ++n) {
            CHECK(std::abs(a.x[n] - b.x[n]) <= tol);
            CHECK(std::abs(a.y[n] - b.y[n]) <= tol);
        }
    }
}

TEST_CASE("Birkhoff histogram against the constructed measure") {
    const auto& ls = tuned_levels();
    const int N = 4;
    BirkhoffOptions opt;
    opt.samples = 1000000;
    const auto hb = birkhoff_measure(LorenzMap(fixture::tuned_map()), opt);
    const auto hp = physical_measure(ls, N).histogram(opt.width);
    CHECK(hb.total() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(wasserstein1(hb, hp) < 4.0 / static_cast<double>(ls.levels[N].s_min()) + 2.0 * opt.width);
    const double root_n = std::sqrt(static_cast<double>(opt.samples));
    CHECK(hb.mass(ls.levels[1].window) <= 2.0 / 3.0 + 5.0 / root_n);
    // mass of bins that miss every component of Lambda_1
    const auto comps = ls.components(1);
    double outside = 0.0;
    for (std::size_t i = 0; i < hb.bins(); ++i) {
        const double lo = hb.left(i), hi = lo + hb.width();
        bool meets = false;
        for (const auto& c : comps) meets = meets || (c.lo < hi && lo < c.hi);
        if (!meets) outside += hb.weights()[i];
    }
    CHECK(outside < 10.0 / static_cast<double>(opt.samples));
}
