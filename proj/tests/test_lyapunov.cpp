#include <doctest.h>

#include "fixture.hpp"
#include "lorenz/lyapunov.hpp"

using namespace lorenz;
using fixture::tuned_levels;
using fixture::tuned_map;

namespace {

const LorenzMap& base() {
    static const LorenzMap L(tuned_map());
    return L;
}

double c3_half_width() {
    const Level& l = tuned_levels().levels[3];
    return std::min(l.minus().length(), l.plus().length());
}

}  // namespace

TEST_CASE("slow recurrence vanishes away from c") {
    CHECK(slow_recurrence(base(), 0.0, 0.1, 1000) == 0.0);
    CHECK(slow_recurrence(base(), 1.0, 0.1, 1000) == 0.0);
}

TEST_CASE("slow recurrence at C_3 scale respects the proof-side bound") {
    const auto geom = fit_geometry_constants(tuned_levels());
    const double delta = c3_half_width();
    const int k0 = containing_level(tuned_levels(), delta);
    CHECK(k0 == 3);
    const auto n = static_cast<std::size_t>(10 * tuned_levels().levels[3].s_min());
    for (Side s : {Side::left, Side::right}) {
        const double v = slow_recurrence(base(), tuned_map().limit(s), delta, n);
        CHECK(v <= 0.0);
        CHECK(std::abs(v) <= recurrence_bound(geom, k0));
    }
}

TEST_CASE("recurrence bound closed form") {
    GeometryConstants g;
    g.rho = 0.1;
    g.c1 = 0.5;
    // direct partial sums of the two series from k0 = 3
    double a = 0.0, b = 0.0;
    for (int k = 3; k < 200; ++k) {
        a += (k + 1) / std::ldexp(1.0, k - 1);
        b += 1.0 / std::ldexp(1.0, k - 1);
    }
    CHECK(recurrence_bound(g, 3) == doctest::Approx(-std::log(0.1) * a - std::log(0.5) * b).epsilon(1e-12));
    CHECK(std::isinf(recurrence_bound(g, 0)));
}

TEST_CASE("shrinking delta never increases |recurrence|") {
    const double d0 = c3_half_width();
    std::vector<double> deltas;
    for (int i = 0; i <= 6; ++i) deltas.push_back(std::ldexp(d0, -i));
    const auto prof = recurrence_profile(base(), tuned_map().limit(Side::right), deltas, {270, 1000, 10000, 100000});
    CHECK_FALSE(prof.truncated);
    for (std::size_t j = 0; j < prof.ns.size(); ++j)
        for (std::size_t i = 1; i < deltas.size(); ++i) {
            CHECK(prof.values[i][j] <= 0.0);
            CHECK(std::abs(prof.values[i][j]) <= std::abs(prof.values[i - 1][j]));
        }
    // the profile agrees with the one-shot routine
    CHECK(prof.values[2][1] == doctest::Approx(slow_recurrence(base(), tuned_map().limit(Side::right), deltas[2], 1000)));
}

TEST_CASE("visit counts") {
    const auto& ls = tuned_levels();
    for (Side s : {Side::left, Side::right}) {
        const double x = tuned_map().limit(s);
        for (int k = 1; k <= 4; ++k) {
            const auto S = static_cast<std::size_t>(ls.levels[k].s_min());
            CHECK(visit_count(base(), x, ls, k, S - 1) == 0);
        }
        CHECK(visit_count(base(), x, ls, 2, 100) <= 11);
        long prev = 0;
        for (std::size_t n : {10, 50, 100, 500, 1000, 5000}) {
            const long v = visit_count(base(), x, ls, 2, n);
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("visit audit: no violations up to k = 4, n = 1e5") {
    for (Side s : {Side::left, Side::right}) {
        const auto a = visit_audit(base(), tuned_map().limit(s), tuned_levels(), 4, 100000);
        CHECK(a.violations == 0);
        CHECK(a.checked > 0);
        CHECK(a.worst_ratio <= 1.0);
    }
}

TEST_CASE("exponent trace at the fixed point is constant") {
    const auto t = lyapunov_trace(base(), 0.0, 1000);
    const double expect = std::log(tuned_map().u() * 2.0 / 0.5);
    for (double v : t.value) CHECK(v == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("exponent trace along the critical orbits decays") {
    const auto geom = fit_geometry_constants(tuned_levels());
    for (Side s : {Side::left, Side::right}) {
        const auto t = lyapunov_trace(base(), tuned_map().limit(s), 100000);
        CHECK_FALSE(t.truncated);
        CHECK(t.last_decade_median < t.first_decade_median);
        CHECK(t.last_decade_median < 0.5 * t.first_decade_median);
        CHECK(t.growth_exponent < 1.0);
        CHECK(geom.c1 > 0.0);
    }
}

TEST_CASE("geometric grid") {
    const auto g = geometric_grid(100);
    CHECK(g.front() == 1);
    CHECK(g.back() == 100);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
}

TEST_CASE("log Df integrals in closed form") {
    const auto& f = tuned_map();
    // midpoint rule on a fine grid as the oracle
    auto numeric = [&](double lo, double hi, bool abs) {
        const int n = 200000;
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = lo + (hi - lo) * (i + 0.5) / n;
            const double v = f.log_deriv(x);
            s += abs ? std::abs(v) : v;
        }
        return s * (hi - lo) / n;
    };
    CHECK(log_df_integral(f, 0.1, 0.3) == doctest::Approx(numeric(0.1, 0.3, false)).epsilon(1e-8));
    CHECK(log_df_integral(f, 0.6, 0.9) == doctest::Approx(numeric(0.6, 0.9, false)).epsilon(1e-8));
    CHECK(abs_log_df_integral(f, 0.05, 0.45) == doctest::Approx(numeric(0.05, 0.45, true)).epsilon(1e-6));
    CHECK(abs_log_df_integral(f, 0.4, 0.6) == doctest::Approx(numeric(0.4, 0.6, true)).epsilon(1e-4));
}

TEST_CASE("integrability of the truncated log derivative") {
    const auto& ls = tuned_levels();
    const auto local = fit_local_constants(base(), 2.0);
    const auto geom = fit_geometry_constants(ls);
    const auto h = physical_measure(ls, ls.depth()).histogram(1.0 / 4194304.0);
    CHECK(truncated_log_df_integral(tuned_map(), h, ls, 0) == 0.0);
    const auto r = integrability_report(tuned_map(), h, ls, local, geom);
    CHECK(r.nondecreasing);
    CHECK(r.bounded);
    CHECK(r.n0 >= 1);
    for (double v : r.integrals) CHECK(v <= r.c2);
    for (std::size_t k = 0; k < r.increments.size(); ++k) {
        CHECK(r.increments[k] >= 0.0);
        CHECK(r.increments[k] <= r.increment_bounds[k]);
    }
}

TEST_CASE("chi_mu: error bar contains 0 and the trace tail") {
    const auto& ls = tuned_levels();
    const auto local = fit_local_constants(base(), 2.0);
    const auto geom = fit_geometry_constants(ls);
    const auto chi = chi_mu_estimate(tuned_map(), physical_measure(ls, ls.depth()), ls, local, geom);
    CHECK(chi.contains_zero());
    CHECK(chi.error < 1.0);
    const auto t = lyapunov_trace(base(), tuned_map().limit(Side::right), 100000);
    CHECK(std::abs(chi.value - t.value.back()) <= chi.error + t.last_decade_median);
}

TEST_CASE("chi_mu of a point mass at the fixed point") {
    MeasureHistogram h(1.0 / 4194304.0);
    h.add_point(0.0, 1.0);
    const auto chi = chi_mu_estimate(tuned_map(), h);
    const double expect = std::log(tuned_map().u() * 2.0 / 0.5);
    CHECK(std::abs(chi.value - expect) <= chi.error + 1e-12);
    CHECK(chi.error < 1e-5);
}

TEST_CASE("local constants") {
    const auto k = fit_local_constants(base(), 2.0);
    // alpha = 2: Df = 2u|x-c|/c^2 exactly on the left branch
    CHECK(k.a == doctest::Approx(2.0 * tuned_map().u() / 0.25).epsilon(1e-6));
    CHECK(k.c0 >= 1.0);
}
