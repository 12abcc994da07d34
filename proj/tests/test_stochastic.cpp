#include <doctest.h>

#include "fixture.hpp"
#include "lorenz/stochastic.hpp"

using namespace lorenz;
using fixture::tuned_restricted;

TEST_CASE("kernel inverse CDF") {
    const NoiseKernel u(KernelShape::uniform, 0.1);
    CHECK(u.inverse_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(u.inverse_cdf(0.75) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(u.cdf(u.inverse_cdf(0.3)) == doctest::Approx(0.3).epsilon(1e-14));
    const NoiseKernel t(KernelShape::triangular, 0.1);
    CHECK(t.inverse_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(t.inverse_cdf(0.125) == doctest::Approx(-0.05).epsilon(1e-13));
    CHECK(t.density(0.0) == doctest::Approx(t.d0() / 0.1).epsilon(1e-14));
    CHECK(u.density(0.0) == doctest::Approx(u.d0() / 0.1).epsilon(1e-14));
    CHECK(u.density(0.2) == 0.0);
    CHECK(parse_kernel_shape(to_string(KernelShape::triangular)) == KernelShape::triangular);
    CHECK_THROWS(parse_kernel_shape("gauss"));
}

TEST_CASE("empirical kernel density stays under d0/eps") {
    for (auto shape : {KernelShape::uniform, KernelShape::triangular}) {
        const double eps = 0.01;
        const NoiseKernel k(shape, eps);
        std::mt19937_64 rng(99);
        const int bins = 40;
        std::vector<int> count(bins, 0);
        const int n = 1000000;
        for (int i = 0; i < n; ++i) {
            const double t = k.sample(rng);
            REQUIRE(std::abs(t) <= eps);
            count[std::min(bins - 1, static_cast<int>((t + eps) / (2 * eps) * bins))]++;
        }
        const double width = 2 * eps / bins;
        double sup = 0.0;
        for (int c : count) sup = std::max(sup, c / (n * width));
        CHECK(sup <= k.d0() / eps * 1.05);
    }
}

TEST_CASE("random orbits") {
    const auto& g = tuned_restricted();
    const NoiseKernel zero(KernelShape::uniform, 0.0);
    const auto det = random_orbit(g, 0.3, zero, 50, 1);
    double x = 0.3;
    for (std::size_t i = 0; i <= 50; ++i) {
        CHECK(det.states[i] == x);
        if (i < 50) x = g.eval(x);
    }
    const double eps = 0.01;
    const NoiseKernel k(KernelShape::uniform, eps);
    const auto a = random_orbit(g, 0.3, k, 10000, 5), b = random_orbit(g, 0.3, k, 10000, 5);
    CHECK(a.states == b.states);
    CHECK(a.noise == b.noise);
    const auto c = random_orbit(g, 0.3, k, 10000, 6);
    CHECK(a.states != c.states);
    double hi = 0.0, lo = 1.0;
    for (std::size_t i = 1; i < a.states.size(); ++i) {
        hi = std::max(hi, a.states[i]);
        lo = std::min(lo, a.states[i]);
    }
    CHECK(hi <= g.image_hi() + eps);
    CHECK(hi <= 1.0 - (g.epsilon0() - eps));
    CHECK(lo >= g.image_lo() - eps);
    CHECK_THROWS_AS(check_budget(g, NoiseKernel(KernelShape::uniform, 2 * g.epsilon0())), EpsilonExceedsBudget);
}

TEST_CASE("grid width rounding") {
    CHECK(noise_grid_width(1e-2) == doctest::Approx(1.0 / 500));
    CHECK(noise_grid_width(3e-3) == doctest::Approx(1.0 / 1667));
    CHECK(noise_grid_width(3e-3) <= 3e-3 / 5);
    CHECK(grid_bins(noise_grid_width(1e-3)) == 5000);
}

TEST_CASE("Ulam matrix of a constant map") {
    const double w = 1.0 / 1000, eps = 0.05;
    const NoiseKernel k(KernelShape::uniform, eps);
    const auto m = transition_matrix_from_images(std::vector<double>(1000, 0.5), k, w);
    CHECK(m.max_row_error() < 1e-12);
    const auto u = stationary_from_matrix(m);
    CHECK(u.measure.mass({0.45, 0.55}) == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t i = 0; i < 1000; ++i) {
        const double mid = (i + 0.5) * w;
        if (std::abs(mid - 0.5) < eps - w) CHECK(u.measure.weights()[i] == doctest::Approx(w / (2 * eps)).epsilon(1e-9));
        if (std::abs(mid - 0.5) > eps + w) CHECK(u.measure.weights()[i] == 0.0);
    }
}

TEST_CASE("Ulam rejects a grid coarser than eps/5") {
    const NoiseKernel k(KernelShape::uniform, 1e-2);
    CHECK_THROWS_AS(transition_matrix(tuned_restricted(), k, 1.0 / 100), GridTooCoarse);
}

TEST_CASE("stationary measures: Ulam against Monte Carlo") {
    const auto& g = tuned_restricted();
    const auto local = fit_local_constants(g, 2.0);
    for (auto shape : {KernelShape::uniform, KernelShape::triangular})
        for (double eps : {1e-2, 3e-3}) {
            const NoiseKernel k(shape, eps);
            const double w = noise_grid_width(eps);
            const auto m = transition_matrix(g, k, w);
            CHECK(m.max_row_error() < 1e-12);
            const auto u = stationary_from_matrix(m);
            CHECK(u.residual_l1 < 1e-10);
            const std::size_t n = 2000000;
            const auto mc = stationary_mc(g, k, n, 10000, w, 17);
            const double root_n = std::sqrt(static_cast<double>(n));
            CHECK(wasserstein1(u.measure, mc.measure) < 3 * w + 5 / root_n);
            CHECK(u.measure.max_density() <= k.d0() / eps * (1 + w / eps));
            CHECK(mc.measure.max_density() <= k.d0() / eps * 1.1);
            CHECK(wasserstein1(push_forward(m, mc.measure), mc.measure) < 2 * w + 5 / root_n);
            const double nc = near_critical_integral(g, u.measure, eps * eps);
            CHECK(std::abs(nc) <= near_critical_bound(k.d0(), local.c0, eps, w));
        }
}

TEST_CASE("stability: W1 to the physical measure shrinks with eps") {
    const auto& g = tuned_restricted();
    const auto& ls = fixture::tuned_levels();
    const double w = 1.0 / 1000;
    const auto ref = physical_measure(ls, ls.depth()).histogram(w, g.margin(), 1 - 2 * g.margin());
    CHECK(wasserstein1(ref, ref) == 0.0);
    const auto curve = stability_curve(g, KernelShape::uniform, {1e-2, 5e-3}, ref);
    REQUIRE(curve.size() == 2);
    CHECK(curve[1].w1 < curve[0].w1);
}

TEST_CASE("shadowing: first step in closed form") {
    const auto& f = fixture::tuned_map();
    for (double eta : {1e-3, 1e-4, 1e-6}) {
        const double tau = std::abs(f.eval(0.5 + eta) - f.limit(Side::right));
        CHECK(tau == doctest::Approx(f.v() * std::pow(eta / 0.5, 2.0)).epsilon(1e-6));
        CHECK(tau < 0.5 * std::abs(f.limit(Side::right) - 0.5));
        CHECK(tau + shadowing_epsilon(eta) < 2 * std::sqrt(eta));
    }
    CHECK(std::pow(shadowing_epsilon(1e-4), 2) < 1e-4);
}

TEST_CASE("shadowing holds below the pre-searched delta") {
    const auto& g = tuned_restricted();
    const auto wit = shadowing_presearch(g, KernelShape::uniform, 1.01, 0.5,
                                         {1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11}, 50, 3);
    REQUIRE(wit.found);
    for (double eta : {wit.delta / 10, wit.delta / 100}) {
        const auto r = shadowing_check(g, KernelShape::uniform, 1.01, 0.5, eta, 100, 8);
        CHECK(r.pass_fraction() == 1.0);
        CHECK(r.tau1_violations == 0);
    }
}

TEST_CASE("first-step bound holds even where shadowing fails") {
    const auto r = shadowing_check(tuned_restricted(), KernelShape::uniform, 1.01, 0.5, 1e-4, 200, 4);
    CHECK(r.tau1_violations == 0);
    CHECK(r.n_max == static_cast<long>(std::floor(-1.01 * std::log(1e-4))));
    CHECK(r.pairs == 400 * static_cast<std::size_t>(r.n_max));
}

TEST_CASE("random Lyapunov exponents") {
    const auto& g = tuned_restricted();
    const double x = 0.3;
    const auto d = random_lyapunov(g, NoiseKernel(KernelShape::uniform, 0.0), x, 1000, 2, 1);
    CHECK(d.mean == doctest::Approx(log_deriv_sum(g, x, 1000) / 1000).epsilon(1e-10));
    CHECK(d.spread == doctest::Approx(0.0));
    const auto a = random_lyapunov(g, NoiseKernel(KernelShape::uniform, 1e-2), x, 20000, 8, 21);
    const auto b = random_lyapunov(g, NoiseKernel(KernelShape::uniform, 1.25e-3), x, 20000, 8, 21);
    CHECK(b.positive_part < a.positive_part);
}

TEST_CASE("results do not depend on the thread count") {
    const auto& g = tuned_restricted();
    const NoiseKernel k(KernelShape::uniform, 1e-2);
    const auto a = random_lyapunov(g, k, 0.3, 5000, 6, 33, 1), b = random_lyapunov(g, k, 0.3, 5000, 6, 33, 3);
    CHECK(a.per_trial == b.per_trial);
    const auto s = shadowing_check(g, KernelShape::uniform, 1.01, 0.5, 1e-5, 50, 2, 1);
    const auto t = shadowing_check(g, KernelShape::uniform, 1.01, 0.5, 1e-5, 50, 2, 4);
    CHECK(s.passed == t.passed);
    CHECK(s.first_failure == t.first_failure);
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
}
