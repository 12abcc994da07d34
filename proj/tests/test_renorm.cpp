#include <doctest.h>

#include <variant>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "fixture.hpp"
#include "lorenz/renorm.hpp"

using namespace lorenz;
using fixture::rel_err;
using fixture::tuned_cascade;
using fixture::tuned_map;

namespace {

const RenormResult& first_level() { return tuned_cascade().at(0); }

bool disjoint(const Interval& a, const Interval& b) { return a.hi < b.lo || b.hi < a.lo; }

LorenzMap level_map(std::size_t k) {
    return k == 0 ? LorenzMap(tuned_map()) : LorenzMap(tuned_cascade().at(k - 1).renormalized);
}

}  // namespace

TEST_CASE("periodic boundaries of the one-letter words") {
    const LorenzMap L(fixture::example_map());
    CHECK(find_periodic_boundary(L, "0") == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(find_periodic_boundary(L, "1") == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("left endpoint of the (2,2) window from the word 011") {
    const LorenzMap L(tuned_map());
    const double p = find_periodic_boundary(L, "011");
    double x = p;
    for (int i = 0; i < 3; ++i) x = L.eval(x);
    CHECK(std::abs(x - p) < 1e-12);
    CHECK(itinerary(L, p, 3).symbols == "011");
    CHECK(p == doctest::Approx(first_level().window.lo).epsilon(1e-12));
}

TEST_CASE("type parsing and kneading targets") {
    const auto t = parse_type_sequence("2,2x4");
    REQUIRE(t.size() == 4);
    CHECK(t[3].a == 2);
    CHECK(parse_type_sequence("1,2;3,1").at(1).a == 3);
    CHECK(parse_type_sequence("2,2x0").empty());
    CHECK_THROWS(parse_type_sequence("2;2"));
    CHECK(CombinatorialType::monotone(2, 3).omega_minus == "011");
    CHECK(CombinatorialType::monotone(2, 3).omega_plus == "1000");
    CHECK(target_kneading({{2, 2}}, true, 3) == "011");
    // one substitution 0 -> 011, 1 -> 100 applied to 011
    CHECK(target_kneading({{2, 2}, {2, 2}}, true, 9) == "011100100");
}

TEST_CASE("nearly trivial and trivial maps are not renormalizable") {
    const LorenzMap trivial(StandardFamilyMap(0.45, 0.7, 0.5, 2.0));
    const auto r = find_renorm_interval(trivial, 2, 2);
    REQUIRE(std::holds_alternative<NotRenormalizable>(r));
    CHECK(std::get<NotRenormalizable>(r).reason == RenormFailure::non_triviality);
    const LorenzMap nearly(StandardFamilyMap(0.5 + 1e-9, 0.7, 0.5, 2.0));
    const auto s = find_renorm_interval(nearly, 2, 2);
    REQUIRE(std::holds_alternative<NotRenormalizable>(s));
    CHECK(std::get<NotRenormalizable>(s).reason == RenormFailure::non_triviality);
    const auto d = detect_type(trivial, 8);
    CHECK(std::holds_alternative<NotRenormalizable>(d));
}

TEST_CASE("intermediate images of the (2,2) window avoid the window") {
    const StandardFamilyMap& f = tuned_map();
    const auto& r = first_level();
    const Interval C = r.window;
    const double c = f.c();
    std::vector<Interval> minus, plus;
    Interval m{C.lo, c}, p{c, C.hi};
    // closure images: the endpoint at c goes to the one-sided limit
    m = {f.eval(m.lo), f.limit(Side::left)};
    p = {f.limit(Side::right), f.eval(p.hi)};
    for (int i = 0; i < 2; ++i) {
        minus.push_back(m);
        plus.push_back(p);
        m = {f.eval(m.lo), f.eval(m.hi)};
        p = {f.eval(p.lo), f.eval(p.hi)};
    }
    for (const auto& I : minus) CHECK(disjoint(I, C));
    for (const auto& I : plus) CHECK(disjoint(I, C));
    CHECK(disjoint(minus[0], minus[1]));
    CHECK(disjoint(plus[0], plus[1]));
    // third image returns
    CHECK(m.lo == doctest::Approx(C.lo).epsilon(1e-12));
    CHECK(p.hi == doctest::Approx(C.hi).epsilon(1e-12));
    CHECK(C.contains(m.hi));
    CHECK(C.contains(p.lo));
}

TEST_CASE("forward images are disjoint at every certified level") {
    for (std::size_t k = 0; k < tuned_cascade().size(); ++k) {
        const LorenzMap L = level_map(k);
        const auto& r = tuned_cascade()[k];
        const double c = L.singular_point();
        Interval m{L.eval(r.window.lo), L.limit(Side::left)};
        Interval p{L.limit(Side::right), L.eval(r.window.hi)};
        std::vector<Interval> seen{r.window};
        for (int i = 0; i < r.type.a(); ++i) {
            for (const auto& s : seen) CHECK(disjoint(m, s));
            seen.push_back(m);
            m = {L.eval(m.lo), L.eval(m.hi)};
        }
        seen = {r.window};
        for (int i = 0; i < r.type.b(); ++i) {
            for (const auto& s : seen) CHECK(disjoint(p, s));
            seen.push_back(p);
            p = {L.eval(p.lo), L.eval(p.hi)};
        }
        CHECK(r.window.lo < c);
        CHECK(c < r.window.hi);
    }
}

TEST_CASE("detect_type round trip and minimality") {
    const LorenzMap L(tuned_map());
    const auto d = detect_type(L, 8);
    REQUIRE(std::holds_alternative<DetectedType>(d));
    CHECK(std::get<DetectedType>(d).type == CombinatorialType::monotone(2, 2));
    for (int a = 1; a <= 3; ++a)
        for (int b = 1; b <= 3; ++b) {
            if (a + b > 4 || (a == 2 && b == 2)) continue;
            if (a + b == 4 && a > 2) continue;  // (3,1) loses the tie-break anyway
            CHECK_MESSAGE(std::holds_alternative<NotRenormalizable>(find_renorm_interval(L, a, b)),
                          "type (" << a << "," << b << ")");
        }
    const auto again = detect_type(LorenzMap(first_level().renormalized), 8);
    REQUIRE(std::holds_alternative<DetectedType>(again));
    CHECK(std::get<DetectedType>(again).type == CombinatorialType::monotone(2, 2));
}

TEST_CASE("prerenormalized map") {
    const LorenzMap L(tuned_map());
    const auto& r = first_level();
    const auto P = prerenormalization(L, r);
    CHECK(P.eval(r.window.lo) == doctest::Approx(r.window.lo).epsilon(1e-12));
    double y = L.limit(Side::left);
    for (int i = 0; i < r.type.a(); ++i) y = L.eval(y);
    CHECK(P.eval(0.5, Side::left) == y);
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> in(r.window.lo, 0.5);
    int same = 0;
    for (int i = 0; i < 100; ++i) {
        const double x = in(rng);
        double z = x;
        for (int j = 0; j < r.type.a() + 1; ++j) z = L.eval(z);
        same += P.eval(x) == z;
    }
    CHECK(same == 100);
}

TEST_CASE("renormalized map") {
    const auto& r = first_level();
    const LorenzMap R(r.renormalized);
    CHECK(std::abs(R.eval(0.0)) < 1e-10);
    CHECK(std::abs(R.eval(1.0) - 1.0) < 1e-10);
    const double c = R.singular_point();
    CHECK(R.limit(Side::right) < c);
    CHECK(c < R.limit(Side::left));
    CHECK(r.rescaled_right_value < r.rescaled_singular_point);
    CHECK(r.rescaled_singular_point < r.rescaled_left_value);
    const auto again = find_renorm_interval(R, 2, 2);
    CHECK(std::holds_alternative<RenormResult>(again));
}

TEST_CASE("tuner with an empty target accepts the starting box") {
    const auto t = tune_parameters(0.5, 2.0, {});
    const StandardFamilyMap f(t.u, t.v, 0.5, 2.0);
    CHECK(f.nontrivial());
    CHECK(t.cascade.empty());
}

TEST_CASE("tuner depth 1") {
    TuneOptions opt;
    opt.lookahead = 0;
    const auto t = tune_parameters(0.5, 2.0, parse_type_sequence("2,2"), opt);
    const auto d = detect_type(LorenzMap(StandardFamilyMap(t.u, t.v, 0.5, 2.0)), 8);
    REQUIRE(std::holds_alternative<DetectedType>(d));
    CHECK(std::get<DetectedType>(d).type == CombinatorialType::monotone(2, 2));
}

TEST_CASE("tuner depth 4 reproduces the fixture map and certifies four levels") {
    const auto t = tune_parameters(0.5, 2.0, parse_type_sequence("2,2x4"));
    CHECK(t.certified_depth >= 4);
    REQUIRE(t.cascade.size() >= 4);
    CHECK(t.u == doctest::Approx(fixture::kTunedU).epsilon(1e-9));
    CHECK(t.v == doctest::Approx(fixture::kTunedV).epsilon(1e-9));
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(t.cascade[k].type == CombinatorialType::monotone(2, 2));
        CHECK(t.cascade[k].left_residual < 1e-10);
        CHECK(t.cascade[k].right_residual < 1e-10);
    }
}

TEST_CASE("each level agrees with 50-digit iteration of the base map") {
    using big = boost::multiprecision::cpp_bin_float_50;
    const StandardFamilyMap& f = tuned_map();
    auto step = [&](const big& x) -> big {
        const big c = f.c();
        if (x < c) return big(f.u()) * (1 - pow((c - x) / c, big(f.alpha())));
        return 1 - big(f.v()) + big(f.v()) * pow((x - c) / (1 - c), big(f.alpha()));
    };
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < tuned_cascade().size(); ++k) {
        const LorenzMap R(tuned_cascade()[k].renormalized);
        const auto& d = tuned_cascade()[k].renormalized;
        const double c = R.singular_point();
        double worst = 0.0;
        int n = 0;
        while (n < 100) {
            const double x = unit(rng);
            if (std::abs(x - c) < 1e-3) continue;
            const long T = x < c ? d.left_time : d.right_time;
            const big lo = d.window.lo, len = big(d.window.hi) - big(d.window.lo);
            big y = lo + len * big(x);
            for (long i = 0; i < T; ++i) y = step(y);
            const double direct = static_cast<double>((y - lo) / len);
            worst = std::max(worst, rel_err(R.eval(x), direct));
            ++n;
        }
        CHECK_MESSAGE(worst < 1e-10, "level " << k + 1 << " worst " << worst);
    }
}
