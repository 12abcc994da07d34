#include "lorenz/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lorenz {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One step of the orbit; descriptor collisions surface as CollisionAbort.
double advance(const LorenzMap& map, double x, std::size_t i) {
    if (near_singular(x, map.singular_point()))
        throw CollisionAbort("orbit entered the collision tolerance at step " + std::to_string(i), i);
    try {
        return map.eval(x);
    } catch (const SingularPointHit&) {
        throw CollisionAbort("inner iterate collided at step " + std::to_string(i), i);
    }
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double xlogx(double s) { return s > 0.0 ? s * std::log(s) : 0.0; }

// Antiderivatives in the branch variable s = (c - x)/c (left) or r = (x - c)/(1 - c) (right),
// where log Df = K + (alpha - 1) log s.
double branch_primitive(double K, double alpha, double s) { return K * s + (alpha - 1.0) * (xlogx(s) - s); }

struct Branch {
    double K, scale;
    bool left;
};

Branch left_branch(const StandardFamilyMap& f) {
    return {std::log(f.u() * f.alpha() / f.c()), f.c(), true};
}
Branch right_branch(const StandardFamilyMap& f) {
    return {std::log(f.v() * f.alpha() / (1.0 - f.c())), 1.0 - f.c(), false};
}

double to_branch(const StandardFamilyMap& f, bool left, double x) {
    return left ? (f.c() - x) / f.c() : (x - f.c()) / (1.0 - f.c());
}

// signed integral of log Df over [lo, hi] inside one branch
double branch_integral(const StandardFamilyMap& f, const Branch& br, double lo, double hi) {
    const double s0 = to_branch(f, br.left, lo), s1 = to_branch(f, br.left, hi);
    const double d = branch_primitive(br.K, f.alpha(), s1) - branch_primitive(br.K, f.alpha(), s0);
    return br.left ? -br.scale * d : br.scale * d;
}

double branch_abs_integral(const StandardFamilyMap& f, const Branch& br, double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    // log Df vanishes at s* = exp(-K/(alpha-1))
    const double s_star = std::exp(-br.K / (f.alpha() - 1.0));
    const double x_star = br.left ? f.c() - br.scale * s_star : f.c() + br.scale * s_star;
    if (lo < x_star && x_star < hi)
        return std::abs(branch_integral(f, br, lo, x_star)) + std::abs(branch_integral(f, br, x_star, hi));
    return std::abs(branch_integral(f, br, lo, hi));
}

double log_df_osc(const StandardFamilyMap& f, double lo, double hi) {
    return std::abs(f.log_deriv(hi) - f.log_deriv(lo));
}

}  // namespace

double slow_recurrence(const LorenzMap& map, double x, double delta, std::size_t n) {
    const double c = map.singular_point();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::abs(x - c);
        if (d < delta && d > 0.0) sum += std::log(d);
        if (i + 1 < n) x = advance(map, x, i);
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

double RecurrenceProfile::envelope(std::size_t i) const {
    double e = 0.0;
    for (double v : values.at(i)) e = std::max(e, std::abs(v));
    return e;
}

RecurrenceProfile recurrence_profile(const LorenzMap& map, double x, const std::vector<double>& deltas,
                                     std::vector<std::size_t> ns) {
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    RecurrenceProfile p;
    p.x = x;
    p.deltas = deltas;
    p.ns = ns;
    p.values.assign(deltas.size(), {});
    if (ns.empty()) return p;
    const double c = map.singular_point();
    std::vector<double> sums(deltas.size(), 0.0);
    std::size_t next = 0;
    const std::size_t n_max = ns.back();
    try {
        for (std::size_t i = 0; i < n_max; ++i) {
            const double d = std::abs(x - c);
            for (std::size_t j = 0; j < deltas.size(); ++j)
                if (d < deltas[j] && d > 0.0) sums[j] += std::log(d);
            p.completed = i + 1;
            while (next < ns.size() && ns[next] == i + 1) {
                for (std::size_t j = 0; j < deltas.size(); ++j)
                    p.values[j].push_back(sums[j] / static_cast<double>(i + 1));
                ++next;
            }
            if (i + 1 < n_max) x = advance(map, x, i);
        }
    } catch (const CollisionAbort&) {
        p.truncated = true;
    }
    return p;
}

long visit_count(const LorenzMap& map, double x, const LevelStructure& levels, int k, std::size_t n) {
    const Interval& C = levels.levels.at(static_cast<std::size_t>(k)).window;
    long count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (C.contains(x)) ++count;
        if (i + 1 < n) x = advance(map, x, i);
    }
    return count;
}

VisitAudit visit_audit(const LorenzMap& map, double x, const LevelStructure& levels, int k_max, std::size_t n_max) {
    if (k_max > levels.depth()) throw std::invalid_argument("visit audit deeper than the level structure");
    VisitAudit a;
    std::vector<long> counts(static_cast<std::size_t>(k_max) + 1, 0);
    for (std::size_t i = 0; i < n_max; ++i) {
        const double n = static_cast<double>(i + 1);
        for (int k = 1; k <= k_max; ++k) {
            const Level& lv = levels.levels[static_cast<std::size_t>(k)];
            if (lv.window.contains(x)) ++counts[static_cast<std::size_t>(k)];
            const double bound = (n + 1.0) / static_cast<double>(lv.s_min());
            const double cnt = static_cast<double>(counts[static_cast<std::size_t>(k)]);
            if (cnt > bound) ++a.violations;
            a.worst_ratio = std::max(a.worst_ratio, cnt / bound);
            ++a.checked;
        }
        if (i + 1 < n_max) x = advance(map, x, i);
    }
    return a;
}

std::vector<std::size_t> geometric_grid(std::size_t n_max, double ratio) {
    std::vector<std::size_t> g;
    for (int k = 0;; ++k) {
        const double n = std::ceil(std::pow(ratio, k) - 1e-9);
        if (n > static_cast<double>(n_max)) break;
        const auto m = static_cast<std::size_t>(n);
        if (g.empty() || g.back() != m) g.push_back(m);
    }
    if (g.empty() || g.back() != n_max) g.push_back(n_max);
    return g;
}

ExponentTrace lyapunov_trace(const LorenzMap& map, double x, std::size_t n_max) {
    ExponentTrace t;
    t.x = x;
    const auto grid = geometric_grid(n_max);
    std::vector<double> running_max;
    long double sum = 0.0L;
    double peak = 0.0;
    std::size_t next = 0;
    try {
        for (std::size_t i = 0; i < n_max; ++i) {
            if (near_singular(x, map.singular_point())) throw CollisionAbort("trace reached c", i);
            sum += map.log_deriv(x);
            peak = std::max(peak, static_cast<double>(std::abs(sum)));
            if (next < grid.size() && grid[next] == i + 1) {
                t.n.push_back(i + 1);
                t.value.push_back(static_cast<double>(sum / static_cast<long double>(i + 1)));
                running_max.push_back(peak);
                ++next;
            }
            if (i + 1 < n_max) x = advance(map, x, i);
        }
    } catch (const CollisionAbort&) {
        t.truncated = true;
    }
    if (t.n.empty()) return t;
    const double last = static_cast<double>(t.n.back());
    std::vector<double> first, tail;
    for (std::size_t i = 0; i < t.n.size(); ++i) {
        if (t.n[i] <= 10) first.push_back(std::abs(t.value[i]));
        if (static_cast<double>(t.n[i]) > last / 10.0) tail.push_back(std::abs(t.value[i]));
    }
    t.first_decade_median = median(first);
    t.last_decade_median = median(tail);
    t.max_abs_log = peak;
    // least squares slope over the last two decades
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t i = 0; i < t.n.size(); ++i) {
        if (static_cast<double>(t.n[i]) < last / 100.0 || running_max[i] <= 0.0) continue;
        const double lx = std::log(static_cast<double>(t.n[i])), ly = std::log(running_max[i]);
        sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, ++m;
    }
    if (m >= 2 && sxx * m - sx * sx > 0) t.growth_exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return t;
}

GeometryConstants fit_geometry_constants(const LevelStructure& ls) {
    if (ls.depth() < 2) throw std::invalid_argument("geometry constants need depth >= 2");
    GeometryConstants g;
    g.depth = ls.depth();
    g.rho = kInf;
    for (int k = 1; k < ls.depth(); ++k) {
        const Level& a = ls.levels[static_cast<std::size_t>(k)];
        const Level& b = ls.levels[static_cast<std::size_t>(k) + 1];
        for (double r : {b.minus().length() / a.minus().length(), b.plus().length() / a.plus().length()}) {
            g.rho = std::min(g.rho, r);
            g.rho_prime = std::max(g.rho_prime, r);
        }
    }
    g.c1 = kInf;
    for (int k = 1; k <= ls.depth(); ++k) {
        const Level& lv = ls.levels[static_cast<std::size_t>(k)];
        g.c1 = std::min(g.c1, std::min(lv.minus().length(), lv.plus().length()) / std::pow(g.rho, k));
    }
    return g;
}

int containing_level(const LevelStructure& ls, double delta) {
    for (int k = ls.depth(); k >= 1; --k) {
        const Level& lv = ls.levels[static_cast<std::size_t>(k)];
        if (delta <= std::min(lv.minus().length(), lv.plus().length()) * (1.0 + 1e-12)) return k;
    }
    return 0;
}

double recurrence_bound(const GeometryConstants& g, int k0) {
    if (k0 < 1) return kInf;
    const double tail = std::ldexp(1.0, 2 - k0);  // sum_{k>=k0} 2^(1-k)
    return -std::log(g.rho) * (k0 + 2) * tail - std::log(g.c1) * tail;
}

double log_df_integral(const StandardFamilyMap& f, double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    const double c = f.c();
    double s = 0.0;
    if (lo < c) s += branch_integral(f, left_branch(f), lo, std::min(hi, c));
    if (hi > c) s += branch_integral(f, right_branch(f), std::max(lo, c), hi);
    return s;
}

double abs_log_df_integral(const StandardFamilyMap& f, double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    const double c = f.c();
    double s = 0.0;
    if (lo < c) s += branch_abs_integral(f, left_branch(f), lo, std::min(hi, c));
    if (hi > c) s += branch_abs_integral(f, right_branch(f), std::max(lo, c), hi);
    return s;
}

double truncated_log_df_integral(const StandardFamilyMap& f, const MeasureHistogram& h, const LevelStructure& ls,
                                 int n) {
    const Interval C = ls.levels.at(static_cast<std::size_t>(n)).window;
    const double w = h.width();
    double total = 0.0;
    for (std::size_t i = 0; i < h.bins(); ++i) {
        const double m = h.weights()[i];
        if (m == 0.0) continue;
        const double a = h.left(i), b = a + w;
        double s = 0.0;
        if (a < C.lo) s += abs_log_df_integral(f, a, std::min(b, C.lo));
        if (b > C.hi) s += abs_log_df_integral(f, std::max(a, C.hi), b);
        total += m / w * s;
    }
    return total;
}

IntegrabilityReport integrability_report(const StandardFamilyMap& f, const MeasureHistogram& h,
                                         const LevelStructure& ls, const LocalConstants& local,
                                         const GeometryConstants& geom) {
    IntegrabilityReport r;
    const double c = f.c();
    r.n0 = 0;
    for (int n = 1; n <= ls.depth() && r.n0 == 0; ++n) {
        const Interval& C = ls.levels[static_cast<std::size_t>(n)].window;
        if (C.lo > c - local.radius && C.hi < c + local.radius) r.n0 = n;
    }
    for (int n = 0; n <= ls.depth(); ++n) r.integrals.push_back(truncated_log_df_integral(f, h, ls, n));
    for (int k = 0; k < ls.depth(); ++k) {
        r.increments.push_back(r.integrals[static_cast<std::size_t>(k) + 1] - r.integrals[static_cast<std::size_t>(k)]);
        const Level& next = ls.levels[static_cast<std::size_t>(k) + 1];
        const double m = std::min(next.minus().length(), next.plus().length());
        const double sk = static_cast<double>(ls.levels[static_cast<std::size_t>(k)].s_min());
        r.increment_bounds.push_back(r.n0 && k >= r.n0 ? 2.0 / sk * local.c0 * -std::log(m) : kInf);
    }
    r.nondecreasing = true;
    for (double d : r.increments)
        if (d < 0.0) r.nondecreasing = false;
    if (r.n0 == 0) {
        r.c2 = kInf;
        r.bounded = false;
        return r;
    }
    // tail sum_{k>=n0} 2^(1-k) (log C1 + (k+1) log rho), closed form
    const double t = std::ldexp(1.0, 2 - r.n0);
    r.c2 = r.integrals[static_cast<std::size_t>(r.n0)] -
           local.c0 * (std::log(geom.c1) * t + std::log(geom.rho) * (r.n0 + 2) * t);
    r.bounded = true;
    for (double v : r.integrals)
        if (v > r.c2) r.bounded = false;
    return r;
}

ChiEstimate chi_mu_estimate(const StandardFamilyMap& f, const PhysicalMeasure& pm, const LevelStructure& ls,
                            const LocalConstants& local, const GeometryConstants& geom) {
    ChiEstimate e;
    const auto N = static_cast<std::size_t>(pm.depth);
    const Level& deep = ls.levels.at(N);
    const Interval C = deep.window;
    double a_minus = 0.0, a_plus = 0.0;
    for (const auto& p : pm.pieces) {
        const Interval& J = p.interval;
        if (J.lo >= C.lo && J.hi <= C.hi) continue;  // C_N^pm themselves
        const double avg = log_df_integral(f, J.lo, J.hi) / J.length();
        e.value += p.weight * avg;
        e.error += p.weight * log_df_osc(f, J.lo, J.hi);
        (p.minus ? a_minus : a_plus) += avg;
    }
    // the true split keeps S^- x + S^+ y = 1 and x, y >= 0
    const double sm = static_cast<double>(deep.s_minus), sp = static_cast<double>(deep.s_plus);
    const double t = std::max(pm.x[N] / sp, pm.y[N] / sm);
    e.error += t * std::abs(sp * a_minus - sm * a_plus);

    if (pm.depth < 1 || !(C.lo > f.c() - local.radius && C.hi < f.c() + local.radius)) {
        e.error = kInf;
        return e;
    }
    // |int_{C_N} log Df dmu| <= sum_{k>=N} mu(C_k) sup_{C_k \ C_{k+1}} |log Df|
    const double alpha = f.alpha();
    double tail = 0.0;
    for (int j = 0; j < 200; ++j) {
        const int k = pm.depth + j;
        const double mass = 2.0 / (static_cast<double>(deep.s_min()) * std::ldexp(1.0, j));
        const double inner = geom.c1 * std::pow(geom.rho, k + 1);
        const double outer = j == 0 ? std::max(deep.minus().length(), deep.plus().length())
                                    : std::max(deep.minus().length(), deep.plus().length()) *
                                          std::pow(geom.rho_prime, j);
        const double below = -local.c0 * std::log(inner);
        const double above = std::max(0.0, std::log(local.b) + (alpha - 1.0) * std::log(outer));
        tail += mass * std::max(below, above);
    }
    e.error += tail;
    return e;
}

ChiEstimate chi_mu_estimate(const StandardFamilyMap& f, const MeasureHistogram& h) {
    ChiEstimate e;
    const double c = f.c(), w = h.width();
    double dropped = 0.0;
    for (std::size_t i = 0; i < h.bins(); ++i) {
        const double m = h.weights()[i];
        if (m == 0.0) continue;
        const double a = h.left(i), b = a + w;
        if (a <= c + kCollisionTol && b >= c - kCollisionTol) {
            dropped += m;
            continue;
        }
        e.value += m * log_df_integral(f, a, b) / w;
        e.error += m * log_df_osc(f, a, std::min(b, 1.0));
    }
    const double kept = h.total() - dropped;
    if (!(kept > 0.0)) throw std::invalid_argument("histogram has no mass away from c");
    e.value /= kept;
    e.error /= kept;
    return e;
}

}  // namespace lorenz
