#include "lorenz/attractor.hpp"

#include <algorithm>
#include <cmath>

namespace lorenz {

namespace {

// Endpoints closer than this (base coordinates) are treated as touching.
constexpr double kTouchTol = 1e-13;

long first_return(const StandardFamilyMap& f, const Interval& window, __float128 y, long limit) {
    for (long k = 1; k <= limit; ++k) {
        y = f.eval_quad(y);
        if (window.lo < y && y < window.hi) return k;
    }
    return -1;
}

std::vector<Interval> cycle(const StandardFamilyMap& f, const Interval& side, long period, bool minus) {
    std::vector<Interval> out{side};
    out.reserve(static_cast<std::size_t>(period));
    // The endpoint at c moves along the critical orbit; the other one is periodic.
    __float128 lo = minus ? f.eval_quad(side.lo) : f.limit(Side::right);
    __float128 hi = minus ? f.limit(Side::left) : f.eval_quad(side.hi);
    auto near_c = [&](__float128 y) {
        const __float128 d = y - f.c();
        return (d < 0 ? -d : d) <= kCollisionTol;
    };
    for (long k = 1; k < period; ++k) {
        out.push_back({static_cast<double>(lo), static_cast<double>(hi)});
        if (near_c(lo) || near_c(hi)) throw SingularPointHit(static_cast<std::size_t>(k));
        lo = f.eval_quad(lo);
        hi = f.eval_quad(hi);
    }
    return out;
}

}  // namespace

std::vector<Interval> LevelStructure::components(int n) const {
    const Level& lv = levels.at(static_cast<std::size_t>(n));
    std::vector<Interval> all = lv.cycle_minus;
    all.insert(all.end(), lv.cycle_plus.begin(), lv.cycle_plus.end());
    std::sort(all.begin(), all.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> out;
    for (const auto& iv : all) {
        if (!out.empty() && iv.lo <= out.back().hi + kTouchTol)
            out.back().hi = std::max(out.back().hi, iv.hi);
        else
            out.push_back(iv);
    }
    return out;
}

double LevelStructure::total_length(int n) const {
    double s = 0.0;
    for (const auto& iv : components(n)) s += iv.length();
    return s;
}

LevelStructure build_levels(const LorenzMap& map, const std::vector<RenormResult>& cascade) {
    if (!map.is_standard()) throw std::invalid_argument("level structure is built over a standard-family map");
    const StandardFamilyMap& f = map.base();
    const double c = f.c();
    LevelStructure ls{f, {}};
    Level zero;
    zero.window = {0.0, 1.0};
    zero.singular_point = c;
    zero.cycle_minus = {{0.0, c}};
    zero.cycle_plus = {{c, 1.0}};
    ls.levels.push_back(zero);

    for (std::size_t i = 0; i < cascade.size(); ++i) {
        const RenormResult& r = cascade[i];
        const Level& prev = ls.levels.back();
        Level lv;
        lv.n = static_cast<int>(i) + 1;
        lv.window = r.renormalized.window;
        lv.singular_point = c;
        lv.type = r.type;
        if (!r.type.is_monotone()) throw NotMonotone("level " + std::to_string(lv.n) + " has type " + r.type.to_string());
        if (!(r.renormalized.base == f)) throw std::invalid_argument("cascade is over a different base map");
        if (lv.window.length() < kPrecisionCap) throw PrecisionCapExceeded(lv.n, lv.window.length());
        if (!(prev.window.lo <= lv.window.lo && lv.window.hi <= prev.window.hi))
            throw std::logic_error("level " + std::to_string(lv.n) + " window is not nested");

        lv.s_minus = prev.s_minus + r.type.a() * prev.s_plus;
        lv.s_plus = r.type.b() * prev.s_minus + prev.s_plus;
        if (lv.s_minus != r.renormalized.left_time || lv.s_plus != r.renormalized.right_time)
            throw std::logic_error("return-time recursion disagrees with the descriptor times");

        if (lv.n <= kDirectReturnDepth) {
            const long limit = 4 * std::max(lv.s_minus, lv.s_plus);
            lv.direct_minus =
                first_return(f, lv.window, (static_cast<__float128>(lv.window.lo) + c) / 2, limit);
            lv.direct_plus =
                first_return(f, lv.window, (static_cast<__float128>(lv.window.hi) + c) / 2, limit);
            if (lv.direct_minus != lv.s_minus || lv.direct_plus != lv.s_plus)
                throw std::logic_error("direct first-return count disagrees with the recursion at level " +
                                       std::to_string(lv.n));
        }
        lv.cycle_minus = cycle(f, lv.minus(), lv.s_minus, true);
        lv.cycle_plus = cycle(f, lv.plus(), lv.s_plus, false);
        ls.levels.push_back(std::move(lv));
    }
    return ls;
}

std::size_t overlap_count(const Level& lv) {
    std::vector<Interval> all = lv.cycle_minus;
    all.insert(all.end(), lv.cycle_plus.begin(), lv.cycle_plus.end());
    std::sort(all.begin(), all.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::size_t bad = 0;
    for (std::size_t i = 1; i < all.size(); ++i)
        if (all[i].lo < all[i - 1].hi) ++bad;
    return bad;
}

GeometryReport geometry_report(const LevelStructure& ls, double ratio_floor, double k_cap) {
    GeometryReport rep;
    rep.ratio_floor = ratio_floor;
    rep.k_cap = k_cap;
    rep.audited_depth = ls.depth();
    rep.mu_hat = 1.0;
    rep.lambda_hat = 0.0;
    for (int n = 1; n <= ls.depth(); ++n) {
        LevelGeometry g;
        g.n = n;
        const Level& lv = ls.levels[static_cast<std::size_t>(n)];
        g.branch_ratio = std::max(lv.window.length() / lv.minus().length(), lv.window.length() / lv.plus().length());
        const auto parents = ls.components(n);
        g.cycle_length = ls.total_length(n);
        g.intervals = parents.size();
        rep.k_hat = std::max(rep.k_hat, g.branch_ratio);
        if (n < ls.depth()) {
            const auto kids = ls.components(n + 1);
            for (const auto& I : parents) {
                std::vector<Interval> inside;
                for (const auto& J : kids)
                    if (J.lo >= I.lo - kTouchTol && J.hi <= I.hi + kTouchTol) inside.push_back(J);
                double cursor = I.lo;
                for (const auto& J : inside) {
                    const double r = J.length() / I.length();
                    g.child_min = std::min(g.child_min, r);
                    g.child_max = std::max(g.child_max, r);
                    const double gap = J.lo - cursor;
                    if (gap > kTouchTol) {
                        g.gap_min = std::min(g.gap_min, gap / I.length());
                        g.gap_max = std::max(g.gap_max, gap / I.length());
                        ++g.gaps;
                    }
                    cursor = std::max(cursor, J.hi);
                }
                const double gap = I.hi - cursor;
                if (gap > kTouchTol) {
                    g.gap_min = std::min(g.gap_min, gap / I.length());
                    g.gap_max = std::max(g.gap_max, gap / I.length());
                    ++g.gaps;
                }
            }
            rep.mu_hat = std::min({rep.mu_hat, g.child_min, g.gap_min});
            rep.lambda_hat = std::max({rep.lambda_hat, g.child_max, g.gap_max});
        }
        rep.levels.push_back(g);
    }
    rep.length_decreasing = true;
    for (int n = 1; n <= ls.depth(); ++n)
        if (!(ls.total_length(n) < ls.total_length(n - 1))) rep.length_decreasing = false;
    rep.bounded = ls.depth() >= 2 && rep.mu_hat > ratio_floor && rep.lambda_hat < 1.0 - ratio_floor &&
                  rep.k_hat < k_cap;
    return rep;
}

std::size_t grid_bins(double width) {
    if (!(width > 0.0 && width <= 1.0)) throw std::invalid_argument("grid width must lie in (0,1]");
    const double n = std::round(1.0 / width);
    if (std::abs(n * width - 1.0) > 1e-9) throw std::invalid_argument("grid width must divide [0,1] evenly");
    return static_cast<std::size_t>(n);
}

MeasureHistogram::MeasureHistogram(double width) {
    const std::size_t n = grid_bins(width);
    width_ = 1.0 / static_cast<double>(n);
    weights_.assign(n, 0.0);
}

std::size_t MeasureHistogram::bin_of(double x) const {
    if (x <= 0.0) return 0;
    const auto i = static_cast<std::size_t>(x / width_);
    return std::min(i, weights_.size() - 1);
}

void MeasureHistogram::add_point(double x, double mass) { weights_[bin_of(x)] += mass; }

void MeasureHistogram::add_interval(const Interval& iv, double mass) {
    const double lo = std::clamp(iv.lo, 0.0, 1.0), hi = std::clamp(iv.hi, 0.0, 1.0);
    if (!(hi > lo)) {
        add_point(lo, mass);
        return;
    }
    const std::size_t first = bin_of(lo), last = bin_of(hi);
    if (first == last) {
        weights_[first] += mass;
        return;
    }
    const double density = mass / (hi - lo);
    for (std::size_t i = first; i <= last; ++i) {
        const double a = std::max(lo, left(i));
        const double b = i + 1 == weights_.size() ? hi : std::min(hi, left(i + 1));
        if (b > a) weights_[i] += density * (b - a);
    }
}

double MeasureHistogram::total() const {
    double s = 0.0;
    for (double w : weights_) s += w;
    return s;
}

void MeasureHistogram::normalize() {
    const double t = total();
    if (!(t > 0.0)) throw std::invalid_argument("cannot normalize an empty histogram");
    for (double& w : weights_) w /= t;
}

double MeasureHistogram::mass(const Interval& iv) const {
    const double lo = std::clamp(iv.lo, 0.0, 1.0), hi = std::clamp(iv.hi, 0.0, 1.0);
    if (!(hi > lo)) return 0.0;
    double s = 0.0;
    for (std::size_t i = bin_of(lo); i <= bin_of(hi) && i < weights_.size(); ++i) {
        const double a = std::max(lo, left(i)), b = std::min(hi, left(i) + width_);
        if (b > a) s += weights_[i] * (b - a) / width_;
    }
    return s;
}

double MeasureHistogram::max_density() const {
    double m = 0.0;
    for (double w : weights_) m = std::max(m, w / width_);
    return m;
}

double wasserstein1(const MeasureHistogram& a, const MeasureHistogram& b) {
    if (a.bins() != b.bins()) throw std::invalid_argument("histograms live on different grids");
    const double w = a.width();
    double fa = 0.0, fb = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < a.bins(); ++i) {
        const double d0 = fa - fb;
        fa += a.weights()[i];
        fb += b.weights()[i];
        const double d1 = fa - fb;
        // |linear| over one bin, split where it changes sign
        if ((d0 >= 0.0) == (d1 >= 0.0))
            sum += 0.5 * w * (std::abs(d0) + std::abs(d1));
        else
            sum += 0.5 * w * (d0 * d0 + d1 * d1) / (std::abs(d0) + std::abs(d1));
    }
    return sum;
}

PhysicalMeasure physical_measure(const LevelStructure& ls, int depth) {
    if (depth < 0 || depth > ls.depth()) throw std::invalid_argument("measure depth outside the level structure");
    PhysicalMeasure pm;
    pm.depth = depth;
    const auto N = static_cast<std::size_t>(depth);
    pm.x.assign(N + 1, 0.0);
    pm.y.assign(N + 1, 0.0);
    const Level& deep = ls.levels[N];
    pm.x[N] = pm.y[N] = 1.0 / static_cast<double>(deep.s_minus + deep.s_plus);
    for (std::size_t n = N; n-- > 0;) {
        const CombinatorialType& t = ls.levels[n + 1].type;
        if (!t.is_monotone()) throw NotMonotone("physical measure needs monotone combinatorics");
        pm.x[n] = pm.x[n + 1] + t.b() * pm.y[n + 1];
        pm.y[n] = t.a() * pm.x[n + 1] + pm.y[n + 1];
    }
    for (const auto& iv : deep.cycle_minus) pm.pieces.push_back({iv, pm.x[N], true});
    for (const auto& iv : deep.cycle_plus) pm.pieces.push_back({iv, pm.y[N], false});
    return pm;
}

double PhysicalMeasure::mass(const Interval& iv) const {
    double s = 0.0;
    for (const auto& p : pieces) {
        const double a = std::max(iv.lo, p.interval.lo), b = std::min(iv.hi, p.interval.hi);
        if (p.interval.length() <= 0.0) {
            if (iv.contains(p.interval.lo)) s += p.weight;
        } else if (b > a) {
            s += p.weight * (b - a) / p.interval.length();
        }
    }
    return s;
}

MeasureHistogram PhysicalMeasure::histogram(double width) const { return histogram(width, 0.0, 1.0); }

MeasureHistogram PhysicalMeasure::histogram(double width, double shift, double scale) const {
    MeasureHistogram h(width);
    for (const auto& p : pieces)
        h.add_interval({(p.interval.lo - shift) / scale, (p.interval.hi - shift) / scale}, p.weight);
    return h;
}

MeasureHistogram physical_measure(const LevelStructure& ls, int depth, double width) {
    return physical_measure(ls, depth).histogram(width);
}

MeasureHistogram birkhoff_measure(const LorenzMap& map, const BirkhoffOptions& opt) {
    MeasureHistogram h(opt.width);
    std::size_t completed = 0;
    for (Side start : {Side::right, Side::left}) {
        std::fill(h.weights().begin(), h.weights().end(), 0.0);
        try {
            double x = map.limit(start);
            for (std::size_t i = 0; i < opt.burn_in; ++i) x = map.eval(x);
            for (completed = 0; completed < opt.samples; ++completed) {
                h.add_point(x, 1.0);
                x = map.eval(x);
            }
            h.normalize();
            return h;
        } catch (const SingularPointHit&) {
            continue;
        }
    }
    throw CollisionAbort("both critical orbits reached the singular point", completed);
}

}  // namespace lorenz
