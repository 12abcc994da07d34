#include "lorenz/renorm.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <sstream>

namespace lorenz {

CombinatorialType CombinatorialType::monotone(int a, int b) {
    if (a < 1 || b < 1) throw std::invalid_argument("monotone type needs a, b >= 1");
    return {"0" + std::string(static_cast<std::size_t>(a), '1'),
            "1" + std::string(static_cast<std::size_t>(b), '0')};
}

bool CombinatorialType::is_monotone() const {
    if (omega_minus.size() < 2 || omega_plus.size() < 2) return false;
    if (omega_minus[0] != '0' || omega_plus[0] != '1') return false;
    return omega_minus.find('0', 1) == std::string::npos &&
           omega_plus.find('1', 1) == std::string::npos;
}

std::string CombinatorialType::to_string() const {
    if (is_monotone()) return "(" + std::to_string(a()) + "," + std::to_string(b()) + ")";
    return "(" + omega_minus + "," + omega_plus + ")";
}

std::string to_string(RenormFailure f) {
    switch (f) {
        case RenormFailure::non_triviality: return "non-triviality";
        case RenormFailure::branch_missing: return "branch missing";
        case RenormFailure::root_missing: return "root missing";
        case RenormFailure::return_condition: return "return condition";
        case RenormFailure::disjointness: return "disjointness";
        case RenormFailure::containment: return "containment";
        case RenormFailure::degenerate_window: return "degenerate window";
        case RenormFailure::collision: return "collision";
    }
    return "unknown";
}

namespace {

// Continuous extension of the branch named by `symbol`: a point on (or past) c
// takes that branch's one-sided limit.
double branch_eval(const LorenzMap& map, double x, char symbol) {
    const double c = map.singular_point();
    if (symbol == '0') {
        if (x >= c || near_singular(x, c)) return map.limit(Side::left);
    } else {
        if (x <= c || near_singular(x, c)) return map.limit(Side::right);
    }
    return map.eval(x);
}

// Largest index reachable by bisection before the bracket collapses to adjacent doubles.
constexpr int kMaxBisection = 1100;

template <typename F>
double bisect_increasing(F&& g, double lo, double hi, double target) {
    for (int it = 0; it < kMaxBisection; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        if (g(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return lo + 0.5 * (hi - lo);
}

double inverse_branch(const LorenzMap& map, char symbol, double y) {
    const double c = map.singular_point();
    if (map.is_standard())
        return symbol == '0' ? map.base().inverse_left(y) : map.base().inverse_right(y);
    if (symbol == '0') {
        if (y <= map.eval(0.0)) return 0.0;
        if (y >= map.limit(Side::left)) return c;
        return bisect_increasing([&](double x) { return branch_eval(map, x, '0'); }, 0.0, c, y);
    }
    if (y <= map.limit(Side::right)) return c;
    if (y >= map.eval(1.0)) return 1.0;
    return bisect_increasing([&](double x) { return branch_eval(map, x, '1'); }, c, 1.0, y);
}

Interval branch_image(const LorenzMap& map, char symbol) {
    if (symbol == '0') return {map.eval(0.0), map.limit(Side::left)};
    return {map.limit(Side::right), map.eval(1.0)};
}

bool interiors_overlap(const Interval& x, const Interval& y) {
    return std::max(x.lo, y.lo) < std::min(x.hi, y.hi);
}

Interval hull(double a, double b) { return {std::min(a, b), std::max(a, b)}; }

}  // namespace

double iterate_word(const LorenzMap& map, double x, const std::string& word) {
    for (char s : word) x = branch_eval(map, x, s);
    return x;
}

Interval find_branch(const LorenzMap& map, const std::string& word) {
    if (word.empty()) return {0.0, 1.0};
    const double c = map.singular_point();
    auto domain = [c](char s) { return s == '0' ? Interval{0.0, c} : Interval{c, 1.0}; };
    Interval cur = domain(word.back());
    for (std::size_t k = word.size() - 1; k-- > 0;) {
        const char s = word[k];
        const Interval img = branch_image(map, s);
        const double lo = std::max(cur.lo, img.lo);
        const double hi = std::min(cur.hi, img.hi);
        if (!(lo < hi))
            throw NoSuchBranch("no branch with itinerary " + word + " (empty at symbol " +
                               std::to_string(k) + ")");
        cur = {inverse_branch(map, s, lo), inverse_branch(map, s, hi)};
        if (!(cur.lo < cur.hi)) throw NoSuchBranch("branch with itinerary " + word + " collapsed");
    }
    return cur;
}

double find_periodic_boundary(const LorenzMap& map, const std::string& word) {
    const Interval br = find_branch(map, word);
    auto h = [&](double x) { return iterate_word(map, x, word) - x; };
    double lo = br.lo, hi = br.hi;
    const double hlo = h(lo), hhi = h(hi);
    if (hlo == 0.0) return lo;
    if (hhi == 0.0) return hi;
    if ((hlo < 0.0) == (hhi < 0.0))
        throw NoRootInBranch("f^" + std::to_string(word.size()) + " - id has constant sign on branch " +
                             word);
    const bool rising = hlo < 0.0;
    for (int it = 0; it < kMaxBisection; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        const double hm = h(mid);
        if (hm == 0.0) return mid;
        if ((hm < 0.0) == rising)
            lo = mid;
        else
            hi = mid;
    }
    return std::abs(h(lo)) <= std::abs(h(hi)) ? lo : hi;
}

RenormOutcome find_renorm_interval(const LorenzMap& map, int a, int b) {
    const CombinatorialType type = CombinatorialType::monotone(a, b);
    const double c = map.singular_point();
    auto fail = [&](RenormFailure r, std::string detail) -> RenormOutcome {
        return NotRenormalizable{r, type.to_string() + ": " + std::move(detail)};
    };
    try {
        const double left_value = map.limit(Side::left);
        const double right_value = map.limit(Side::right);
        if (!(right_value < c && c < left_value)) return fail(RenormFailure::non_triviality, "map is trivial");

        // Forward orbits of the critical values along 1^a and 0^b; these are the return
        // values Pf(c-) and Pf(c+) and the far ends of f^i(C-) and f^i(C+).
        std::vector<double> left_orbit{left_value};
        for (int j = 1; j <= a; ++j) {
            const double y = left_orbit.back();
            if (near_singular(y, c)) return fail(RenormFailure::collision, "critical orbit hits c");
            // crossing at the first step means c1- sits too close to c for any return
            if (y < c && j == 2) return fail(RenormFailure::non_triviality, "c1- too close to c, f(c1-) < c");
            if (y < c) return fail(RenormFailure::branch_missing, "c1- leaves the right branch early");
            left_orbit.push_back(map.eval(y));
        }
        std::vector<double> right_orbit{right_value};
        for (int j = 1; j <= b; ++j) {
            const double y = right_orbit.back();
            if (near_singular(y, c)) return fail(RenormFailure::collision, "critical orbit hits c");
            if (y > c && j == 2) return fail(RenormFailure::non_triviality, "c1+ too close to c, f(c1+) > c");
            if (y > c) return fail(RenormFailure::branch_missing, "c1+ leaves the left branch early");
            right_orbit.push_back(map.eval(y));
        }
        const double pf_left = left_orbit.back();
        const double pf_right = right_orbit.back();
        if (!(pf_left > c) || !(pf_right < c))
            return fail(RenormFailure::non_triviality, "return map would be trivial");

        double p = 0.0, q = 1.0;
        try {
            p = find_periodic_boundary(map, type.omega_minus);
            q = find_periodic_boundary(map, type.omega_plus);
        } catch (const NoSuchBranch& e) {
            return fail(RenormFailure::branch_missing, e.what());
        } catch (const NoRootInBranch& e) {
            return fail(RenormFailure::root_missing, e.what());
        }
        if (!(p < c && c < q)) return fail(RenormFailure::root_missing, "boundary points on the wrong side");
        if (pf_left > q || pf_right < p) return fail(RenormFailure::return_condition, "Pf(C) not inside C");

        const Interval bounds{inverse_branch(map, '0', c), inverse_branch(map, '1', c)};
        if (p < bounds.lo || q > bounds.hi)
            return fail(RenormFailure::containment, "C not inside the preimages of c");

        const Interval window{p, q};
        std::vector<Interval> left_images, right_images;
        double x = p;
        for (int i = 1; i <= a; ++i) {
            x = branch_eval(map, x, type.omega_minus[static_cast<std::size_t>(i - 1)]);
            left_images.push_back(hull(x, left_orbit[static_cast<std::size_t>(i - 1)]));
        }
        x = q;
        for (int i = 1; i <= b; ++i) {
            x = branch_eval(map, x, type.omega_plus[static_cast<std::size_t>(i - 1)]);
            right_images.push_back(hull(right_orbit[static_cast<std::size_t>(i - 1)], x));
        }
        for (const auto* images : {&left_images, &right_images}) {
            for (std::size_t i = 0; i < images->size(); ++i) {
                if (interiors_overlap((*images)[i], window))
                    return fail(RenormFailure::disjointness, "f^i(C) meets C");
                for (std::size_t j = i + 1; j < images->size(); ++j)
                    if (interiors_overlap((*images)[i], (*images)[j]))
                        return fail(RenormFailure::disjointness, "forward images overlap");
            }
        }

        const double base_len = map.window().length() * (q - p);
        if (base_len < kPrecisionCap) return fail(RenormFailure::degenerate_window, "window below precision cap");

        auto time_of = [&](const std::string& w) {
            long t = 0;
            for (char s : w) t += s == '0' ? map.left_time() : map.right_time();
            return t;
        };
        RenormResult r{
            .window = window,
            .left_return = a + 1,
            .right_return = b + 1,
            .type = type,
            .renormalized = IteratedMapDescriptor{map.base(), {map.to_base(p), map.to_base(q)},
                                                  time_of(type.omega_minus), time_of(type.omega_plus)},
            .left_residual = std::abs(iterate_word(map, p, type.omega_minus) - p),
            .right_residual = std::abs(iterate_word(map, q, type.omega_plus) - q),
            .preimage_bounds = bounds,
        };
        const LorenzMap rf(r.renormalized);
        r.rescaled_singular_point = rf.singular_point();
        r.rescaled_left_value = rf.limit(Side::left);
        r.rescaled_right_value = rf.limit(Side::right);
        return r;
    } catch (const SingularPointHit& e) {
        return fail(RenormFailure::collision, e.what());
    } catch (const DegenerateWindow& e) {
        return fail(RenormFailure::degenerate_window, e.what());
    }
}

double PrerenormalizedMap::eval(double x, Side side) const {
    const double c = map_.singular_point();
    const bool left = near_singular(x, c) ? side == Side::left : x < c;
    const long n = left ? result_.left_return : result_.right_return;
    double y = map_.eval(x, side);
    for (long i = 1; i < n; ++i) y = map_.eval(y);
    return y;
}

PrerenormalizedMap prerenormalization(const LorenzMap& map, const RenormResult& result) {
    return {map, result};
}

IteratedMapDescriptor renormalize(const LorenzMap& map, const RenormResult& result) {
    (void)map;
    if (result.renormalized.window.length() < kPrecisionCap)
        throw DegenerateWindow("renormalization window below precision cap");
    return result.renormalized;
}

std::variant<DetectedType, NotRenormalizable> detect_type(const LorenzMap& map, int max_len) {
    std::optional<NotRenormalizable> first;
    for (int total = 2; total + 2 <= max_len; ++total) {
        for (int a = 1; a < total; ++a) {
            auto out = find_renorm_interval(map, a, total - a);
            if (auto* r = std::get_if<RenormResult>(&out)) return DetectedType{r->type, *r};
            if (!first) first = std::get<NotRenormalizable>(out);
        }
    }
    if (!first) return NotRenormalizable{RenormFailure::non_triviality, "word-length budget below 4"};
    first->detail = "no monotone type with |w-|+|w+| <= " + std::to_string(max_len) + "; " + first->detail;
    return *first;
}

std::vector<MonotoneStep> parse_type_sequence(const std::string& text) {
    std::vector<MonotoneStep> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.empty()) continue;
        int repeat = 1;
        if (const auto x = item.find('x'); x != std::string::npos) {
            repeat = std::stoi(item.substr(x + 1));
            item = item.substr(0, x);
        }
        const auto comma = item.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("type must look like a,b: " + item);
        MonotoneStep s{std::stoi(item.substr(0, comma)), std::stoi(item.substr(comma + 1))};
        if (s.a < 1 || s.b < 1 || repeat < 0) throw std::invalid_argument("bad monotone type: " + item);
        for (int i = 0; i < repeat; ++i) out.push_back(s);
    }
    return out;
}

Cascade certify_cascade(const LorenzMap& map, const std::vector<MonotoneStep>& types) {
    Cascade out;
    LorenzMap current = map;
    for (const auto& t : types) {
        auto r = find_renorm_interval(current, t.a, t.b);
        if (auto* nr = std::get_if<NotRenormalizable>(&r)) {
            out.failure = *nr;
            return out;
        }
        out.levels.push_back(std::get<RenormResult>(r));
        current = LorenzMap(out.levels.back().renormalized);
    }
    out.complete = true;
    return out;
}

std::string target_kneading(const std::vector<MonotoneStep>& types, bool minus, std::size_t max_len) {
    std::string w = minus ? "0" : "1";
    for (std::size_t k = types.size(); k-- > 0;) {
        const auto t = CombinatorialType::monotone(types[k].a, types[k].b);
        std::string next;
        for (char s : w) {
            next += s == '0' ? t.omega_minus : t.omega_plus;
            if (next.size() >= max_len) break;
        }
        w = std::move(next);
        if (w.size() > max_len) w.resize(max_len);
    }
    return w;
}

KneadingComparison compare_kneading(const StandardFamilyMap& f, Side side, const std::string& target) {
    KneadingComparison out;
    const double c = f.c();
    double x = f.limit(side);
    for (std::size_t j = 1; j < target.size(); ++j) {
        if (near_singular(x, c)) {
            out.inconclusive = true;
            return out;
        }
        const char sym = x < c ? '0' : '1';
        if (sym != target[j]) {
            out.sign = sym > target[j] ? 1 : -1;
            return out;
        }
        ++out.agree;
        x = f.eval(x);
    }
    return out;
}

namespace {

struct Rect {
    double u0, u1, v0, v1;
    double diameter() const { return std::hypot(u1 - u0, v1 - v0); }
    double uc() const { return 0.5 * (u0 + u1); }
    double vc() const { return 0.5 * (v0 + v1); }
};

struct PointScore {
    KneadingComparison minus, plus;
    std::size_t agree() const { return std::min(minus.agree, plus.agree); }
};

// Both critical itineraries increase with u and decrease with v (f is pointwise
// increasing in u and decreasing in v), so on a rectangle the extremes sit at the
// corners (u0, v1) and (u1, v0).
bool may_contain(const PointScore& lowest, const PointScore& highest) {
    auto ok_low = [](const KneadingComparison& k) { return k.inconclusive || k.sign <= 0; };
    auto ok_high = [](const KneadingComparison& k) { return k.inconclusive || k.sign >= 0; };
    return ok_low(lowest.minus) && ok_low(lowest.plus) && ok_high(highest.minus) && ok_high(highest.plus);
}

constexpr int kMinLookahead = 2;

class Tuner {
public:
    Tuner(double c, double alpha, const std::vector<MonotoneStep>& target, const TuneOptions& opt)
        : c_(c), alpha_(alpha), target_(target), opt_(opt) {
        // A kneading prefix that stops at the target depth does not force the return
        // condition Pf(C) in C, so the search always steers at least two levels further.
        std::vector<MonotoneStep> extended = target;
        const int lookahead = std::max(opt.lookahead, kMinLookahead);
        for (int i = 0; i < lookahead && !target.empty(); ++i) extended.push_back(target.back());
        // Deep levels of the extended target are unreachable in double precision anyway.
        constexpr std::size_t kMaxWord = 1u << 17;
        minus_ = target_kneading(extended, true, kMaxWord);
        plus_ = target_kneading(extended, false, kMaxWord);
        long sm = 1, sp = 1;
        for (const auto& t : extended) {
            const long nm = sm + t.a * sp, np = t.b * sm + sp;
            sm = nm;
            sp = np;
            level_lengths_.push_back(std::min(sm, sp));
        }
    }

    TuneResult run();

private:
    const PointScore& score(double u, double v);
    void prefetch(const std::vector<std::pair<double, double>>& pts);
    PointScore evaluate(double u, double v) const {
        const StandardFamilyMap f(u, v, c_, alpha_);
        return {compare_kneading(f, Side::left, minus_), compare_kneading(f, Side::right, plus_)};
    }
    bool certify(double u, double v, TuneResult& out);
    int steered_depth(const PointScore& s) const {
        int d = 0;
        for (long len : level_lengths_)
            if (static_cast<long>(s.agree()) + 1 >= len) ++d;
        return d;
    }

    double c_, alpha_;
    std::vector<MonotoneStep> target_;
    TuneOptions opt_;
    std::string minus_, plus_;
    std::vector<long> level_lengths_;
    std::map<std::pair<double, double>, PointScore> cache_;
    std::int64_t used_ = 0;
};

void Tuner::prefetch(const std::vector<std::pair<double, double>>& pts) {
    std::vector<std::pair<double, double>> todo;
    for (const auto& p : pts)
        if (!cache_.count(p) && std::find(todo.begin(), todo.end(), p) == todo.end()) todo.push_back(p);
    if (opt_.threads <= 1 || todo.size() < 2) return;
    std::vector<std::future<PointScore>> jobs;
    for (const auto& p : todo) jobs.push_back(std::async(std::launch::async, [this, p] { return evaluate(p.first, p.second); }));
    for (std::size_t i = 0; i < todo.size(); ++i) {
        cache_.emplace(todo[i], jobs[i].get());
        ++used_;
    }
}

const PointScore& Tuner::score(double u, double v) {
    const auto key = std::make_pair(u, v);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ++used_;
    return cache_.emplace(key, evaluate(u, v)).first->second;
}

bool Tuner::certify(double u, double v, TuneResult& out) {
    ++used_;
    out.u = u;
    out.v = v;
    out.cascade.clear();
    out.certified_depth = 0;
    LorenzMap current = StandardFamilyMap(u, v, c_, alpha_);
    for (const auto& t : target_) {
        auto det = detect_type(current, t.a + t.b + 2);
        auto* d = std::get_if<DetectedType>(&det);
        if (!d || d->type != CombinatorialType::monotone(t.a, t.b)) return false;
        out.cascade.push_back(d->result);
        ++out.certified_depth;
        try {
            current = LorenzMap(d->result.renormalized);
        } catch (const DegenerateWindow&) {
            return out.certified_depth == static_cast<int>(target_.size());
        }
    }
    return true;
}

TuneResult Tuner::run() {
    constexpr double kEdge = 1e-9;
    const Rect root{c_ + kEdge, 1.0 - kEdge, 1.0 - c_ + kEdge, 1.0 - kEdge};
    TuneResult best;
    best.u = root.uc();
    best.v = root.vc();
    best.diameter = root.diameter();
    if (target_.empty()) {
        best.certifications = 0;
        return best;
    }
    std::size_t best_agree = 0;
    std::vector<Rect> stack{root};
    while (!stack.empty()) {
        if (used_ >= opt_.budget) break;
        const Rect r = stack.back();
        stack.pop_back();
        if (r.diameter() <= opt_.target_diameter) {
            TuneResult cand;
            cand.diameter = r.diameter();
            if (certify(r.uc(), r.vc(), cand)) {
                cand.certifications = used_;
                cand.steered_depth = steered_depth(score(r.uc(), r.vc()));
                cand.certifications = used_;
                return cand;
            }
            if (cand.certified_depth > best.certified_depth) best = cand;
            continue;
        }
        const double um = r.uc(), vm = r.vc();
        const Rect kids[4] = {{r.u0, um, r.v0, vm}, {um, r.u1, r.v0, vm}, {r.u0, um, vm, r.v1}, {um, r.u1, vm, r.v1}};
        std::vector<std::pair<double, double>> pts;
        for (const auto& k : kids) {
            pts.emplace_back(k.u0, k.v1);
            pts.emplace_back(k.u1, k.v0);
            pts.emplace_back(k.uc(), k.vc());
        }
        prefetch(pts);
        std::vector<std::pair<std::size_t, Rect>> keep;
        for (const auto& k : kids) {
            const PointScore lo = score(k.u0, k.v1);
            const PointScore hi = score(k.u1, k.v0);
            if (!may_contain(lo, hi)) continue;
            const std::size_t a = score(k.uc(), k.vc()).agree();
            keep.emplace_back(a, k);
            if (a >= best_agree && best.certified_depth == 0) {
                best_agree = a;
                best.u = k.uc();
                best.v = k.vc();
                best.diameter = k.diameter();
            }
        }
        std::stable_sort(keep.begin(), keep.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        for (const auto& k : keep) stack.push_back(k.second);
    }
    if (best.cascade.empty()) certify(best.u, best.v, best);
    best.certifications = used_;
    best.steered_depth = steered_depth(score(best.u, best.v));
    throw TuningFailed(best.certified_depth, best);
}

}  // namespace

TuneResult tune_parameters(double c, double alpha, const std::vector<MonotoneStep>& target,
                           const TuneOptions& options) {
    if (!(c > 0.0 && c < 1.0) || !(alpha > 1.0)) throw std::invalid_argument("tuner needs c in (0,1), alpha > 1");
    if (options.budget < 1 || !(options.target_diameter > 0.0) || options.lookahead < 0)
        throw std::invalid_argument("bad tuner options");
    return Tuner(c, alpha, target, options).run();
}

}  // namespace lorenz
