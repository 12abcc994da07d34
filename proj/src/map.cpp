#include "lorenz/map.hpp"

#include <quadmath.h>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace lorenz {

StandardFamilyMap::StandardFamilyMap(double u, double v, double c, double alpha)
    : u_(u), v_(v), c_(c), alpha_(alpha) {
    auto open_unit = [](double t) { return t > 0.0 && t < 1.0; };
    if (!open_unit(c)) throw std::invalid_argument("singular point c must lie in (0,1)");
    if (!open_unit(u) || !open_unit(v))
        throw std::invalid_argument("critical value parameters u, v must lie in (0,1)");
    if (!(alpha > 1.0)) throw std::invalid_argument("critical exponent must exceed 1");
}

bool StandardFamilyMap::endpoints_repelling() const {
    return u_ * alpha_ / c_ > 1.0 && v_ * alpha_ / (1.0 - c_) > 1.0;
}

double StandardFamilyMap::eval(double x, Side side) const {
    if (near_singular(x, c_)) {
        if (side == Side::none) throw SingularPointHit(0);
        return limit(side);
    }
    if (x < c_) return u_ * (1.0 - std::pow((c_ - x) / c_, alpha_));
    return (1.0 - v_) + v_ * std::pow((x - c_) / (1.0 - c_), alpha_);
}

namespace {

__float128 power(__float128 t, double alpha) {
    const int k = static_cast<int>(alpha);
    if (alpha == static_cast<double>(k) && k <= 16) {
        __float128 r = 1, b = t;
        for (int e = k; e > 0; e >>= 1, b *= b)
            if (e & 1) r *= b;
        return r;
    }
    return powq(t, static_cast<__float128>(alpha));
}

}  // namespace

__float128 StandardFamilyMap::eval_quad(__float128 x) const {
    const __float128 c = c_;
    if (x < c) return u_ * (1 - power((c - x) / c, alpha_));
    return (1 - static_cast<__float128>(v_)) + v_ * power((x - c) / (1 - c), alpha_);
}

long double StandardFamilyMap::log_deriv_quad(__float128 x) const {
    const long double a = alpha_;
    // distance to c formed in quad so its relative precision survives the narrowing
    const __float128 c = c_;
    if (x < c) return std::log(u_ * a / c_) + (a - 1.0L) * std::log(static_cast<long double>((c - x) / c));
    return std::log(v_ * a / (1.0L - c_)) + (a - 1.0L) * std::log(static_cast<long double>((x - c) / (1 - c)));
}

double StandardFamilyMap::deriv(double x) const {
    if (near_singular(x, c_)) throw SingularPointHit(0);
    if (x < c_) return u_ * alpha_ * std::pow((c_ - x) / c_, alpha_ - 1.0) / c_;
    return v_ * alpha_ * std::pow((x - c_) / (1.0 - c_), alpha_ - 1.0) / (1.0 - c_);
}

double StandardFamilyMap::log_deriv(double x) const {
    if (near_singular(x, c_)) throw SingularPointHit(0);
    if (x < c_) return std::log(u_ * alpha_ / c_) + (alpha_ - 1.0) * std::log((c_ - x) / c_);
    return std::log(v_ * alpha_ / (1.0 - c_)) + (alpha_ - 1.0) * std::log((x - c_) / (1.0 - c_));
}

double StandardFamilyMap::schwarzian(double x) const {
    if (near_singular(x, c_)) throw SingularPointHit(0);
    const double d = x - c_;
    return (1.0 - alpha_ * alpha_) / (2.0 * d * d);
}

double StandardFamilyMap::inverse_left(double y) const {
    const double t = std::clamp(1.0 - y / u_, 0.0, 1.0);
    return c_ - c_ * std::pow(t, 1.0 / alpha_);
}

double StandardFamilyMap::inverse_right(double y) const {
    const double t = std::clamp((y - (1.0 - v_)) / v_, 0.0, 1.0);
    return c_ + (1.0 - c_) * std::pow(t, 1.0 / alpha_);
}

LorenzMap::LorenzMap(const StandardFamilyMap& m)
    : base_(m), window_{0.0, 1.0}, left_time_(1), right_time_(1), c_(m.c()), standard_(true) {}

LorenzMap::LorenzMap(const IteratedMapDescriptor& d)
    : base_(d.base),
      window_(d.window),
      left_time_(d.left_time),
      right_time_(d.right_time),
      c_(0.0),
      standard_(false) {
    if (!(d.window.lo < d.base.c() && d.base.c() < d.window.hi))
        throw std::invalid_argument("descriptor window must contain the singular point");
    if (d.left_time < 1 || d.right_time < 1)
        throw std::invalid_argument("descriptor return times must be positive");
    if (d.window.length() < kPrecisionCap) throw DegenerateWindow("window below precision cap");
    c_ = from_base(base_.c());
}

double LorenzMap::step_base(double y, Side side) const {
    const double c = base_.c();
    if (near_singular(y, c)) {
        if (side == Side::none) throw SingularPointHit(0);
        return static_cast<double>(compose(base_.limit(side), side == Side::left, 1));
    }
    return static_cast<double>(compose(y, y < c, 0));
}

// The branch of the first step is fixed by the caller, so a point that is clear of c in
// its own coordinates is never rejected for sitting within tolerance of c in base ones.
__float128 LorenzMap::compose(__float128 y, bool left, long done) const {
    const __float128 c = base_.c();
    const long total = left ? left_time_ : right_time_;
    for (long steps = done; steps < total; ++steps) {
        const __float128 d = y - c;
        if (steps > 0 && (d < 0 ? -d : d) <= kCollisionTol) throw SingularPointHit(static_cast<std::size_t>(steps));
        y = base_.eval_quad(y);
    }
    return y;
}

double LorenzMap::eval(double x, Side side) const {
    if (near_singular(x, c_)) {
        if (side == Side::none) throw SingularPointHit(0);
        return limit(side);
    }
    if (standard_) return base_.eval(x);
    return from_base_quad(compose(to_base_quad(x), x < c_, 0));
}

double LorenzMap::limit(Side side) const {
    if (standard_) return base_.limit(side);
    if (side == Side::none) throw std::invalid_argument("limit needs a side");
    return from_base_quad(compose(base_.limit(side), side == Side::left, 1));
}

double LorenzMap::log_deriv(double x, Side side) const {
    if (near_singular(x, c_)) {
        if (side == Side::none) throw SingularPointHit(0);
        return -std::numeric_limits<double>::infinity();
    }
    if (standard_) return base_.log_deriv(x);
    const __float128 c = base_.c();
    __float128 y = to_base_quad(x);
    const long total = x < c_ ? left_time_ : right_time_;
    long double sum = 0.0L;
    for (long i = 0; i < total; ++i) {
        const __float128 d = y - c;
        if (i > 0 && (d < 0 ? -d : d) <= kCollisionTol) throw SingularPointHit(static_cast<std::size_t>(i));
        sum += base_.log_deriv_quad(y);
        y = base_.eval_quad(y);
    }
    return static_cast<double>(sum);
}

double LorenzMap::deriv(double x) const {
    const double ld = log_deriv(x);
    if (ld < std::log(std::numeric_limits<double>::min()) ||
        ld > std::log(std::numeric_limits<double>::max()))
        throw DerivativeOutOfRange("derivative outside double range, log Df = " + format_double(ld));
    return std::exp(ld);
}

double LorenzMap::schwarzian(double x) const {
    if (near_singular(x, c_)) throw SingularPointHit(0);
    if (standard_) return base_.schwarzian(x);
    // S(F) = sum_i Sf(y_i) (Df^i(y_0))^2 for F = f^T, then S(A^-1 F A) = SF(A x) |C|^2.
    // Every term is negative, so the sum is assembled as -exp(logsumexp(...)).
    const __float128 c = base_.c();
    __float128 y = to_base_quad(x);
    const long total = x < c_ ? left_time_ : right_time_;
    const double log_len2 = 2.0 * std::log(window_.length());
    long double log_d = 0.0L;
    double lse = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < total; ++i) {
        const __float128 d = y - c;
        const double dist = static_cast<double>(d < 0 ? -d : d);
        if (i > 0 && dist <= kCollisionTol) throw SingularPointHit(static_cast<std::size_t>(i));
        const double a = base_.alpha();
        const double log_s = std::log((a * a - 1.0) / 2.0) - 2.0 * std::log(dist);
        const double term = log_s + 2.0 * static_cast<double>(log_d) + log_len2;
        const double hi = std::max(lse, term);
        lse = hi + std::log(std::exp(lse - hi) + std::exp(term - hi));
        log_d += base_.log_deriv_quad(y);
        y = base_.eval_quad(y);
    }
    return -std::exp(lse);
}

RestrictedMap::RestrictedMap(LorenzMap base, double margin)
    : base_(std::move(base)), margin_(margin), c_(0.0) {
    c_ = from_base(base_.singular_point());
}

RestrictedMap restrict_rescale(const LorenzMap& map, double margin) {
    if (!(margin > 0.0 && margin < 0.5)) throw std::invalid_argument("margin must lie in (0, 1/2)");
    if (!(margin < map.singular_point() && map.singular_point() < 1.0 - margin))
        throw MarginTooLarge("margin excludes the singular point");
    RestrictedMap g(map, margin);
    const double values[] = {g.eval(0.0), g.limit(Side::left), g.limit(Side::right), g.eval(1.0)};
    g.image_lo_ = *std::min_element(std::begin(values), std::end(values));
    g.image_hi_ = *std::max_element(std::begin(values), std::end(values));
    g.epsilon0_ = std::min(g.image_lo_, 1.0 - g.image_hi_);
    if (!(g.epsilon0_ > 0.0))
        throw MarginTooLarge("image of the rescaled map is not inside (0,1) for margin " +
                             format_double(margin));
    return g;
}

double RestrictedMap::eval(double x, Side side) const {
    if (near_singular(x, c_)) {
        if (side == Side::none) throw SingularPointHit(0);
        return limit(side);
    }
    return from_base(base_.eval(to_base(x)));
}

double RestrictedMap::limit(Side side) const { return from_base(base_.limit(side)); }

double RestrictedMap::log_deriv(double x, Side side) const {
    if (near_singular(x, c_)) {
        if (side == Side::none) throw SingularPointHit(0);
        return -std::numeric_limits<double>::infinity();
    }
    return base_.log_deriv(to_base(x));
}

double RestrictedMap::deriv(double x) const { return std::exp(log_deriv(x)); }

double RestrictedMap::schwarzian(double x) const {
    const double s = 1.0 - 2.0 * margin_;
    return base_.schwarzian(to_base(x)) * s * s;
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string to_key_value(const LorenzMap& map) {
    std::ostringstream os;
    const auto& b = map.base();
    if (map.is_standard()) {
        os << "family=standard\n";
        os << "u=" << format_double(b.u()) << "\n";
        os << "v=" << format_double(b.v()) << "\n";
        os << "c=" << format_double(b.c()) << "\n";
        os << "alpha=" << format_double(b.alpha()) << "\n";
    } else {
        os << "family=iterated\n";
        os << "base.u=" << format_double(b.u()) << "\n";
        os << "base.v=" << format_double(b.v()) << "\n";
        os << "base.c=" << format_double(b.c()) << "\n";
        os << "base.alpha=" << format_double(b.alpha()) << "\n";
        os << "window.p=" << format_double(map.window().lo) << "\n";
        os << "window.q=" << format_double(map.window().hi) << "\n";
        os << "left_time=" << map.left_time() << "\n";
        os << "right_time=" << map.right_time() << "\n";
    }
    return os.str();
}

namespace {

std::map<std::string, std::string> parse_block(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("malformed line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

double need_double(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("missing key: " + key);
    std::size_t used = 0;
    const double x = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("bad number for " + key);
    return x;
}

}  // namespace

LorenzMap lorenz_map_from_key_value(const std::string& text) {
    const auto kv = parse_block(text);
    const auto fam = kv.find("family");
    if (fam == kv.end()) throw std::invalid_argument("missing key: family");
    if (fam->second == "standard") {
        return StandardFamilyMap(need_double(kv, "u"), need_double(kv, "v"), need_double(kv, "c"),
                                 need_double(kv, "alpha"));
    }
    if (fam->second == "iterated") {
        StandardFamilyMap base(need_double(kv, "base.u"), need_double(kv, "base.v"),
                               need_double(kv, "base.c"), need_double(kv, "base.alpha"));
        IteratedMapDescriptor d{base,
                                {need_double(kv, "window.p"), need_double(kv, "window.q")},
                                static_cast<long>(need_double(kv, "left_time")),
                                static_cast<long>(need_double(kv, "right_time"))};
        return d;
    }
    throw std::invalid_argument("unknown family: " + fam->second);
}

}  // namespace lorenz
