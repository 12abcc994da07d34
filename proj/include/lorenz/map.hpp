#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lorenz {

/// Iterates closer than this to the singular point abort instead of picking a branch.
inline constexpr double kCollisionTol = 1e-14;

/// Windows shorter than this (in base coordinates) are below working precision.
inline constexpr double kPrecisionCap = 1e3 * 2.220446049250313e-16;

/// Which one-sided limit to take when a point sits on the singular point.
enum class Side { none, left, right };

class SingularPointHit : public std::runtime_error {
public:
    explicit SingularPointHit(std::size_t index)
        : std::runtime_error("orbit hit the singular point at step " + std::to_string(index)),
          index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class MarginTooLarge : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DerivativeOutOfRange : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateWindow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    double length() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

// Left branch  u (1 - ((c - x)/c)^alpha),
// right branch (1 - v) + v ((x - c)/(1 - c))^alpha.
class StandardFamilyMap {
public:
    StandardFamilyMap(double u, double v, double c, double alpha);

    double u() const { return u_; }
    double v() const { return v_; }
    double c() const { return c_; }
    double alpha() const { return alpha_; }

    /// c1+ < c < c1-
    bool nontrivial() const { return 1.0 - v_ < c_ && c_ < u_; }
    bool endpoints_repelling() const;

    double eval(double x, Side side = Side::none) const;
    double limit(Side side) const { return side == Side::left ? u_ : 1.0 - v_; }
    double deriv(double x) const;
    double log_deriv(double x) const;
    double schwarzian(double x) const;

    /// Left-branch inverse on [0, u); right-branch inverse on (1 - v, 1].
    double inverse_left(double y) const;
    double inverse_right(double y) const;

    /// Quad-precision evaluation; deep renormalizations compose thousands of steps.
    __float128 eval_quad(__float128 x) const;
    long double log_deriv_quad(__float128 x) const;

    bool operator==(const StandardFamilyMap&) const = default;

private:
    double u_, v_, c_, alpha_;
};

// First-return style map A^{-1} o f^{T(x)} o A on the window C = [p, q] of a
// standard-family base, with T = left_time left of c and right_time right of it.
struct IteratedMapDescriptor {
    StandardFamilyMap base;
    Interval window;
    long left_time = 1;
    long right_time = 1;
};

/// A contracting Lorenz map on [0, 1]: a standard-family member or an iterated
/// descriptor over one. Evaluations are in the map's own coordinates.
class LorenzMap {
public:
    LorenzMap(const StandardFamilyMap& m);  // NOLINT(google-explicit-constructor)
    LorenzMap(const IteratedMapDescriptor& d);  // NOLINT(google-explicit-constructor)

    bool is_standard() const { return standard_; }
    const StandardFamilyMap& base() const { return base_; }
    const Interval& window() const { return window_; }
    long left_time() const { return left_time_; }
    long right_time() const { return right_time_; }
    IteratedMapDescriptor descriptor() const { return {base_, window_, left_time_, right_time_}; }

    double singular_point() const { return c_; }

    double eval(double x, Side side = Side::none) const;
    double limit(Side side) const;
    double log_deriv(double x, Side side = Side::none) const;
    double deriv(double x) const;
    double schwarzian(double x) const;

    double to_base(double x) const { return window_.lo + window_.length() * x; }
    double from_base(double y) const { return (y - window_.lo) / window_.length(); }

    /// The base map applied left_time/right_time times, base coordinates throughout.
    double step_base(double y, Side side = Side::none) const;

private:
    __float128 compose(__float128 y, bool left, long done) const;
    __float128 to_base_quad(double x) const {
        return static_cast<__float128>(window_.lo) + (static_cast<__float128>(window_.hi) - window_.lo) * x;
    }
    double from_base_quad(__float128 y) const {
        return static_cast<double>((y - window_.lo) / (static_cast<__float128>(window_.hi) - window_.lo));
    }

    StandardFamilyMap base_;
    Interval window_;
    long left_time_;
    long right_time_;
    double c_;
    bool standard_;
};

/// g = B^{-1} o f o B with B(x) = m + (1 - 2m) x.
class RestrictedMap {
public:
    const LorenzMap& base() const { return base_; }
    double margin() const { return margin_; }
    double epsilon0() const { return epsilon0_; }
    double singular_point() const { return c_; }

    double eval(double x, Side side = Side::none) const;
    double limit(Side side) const;
    double log_deriv(double x, Side side = Side::none) const;
    double deriv(double x) const;
    double schwarzian(double x) const;

    double to_base(double x) const { return margin_ + (1.0 - 2.0 * margin_) * x; }
    double from_base(double y) const { return (y - margin_) / (1.0 - 2.0 * margin_); }

    /// Inf and sup of the closure of g([0,1] \ {c}).
    double image_lo() const { return image_lo_; }
    double image_hi() const { return image_hi_; }

private:
    friend RestrictedMap restrict_rescale(const LorenzMap& map, double margin);
    RestrictedMap(LorenzMap base, double margin);

    LorenzMap base_;
    double margin_;
    double c_;
    double image_lo_ = 0.0;
    double image_hi_ = 1.0;
    double epsilon0_ = 0.0;
};

RestrictedMap restrict_rescale(const LorenzMap& map, double margin);

template <typename M>
concept IntervalMap = requires(const M& m, double x, Side s) {
    { m.singular_point() } -> std::convertible_to<double>;
    { m.eval(x, s) } -> std::convertible_to<double>;
    { m.limit(s) } -> std::convertible_to<double>;
    { m.log_deriv(x, s) } -> std::convertible_to<double>;
};

struct ItineraryWord {
    std::string symbols;
    /// Number of well-defined symbols; equals symbols.size().
    std::size_t defined_up_to = 0;
    /// The orbit entered the collision neighbourhood of c and the word stops there.
    bool truncated = false;
};

inline bool near_singular(double x, double c) { return std::abs(x - c) <= kCollisionTol; }

template <IntervalMap M>
ItineraryWord itinerary(const M& map, double x, std::size_t n, Side side = Side::none) {
    ItineraryWord w;
    const double c = map.singular_point();
    for (std::size_t j = 0; j < n; ++j) {
        Side s = Side::none;
        if (near_singular(x, c)) {
            if (j == 0 && side != Side::none) {
                s = side;
            } else {
                w.truncated = true;
                break;
            }
        }
        const bool left = s == Side::none ? x < c : s == Side::left;
        w.symbols.push_back(left ? '0' : '1');
        if (j + 1 == n) break;
        try {
            x = s == Side::none ? map.eval(x) : map.limit(s);
        } catch (const SingularPointHit&) {
            // an inner iterate of a composed map collided; the next symbol is undefined
            w.truncated = true;
            break;
        }
    }
    w.defined_up_to = w.symbols.size();
    return w;
}

/// sum_{i<n} log Df(f^i(x)), accumulated term by term.
template <IntervalMap M>
double log_deriv_sum(const M& map, double x, std::size_t n) {
    double sum = 0.0;
    const double c = map.singular_point();
    for (std::size_t i = 0; i < n; ++i) {
        if (near_singular(x, c)) throw SingularPointHit(i);
        sum += map.log_deriv(x);
        x = map.eval(x);
    }
    return sum;
}

/// Serialize as a key=value block (17 significant digits).
std::string to_key_value(const LorenzMap& map);
LorenzMap lorenz_map_from_key_value(const std::string& text);

std::string format_double(double x);

}  // namespace lorenz
