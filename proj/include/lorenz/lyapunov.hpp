#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "lorenz/attractor.hpp"

namespace lorenz {

/// (1/n) sum over i < n with f^i(x) in C_delta of log|f^i(x) - c|. Throws CollisionAbort.
double slow_recurrence(const LorenzMap& map, double x, double delta, std::size_t n);

struct RecurrenceProfile {
    double x = 0.0;
    std::vector<double> deltas;
    std::vector<std::size_t> ns;
    /// values[i][j] for deltas[i], ns[j]; all <= 0.
    std::vector<std::vector<double>> values;
    bool truncated = false;
    std::size_t completed = 0;

    /// max_j |values[i][j]|
    double envelope(std::size_t i) const;
};

/// One orbit sweep filling the whole (delta, n) table; a collision truncates the table.
RecurrenceProfile recurrence_profile(const LorenzMap& map, double x, const std::vector<double>& deltas,
                                     std::vector<std::size_t> ns);

/// #{0 <= i < n : f^i(x) in C_k}. Throws CollisionAbort.
long visit_count(const LorenzMap& map, double x, const LevelStructure& levels, int k, std::size_t n);

struct VisitAudit {
    std::size_t checked = 0;
    std::size_t violations = 0;
    /// Largest count / ((n+1)/S_k) seen.
    double worst_ratio = 0.0;
};

/// Checks count <= (n+1)/S_k for every n <= n_max and every 1 <= k <= k_max.
VisitAudit visit_audit(const LorenzMap& map, double x, const LevelStructure& levels, int k_max, std::size_t n_max);

struct ExponentTrace {
    double x = 0.0;
    std::vector<std::size_t> n;
    std::vector<double> value;  // (1/n) log Df^n(x)
    bool truncated = false;
    double first_decade_median = 0.0;  // median |value| over n <= 10
    double last_decade_median = 0.0;   // median |value| over n > n_max / 10
    /// Slope of log max_{m<=n} |log Df^m| against log n over the last two decades.
    double growth_exponent = 0.0;
    /// max |log Df^n| over the trace
    double max_abs_log = 0.0;
};

/// Sample points ceil(1.25^k), deduplicated, up to n_max.
std::vector<std::size_t> geometric_grid(std::size_t n_max, double ratio = 1.25);

ExponentTrace lyapunov_trace(const LorenzMap& map, double x, std::size_t n_max);

/// Constants of the local estimate near c: a|x-c|^(alpha-1) < Df < b|x-c|^(alpha-1) and
/// log Df >= C0 log|x-c| on U = (c - radius, c + radius).
struct LocalConstants {
    double a = 0.0;
    double b = 0.0;
    double c0 = 0.0;
    double radius = 1e-2;
};

template <IntervalMap M>
LocalConstants fit_local_constants(const M& map, double alpha, double radius = 1e-2, int samples = 400) {
    LocalConstants k;
    k.radius = radius;
    k.a = std::numeric_limits<double>::infinity();
    k.c0 = alpha - 1.0;
    const double c = map.singular_point();
    const double lo = std::log(1e-10), hi = std::log(radius);
    for (int i = 0; i < samples; ++i) {
        const double r = std::exp(lo + (hi - lo) * (i + 0.5) / samples);
        for (double x : {c - r, c + r}) {
            const double ld = map.log_deriv(x);
            const double lr = std::log(std::abs(x - c));  // realized distance, not r
            const double scaled = std::exp(ld - (alpha - 1.0) * lr);
            k.a = std::min(k.a, scaled);
            k.b = std::max(k.b, scaled);
            k.c0 = std::max(k.c0, ld / lr);
        }
    }
    // strict inequalities
    k.a *= 1.0 - 1e-9;
    k.b *= 1.0 + 1e-9;
    return k;
}

/// rho < |C_{k+1}^pm| / |C_k^pm| < rho' and |C_k^pm| >= C1 rho^k, measured on the audited levels.
struct GeometryConstants {
    double rho = 0.0;
    double rho_prime = 0.0;
    double c1 = 0.0;
    int depth = 0;
};

GeometryConstants fit_geometry_constants(const LevelStructure& levels);

/// Largest k <= depth with C_delta inside C_k, or 0 if there is none.
int containing_level(const LevelStructure& levels, double delta);

/// -log rho sum_{k>=k0} (k+1)/2^(k-1) - log C1 sum_{k>=k0} 1/2^(k-1)
double recurrence_bound(const GeometryConstants& g, int k0);

/// Integral of log Df over [lo, hi] (closed form, either branch, may straddle c).
double log_df_integral(const StandardFamilyMap& f, double lo, double hi);
/// Integral of |log Df| over [lo, hi].
double abs_log_df_integral(const StandardFamilyMap& f, double lo, double hi);

/// Integral of psi_n = |log Df| 1_{[0,1] \ C_n} against the histogram density.
double truncated_log_df_integral(const StandardFamilyMap& f, const MeasureHistogram& measure,
                                 const LevelStructure& levels, int n);

struct IntegrabilityReport {
    int n0 = 0;
    double c2 = 0.0;
    std::vector<double> integrals;  // n = 0..depth
    /// Integral over C_k \ C_{k+1} and the local-estimate bound (2/S_k) C0 (-log min|C_{k+1}^pm|).
    std::vector<double> increments;
    std::vector<double> increment_bounds;
    bool nondecreasing = false;
    bool bounded = false;
};

IntegrabilityReport integrability_report(const StandardFamilyMap& f, const MeasureHistogram& measure,
                                         const LevelStructure& levels, const LocalConstants& local,
                                         const GeometryConstants& geom);

struct ChiEstimate {
    double value = 0.0;
    double error = 0.0;
    bool contains_zero() const { return std::abs(value) <= error; }
};

/// Quadrature of log Df over the depth-N pieces of the physical measure. The error bar adds
/// the oscillation of log Df over each piece, the unknown split of mass between the minus and
/// plus cycles, and a bound for the part inside C_N.
ChiEstimate chi_mu_estimate(const StandardFamilyMap& f, const PhysicalMeasure& measure, const LevelStructure& levels,
                            const LocalConstants& local, const GeometryConstants& geom);

/// Bin quadrature with oscillation error; bins meeting the collision tolerance around c are
/// dropped and their mass spread proportionally over the rest.
ChiEstimate chi_mu_estimate(const StandardFamilyMap& f, const MeasureHistogram& measure);

}  // namespace lorenz
