#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorenz/map.hpp"
#include "lorenz/renorm.hpp"

namespace lorenz {

class PrecisionCapExceeded : public std::runtime_error {
public:
    PrecisionCapExceeded(int depth, double length)
        : std::runtime_error("level " + std::to_string(depth) + " window " + format_double(length) +
                             " is below the precision cap"),
          depth_(depth) {}
    int depth() const noexcept { return depth_; }

private:
    int depth_;
};

class NotMonotone : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CollisionAbort : public std::runtime_error {
public:
    CollisionAbort(const std::string& what, std::size_t completed)
        : std::runtime_error(what), completed_(completed) {}
    /// Steps completed before the orbit entered the collision tolerance.
    std::size_t completed() const noexcept { return completed_; }

private:
    std::size_t completed_;
};

/// One depth of the cascade, in base coordinates.
struct Level {
    int n = 0;
    Interval window;  // C_n
    double singular_point = 0.5;
    CombinatorialType type;  // type of the n-th renormalization (empty at depth 0)
    long s_minus = 1;
    long s_plus = 1;
    /// First-return times found by iterating an interior point, or -1 if not simulated.
    long direct_minus = -1;
    long direct_plus = -1;
    /// closure f^k(C_n^-), k < S_n^-, and the same for C_n^+.
    std::vector<Interval> cycle_minus;
    std::vector<Interval> cycle_plus;

    Interval minus() const { return {window.lo, singular_point}; }
    Interval plus() const { return {singular_point, window.hi}; }
    long s_min() const { return s_minus < s_plus ? s_minus : s_plus; }
};

struct LevelStructure {
    StandardFamilyMap base;
    /// levels[0] is the trivial level [0,c] and [c,1]; levels[n] is depth n.
    std::vector<Level> levels;

    int depth() const { return static_cast<int>(levels.size()) - 1; }
    /// Components of Lambda_n (touching intervals merged), sorted.
    std::vector<Interval> components(int n) const;
    double total_length(int n) const;
};

/// Direct first-return simulation is run up to this depth.
inline constexpr int kDirectReturnDepth = 3;

LevelStructure build_levels(const LorenzMap& map, const std::vector<RenormResult>& cascade);

/// Pairs of consecutive (sorted) intervals of Lambda_n whose interiors overlap.
std::size_t overlap_count(const Level& level);

struct LevelGeometry {
    int n = 0;
    double child_min = 1.0, child_max = 0.0;
    double gap_min = 1.0, gap_max = 0.0;
    /// max(|C_n| / |C_n^-|, |C_n| / |C_n^+|)
    double branch_ratio = 0.0;
    double cycle_length = 0.0;
    std::size_t intervals = 0;
    std::size_t gaps = 0;
};

struct GeometryReport {
    std::vector<LevelGeometry> levels;
    double mu_hat = 0.0;
    double lambda_hat = 0.0;
    double k_hat = 0.0;
    double ratio_floor = 1e-3;
    double k_cap = 1e3;
    int audited_depth = 0;
    bool bounded = false;
    bool length_decreasing = false;
};

GeometryReport geometry_report(const LevelStructure& levels, double ratio_floor = 1e-3, double k_cap = 1e3);

/// Piecewise-constant probability measure on a uniform grid over [0,1].
class MeasureHistogram {
public:
    MeasureHistogram() = default;
    explicit MeasureHistogram(double width);

    std::size_t bins() const { return weights_.size(); }
    double width() const { return width_; }
    double left(std::size_t i) const { return static_cast<double>(i) * width_; }
    const std::vector<double>& weights() const { return weights_; }
    std::vector<double>& weights() { return weights_; }

    /// Spread `mass` over [lo, hi] proportionally to overlap; a degenerate interval is a point mass.
    void add_interval(const Interval& iv, double mass);
    void add_point(double x, double mass);
    std::size_t bin_of(double x) const;

    double total() const;
    void normalize();
    /// Mass of [lo, hi] under the piecewise-uniform density.
    double mass(const Interval& iv) const;
    double max_density() const;

private:
    double width_ = 0.0;
    std::vector<double> weights_;
};

/// Kantorovich distance on the line: L1 distance of the two piecewise-linear CDFs.
double wasserstein1(const MeasureHistogram& a, const MeasureHistogram& b);

/// Grid width must divide 1; returns the bin count.
std::size_t grid_bins(double width);

struct WeightedInterval {
    Interval interval;
    double weight = 0.0;
    bool minus = true;
};

struct PhysicalMeasure {
    int depth = 0;
    /// Mass of a single interval of Lambda_n^- (x) and Lambda_n^+ (y), n = 0..depth.
    std::vector<double> x, y;
    std::vector<WeightedInterval> pieces;

    /// Weight of the depth-N intervals in `iv`, counted by proportional overlap.
    double mass(const Interval& iv) const;
    MeasureHistogram histogram(double width) const;
    /// Histogram of the image under t -> (t - shift) / scale.
    MeasureHistogram histogram(double width, double shift, double scale) const;
};

PhysicalMeasure physical_measure(const LevelStructure& levels, int depth);
MeasureHistogram physical_measure(const LevelStructure& levels, int depth, double width);

struct BirkhoffOptions {
    std::size_t burn_in = 10000;
    std::size_t samples = 1000000;
    double width = 1.0 / 4096.0;
};

/// Empirical histogram of the orbit of c1+ (restarted from c1- on collision).
MeasureHistogram birkhoff_measure(const LorenzMap& map, const BirkhoffOptions& opt);

}  // namespace lorenz
