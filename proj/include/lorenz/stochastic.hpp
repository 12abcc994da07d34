#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lorenz/attractor.hpp"
#include "lorenz/lyapunov.hpp"

namespace lorenz {

class EpsilonExceedsBudget : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GridTooCoarse : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class KernelShape { uniform, triangular };

KernelShape parse_kernel_shape(const std::string& name);
std::string to_string(KernelShape s);

/// Additive noise density on [-eps, eps]; eps = 0 is the point mass at 0.
class NoiseKernel {
public:
    NoiseKernel(KernelShape shape, double epsilon);

    KernelShape shape() const { return shape_; }
    double epsilon() const { return eps_; }
    /// sup density = d0 / eps
    double d0() const { return shape_ == KernelShape::uniform ? 0.5 : 1.0; }

    double density(double t) const;
    double cdf(double t) const;
    double inverse_cdf(double p) const;
    double sample(std::mt19937_64& rng) const;

private:
    KernelShape shape_;
    double eps_;
};

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Independent stream seed for task `index` under `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct RandomOrbitRecord {
    std::uint64_t seed = 0;
    double start = 0.0;
    std::vector<double> noise;   // t_1..t_n
    std::vector<double> states;  // x_0..x_n
    std::size_t collisions = 0;
};

/// One step x -> g(x) + t. A state within the collision tolerance of c is first moved
/// to the tolerance boundary on a side chosen by an extra kernel draw.
class NoisyChain {
public:
    NoisyChain(const RestrictedMap& map, const NoiseKernel& kernel, std::uint64_t seed);

    double step(double x);
    double step(double x, double& t);
    std::size_t collisions() const { return collisions_; }

private:
    const RestrictedMap& map_;
    NoiseKernel kernel_;
    std::mt19937_64 rng_;
    std::size_t collisions_ = 0;
};

void check_budget(const RestrictedMap& map, const NoiseKernel& kernel);

RandomOrbitRecord random_orbit(const RestrictedMap& map, double x, const NoiseKernel& kernel, std::size_t n,
                               std::uint64_t seed);

/// Largest grid width not above eps / ratio that divides [0,1] evenly.
double noise_grid_width(double epsilon, double ratio = 5.0);

struct McResult {
    MeasureHistogram measure;
    std::size_t samples = 0;
    std::size_t collisions = 0;
};

McResult stationary_mc(const RestrictedMap& map, const NoiseKernel& kernel, std::size_t n, std::size_t burn_in,
                       double width, std::uint64_t seed);

/// Row-stochastic matrix in compressed row form.
struct TransitionMatrix {
    double width = 0.0;
    std::vector<std::size_t> row_start;  // size bins + 1
    std::vector<std::size_t> col;
    std::vector<double> val;

    std::size_t bins() const { return row_start.empty() ? 0 : row_start.size() - 1; }
    double max_row_error() const;
    /// pi M
    std::vector<double> apply_left(const std::vector<double>& pi) const;
};

/// M[i][j] = Theta(b_j - y_i) - Theta(a_j - y_i) with y_i the image of bin i's centre.
TransitionMatrix transition_matrix_from_images(const std::vector<double>& images, const NoiseKernel& kernel,
                                               double width);
TransitionMatrix transition_matrix(const RestrictedMap& map, const NoiseKernel& kernel, double width);

MeasureHistogram push_forward(const TransitionMatrix& m, const MeasureHistogram& h);

struct UlamResult {
    MeasureHistogram measure;
    double max_row_error = 0.0;
    /// ||pi M - pi||_1 and the sup-norm change of the last polishing step
    double residual_l1 = 0.0;
    double residual_sup = 0.0;
    int power_iterations = 0;
};

UlamResult stationary_from_matrix(const TransitionMatrix& m);
UlamResult stationary_ulam(const RestrictedMap& map, const NoiseKernel& kernel, double width);

struct StabilityPoint {
    double epsilon = 0.0;
    double w1 = 0.0;
    double width = 0.0;
    std::size_t bins = 0;
    double residual = 0.0;
};

/// W1 between the Ulam stationary measure at each eps and `reference`, on the reference grid.
std::vector<StabilityPoint> stability_curve(const RestrictedMap& map, KernelShape shape,
                                            const std::vector<double>& epsilons, const MeasureHistogram& reference,
                                            int threads = 1);

struct ShadowingWitness {
    double K = 0.0;
    double xi = 0.5;
    double delta = 0.0;
    /// Probe values of eta tried, largest first, and whether each passed every trial.
    std::vector<double> probes;
    std::vector<bool> probe_passed;
    bool found = false;
};

struct ShadowingResult {
    double eta = 0.0;
    double epsilon = 0.0;
    long n_max = 0;
    std::size_t trials = 0;
    std::size_t pairs = 0;
    std::size_t passed = 0;
    std::size_t tau1_violations = 0;
    /// Smallest n with a failing pair, or 0.
    long first_failure = 0;
    double worst_ratio = 0.0;

    double pass_fraction() const { return pairs ? static_cast<double>(passed) / static_cast<double>(pairs) : 0.0; }
};

/// eps = eta^0.6, lowered if needed so that eps^2 < eta.
double shadowing_epsilon(double eta);

/// Random orbits from c + eta against the orbit of c1+, and from c - eta against c1-,
/// checked for 1 <= n <= floor(-K log eta).
ShadowingResult shadowing_check(const RestrictedMap& map, KernelShape shape, double K, double xi,
                                double eta, std::size_t trials, std::uint64_t seed, int threads = 1);

/// Walks eta down the probe list until every probe below a candidate delta passes.
ShadowingWitness shadowing_presearch(const RestrictedMap& map, KernelShape shape, double K, double xi,
                                     const std::vector<double>& probes, std::size_t trials, std::uint64_t seed,
                                     int threads = 1);

struct RandomLyapunov {
    double epsilon = 0.0;
    std::vector<double> per_trial;
    double mean = 0.0;
    double spread = 0.0;
    /// mean of max(chi, 0)
    double positive_part = 0.0;
    std::size_t collisions = 0;
};

RandomLyapunov random_lyapunov(const RestrictedMap& map, const NoiseKernel& kernel, double x, std::size_t n,
                               std::size_t trials, std::uint64_t seed, int threads = 1);

/// Integral of log Dg over |x - c| < r against the histogram density (closed form per bin).
double near_critical_integral(const RestrictedMap& map, const MeasureHistogram& h, double r);

/// 2 d0 C0 eps (1 - 2 log eps) (1 + w / eps^2)
double near_critical_bound(double d0, double c0, double epsilon, double width);

}  // namespace lorenz
