#include "lorenz/stochastic.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

namespace lorenz {

namespace {

// Runs body(i) for i in [0, n) on up to `threads` workers; results land by index.
template <typename F>
void parallel_for(std::size_t n, int threads, F body) {
    const auto t = static_cast<std::size_t>(std::max(1, threads));
    if (t == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < t; ++w)
        jobs.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < n; i += t) body(i);
        }));
    for (auto& j : jobs) j.get();
}

}  // namespace

KernelShape parse_kernel_shape(const std::string& name) {
    if (name == "uniform") return KernelShape::uniform;
    if (name == "triangular") return KernelShape::triangular;
    throw std::invalid_argument("unknown kernel shape '" + name + "'");
}

std::string to_string(KernelShape s) { return s == KernelShape::uniform ? "uniform" : "triangular"; }

NoiseKernel::NoiseKernel(KernelShape shape, double epsilon) : shape_(shape), eps_(epsilon) {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("noise amplitude must be nonnegative");
}

double NoiseKernel::density(double t) const {
    if (eps_ == 0.0 || std::abs(t) > eps_) return 0.0;
    if (shape_ == KernelShape::uniform) return 0.5 / eps_;
    return (eps_ - std::abs(t)) / (eps_ * eps_);
}

double NoiseKernel::cdf(double t) const {
    if (t <= -eps_) return t < -eps_ || eps_ > 0.0 ? 0.0 : 1.0;
    if (t >= eps_) return 1.0;
    if (shape_ == KernelShape::uniform) return (t + eps_) / (2.0 * eps_);
    const double e2 = 2.0 * eps_ * eps_;
    return t < 0.0 ? (eps_ + t) * (eps_ + t) / e2 : 1.0 - (eps_ - t) * (eps_ - t) / e2;
}

double NoiseKernel::inverse_cdf(double p) const {
    p = std::clamp(p, 0.0, 1.0);
    if (eps_ == 0.0) return 0.0;
    if (shape_ == KernelShape::uniform) return eps_ * (2.0 * p - 1.0);
    return p < 0.5 ? -eps_ + eps_ * std::sqrt(2.0 * p) : eps_ - eps_ * std::sqrt(2.0 * (1.0 - p));
}

double NoiseKernel::sample(std::mt19937_64& rng) const { return inverse_cdf(unit_draw(rng)); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void check_budget(const RestrictedMap& map, const NoiseKernel& kernel) {
    if (kernel.epsilon() > map.epsilon0())
        throw EpsilonExceedsBudget("eps = " + format_double(kernel.epsilon()) + " exceeds the budget eps0 = " +
                                   format_double(map.epsilon0()));
}

NoisyChain::NoisyChain(const RestrictedMap& map, const NoiseKernel& kernel, std::uint64_t seed)
    : map_(map), kernel_(kernel), rng_(seed) {
    check_budget(map, kernel);
}

double NoisyChain::step(double x) {
    double t;
    return step(x, t);
}

double NoisyChain::step(double x, double& t) {
    double y;
    bool hit = near_singular(x, map_.singular_point());
    if (!hit) {
        try {
            y = map_.eval(x);
        } catch (const SingularPointHit&) {
            hit = true;  // inside the tolerance once mapped to base coordinates
        }
    }
    if (hit) {
        ++collisions_;
        // the image of the tolerance boundary is the one-sided limit to working precision
        y = map_.limit(unit_draw(rng_) < 0.5 ? Side::left : Side::right);
    }
    t = kernel_.sample(rng_);
    return y + t;
}

RandomOrbitRecord random_orbit(const RestrictedMap& map, double x, const NoiseKernel& kernel, std::size_t n,
                               std::uint64_t seed) {
    NoisyChain chain(map, kernel, seed);
    RandomOrbitRecord r;
    r.seed = seed;
    r.start = x;
    r.states.reserve(n + 1);
    r.noise.reserve(n);
    r.states.push_back(x);
    for (std::size_t k = 0; k < n; ++k) {
        double t;
        x = chain.step(x, t);
        r.noise.push_back(t);
        r.states.push_back(x);
    }
    r.collisions = chain.collisions();
    return r;
}

double noise_grid_width(double epsilon, double ratio) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("noise grid needs eps > 0");
    return 1.0 / std::ceil(ratio / epsilon - 1e-9);
}

McResult stationary_mc(const RestrictedMap& map, const NoiseKernel& kernel, std::size_t n, std::size_t burn_in,
                       double width, std::uint64_t seed) {
    NoisyChain chain(map, kernel, seed);
    McResult r{MeasureHistogram(width), n, 0};
    double x = map.limit(Side::right);
    for (std::size_t i = 0; i < burn_in; ++i) x = chain.step(x);
    for (std::size_t i = 0; i < n; ++i) {
        x = chain.step(x);
        r.measure.add_point(x, 1.0);
    }
    r.measure.normalize();
    r.collisions = chain.collisions();
    return r;
}

double TransitionMatrix::max_row_error() const {
    double e = 0.0;
    for (std::size_t i = 0; i < bins(); ++i) {
        double s = 0.0;
        for (std::size_t k = row_start[i]; k < row_start[i + 1]; ++k) s += val[k];
        e = std::max(e, std::abs(s - 1.0));
    }
    return e;
}

std::vector<double> TransitionMatrix::apply_left(const std::vector<double>& pi) const {
    std::vector<double> out(bins(), 0.0);
    for (std::size_t i = 0; i < bins(); ++i) {
        if (pi[i] == 0.0) continue;
        for (std::size_t k = row_start[i]; k < row_start[i + 1]; ++k) out[col[k]] += pi[i] * val[k];
    }
    return out;
}

namespace {

// Append the row of one image point with weight `share`, columns ascending.
void append_row(TransitionMatrix& m, const NoiseKernel& kernel, std::size_t n, double y, double share) {
    const double w = m.width, eps = kernel.epsilon();
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor((y - eps) / w)));
    const auto last = std::min(n - 1, static_cast<std::size_t>(std::max(0.0, std::floor((y + eps) / w))));
    for (std::size_t j = first; j <= last; ++j) {
        const double a = static_cast<double>(j) * w;
        const double b = j + 1 == n ? 1.0 : static_cast<double>(j + 1) * w;
        const double p = kernel.cdf(b - y) - kernel.cdf(a - y);
        if (p > 0.0) {
            m.col.push_back(j);
            m.val.push_back(share * p);
        }
    }
}

struct Image {
    double y;
    double alt;  // second image for a bin centred on c, else NaN
};

TransitionMatrix build_matrix(const std::vector<Image>& images, const NoiseKernel& kernel, double width) {
    const std::size_t n = grid_bins(width);
    if (images.size() != n) throw std::invalid_argument("one image per bin required");
    if (kernel.epsilon() > 0.0 && width > kernel.epsilon() / 5.0 * (1.0 + 1e-12))
        throw GridTooCoarse("grid width " + format_double(width) + " exceeds eps/5 = " +
                            format_double(kernel.epsilon() / 5.0));
    TransitionMatrix m;
    m.width = 1.0 / static_cast<double>(n);
    m.row_start.push_back(0);
    for (const auto& im : images) {
        if (std::isnan(im.alt)) {
            append_row(m, kernel, n, im.y, 1.0);
        } else {
            const double lo = std::min(im.y, im.alt), hi = std::max(im.y, im.alt);
            append_row(m, kernel, n, lo, 0.5);
            append_row(m, kernel, n, hi, 0.5);
        }
        m.row_start.push_back(m.col.size());
    }
    return m;
}

}  // namespace

TransitionMatrix transition_matrix_from_images(const std::vector<double>& images, const NoiseKernel& kernel,
                                               double width) {
    std::vector<Image> im;
    for (double y : images) im.push_back({y, std::nan("")});
    return build_matrix(im, kernel, width);
}

TransitionMatrix transition_matrix(const RestrictedMap& map, const NoiseKernel& kernel, double width) {
    check_budget(map, kernel);
    const std::size_t n = grid_bins(width);
    const double w = 1.0 / static_cast<double>(n);
    std::vector<Image> im(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = (static_cast<double>(i) + 0.5) * w;
        try {
            im[i] = {map.eval(x), std::nan("")};
        } catch (const SingularPointHit&) {
            // a centre on c: half the bin on each side
            im[i] = {map.limit(Side::left), map.limit(Side::right)};
        }
    }
    return build_matrix(im, kernel, w);
}

MeasureHistogram push_forward(const TransitionMatrix& m, const MeasureHistogram& h) {
    if (h.bins() != m.bins()) throw std::invalid_argument("histogram and matrix grids differ");
    MeasureHistogram out(m.width);
    out.weights() = m.apply_left(h.weights());
    return out;
}

UlamResult stationary_from_matrix(const TransitionMatrix& m) {
    const std::size_t n = m.bins();
    using Sp = Eigen::SparseMatrix<double>;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(m.val.size() + 2 * n);
    const auto last = static_cast<Eigen::Index>(n - 1);
    // (M^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = m.row_start[i]; k < m.row_start[i + 1]; ++k)
            if (static_cast<Eigen::Index>(m.col[k]) != last)
                trip.emplace_back(static_cast<Eigen::Index>(m.col[k]), static_cast<Eigen::Index>(i), m.val[k]);
        if (static_cast<Eigen::Index>(i) != last)
            trip.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), -1.0);
        trip.emplace_back(last, static_cast<Eigen::Index>(i), 1.0);
    }
    Sp A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Sp> lu;
    lu.compute(A);
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    if (lu.info() == Eigen::Success) {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        rhs[last] = 1.0;
        const Eigen::VectorXd sol = lu.solve(rhs);
        if (lu.info() == Eigen::Success && sol.allFinite())
            for (std::size_t i = 0; i < n; ++i) pi[i] = std::max(0.0, sol[static_cast<Eigen::Index>(i)]);
    }
    auto normalize = [](std::vector<double>& v) {
        const double s = std::accumulate(v.begin(), v.end(), 0.0);
        for (double& x : v) x /= s;
    };
    normalize(pi);

    UlamResult r;
    r.max_row_error = m.max_row_error();
    // polish by power iteration
    constexpr int kMaxIter = 200000;
    for (r.power_iterations = 1; r.power_iterations <= kMaxIter; ++r.power_iterations) {
        std::vector<double> next = m.apply_left(pi);
        normalize(next);
        double sup = 0.0;
        for (std::size_t i = 0; i < n; ++i) sup = std::max(sup, std::abs(next[i] - pi[i]));
        pi.swap(next);
        r.residual_sup = sup;
        if (sup < 1e-12) break;
    }
    const std::vector<double> once = m.apply_left(pi);
    r.residual_l1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) r.residual_l1 += std::abs(once[i] - pi[i]);
    r.measure = MeasureHistogram(m.width);
    r.measure.weights() = pi;
    return r;
}

UlamResult stationary_ulam(const RestrictedMap& map, const NoiseKernel& kernel, double width) {
    return stationary_from_matrix(transition_matrix(map, kernel, width));
}

std::vector<StabilityPoint> stability_curve(const RestrictedMap& map, KernelShape shape,
                                            const std::vector<double>& epsilons, const MeasureHistogram& reference,
                                            int threads) {
    std::vector<StabilityPoint> out(epsilons.size());
    parallel_for(epsilons.size(), threads, [&](std::size_t i) {
        const NoiseKernel k(shape, epsilons[i]);
        const UlamResult u = stationary_ulam(map, k, reference.width());
        out[i] = {epsilons[i], wasserstein1(u.measure, reference), reference.width(), reference.bins(),
                  u.residual_l1};
    });
    return out;
}

double shadowing_epsilon(double eta) {
    double eps = std::pow(eta, 0.6);
    while (!(eps * eps < eta)) eps = std::nextafter(eps, 0.0);
    return eps;
}

ShadowingResult shadowing_check(const RestrictedMap& map, KernelShape shape, double K, double xi, double eta,
                                std::size_t trials, std::uint64_t seed, int threads) {
    ShadowingResult res;
    res.eta = eta;
    res.epsilon = shadowing_epsilon(eta);
    res.trials = trials;
    res.n_max = static_cast<long>(std::floor(-K * std::log(eta)));
    const NoiseKernel kernel(shape, res.epsilon);
    check_budget(map, kernel);
    const double c = map.singular_point();
    const auto n_max = static_cast<std::size_t>(std::max(0L, res.n_max));

    // reference orbits g^{n-1}(c1+) and g^{n-1}(c1-)
    std::vector<double> ref[2];
    for (int s = 0; s < 2; ++s) {
        double r = map.limit(s == 0 ? Side::right : Side::left);
        for (std::size_t n = 1; n <= n_max; ++n) {
            ref[s].push_back(r);
            if (n < n_max) r = map.eval(r);
        }
    }

    struct Tally {
        std::size_t pairs = 0, passed = 0, tau1 = 0;
        long first = 0;
        double worst = 0.0;
    };
    std::vector<Tally> tallies(2 * trials);
    parallel_for(2 * trials, threads, [&](std::size_t job) {
        const int s = static_cast<int>(job % 2);
        NoisyChain chain(map, kernel, derive_seed(seed, job));
        Tally& t = tallies[job];
        double x = s == 0 ? c + eta : c - eta;
        for (std::size_t n = 1; n <= n_max; ++n) {
            x = chain.step(x);
            const double tau = std::abs(x - ref[s][n - 1]);
            const double ratio = tau / std::abs(ref[s][n - 1] - c);
            if (n == 1 && !(tau < 2.0 * std::sqrt(eta))) ++t.tau1;
            ++t.pairs;
            if (ratio < xi) {
                ++t.passed;
            } else if (t.first == 0) {
                t.first = static_cast<long>(n);
            }
            t.worst = std::max(t.worst, ratio);
        }
    });
    for (const auto& t : tallies) {
        res.pairs += t.pairs;
        res.passed += t.passed;
        res.tau1_violations += t.tau1;
        if (t.first && (res.first_failure == 0 || t.first < res.first_failure)) res.first_failure = t.first;
        res.worst_ratio = std::max(res.worst_ratio, t.worst);
    }
    return res;
}

ShadowingWitness shadowing_presearch(const RestrictedMap& map, KernelShape shape, double K, double xi,
                                     const std::vector<double>& probes, std::size_t trials, std::uint64_t seed,
                                     int threads) {
    ShadowingWitness w;
    w.K = K;
    w.xi = xi;
    w.probes = probes;
    std::sort(w.probes.begin(), w.probes.end(), std::greater<>());
    for (std::size_t i = 0; i < w.probes.size(); ++i) {
        const auto r = shadowing_check(map, shape, K, xi, w.probes[i], trials, derive_seed(seed, i), threads);
        w.probe_passed.push_back(r.passed == r.pairs && r.tau1_violations == 0);
    }
    // delta is the probe just above the longest fully passing tail of the list
    std::size_t start = w.probes.size();
    while (start > 0 && w.probe_passed[start - 1]) --start;
    if (start == w.probes.size()) return w;
    w.found = true;
    w.delta = start == 0 ? 10.0 * w.probes.front() : w.probes[start - 1];
    return w;
}

RandomLyapunov random_lyapunov(const RestrictedMap& map, const NoiseKernel& kernel, double x, std::size_t n,
                               std::size_t trials, std::uint64_t seed, int threads) {
    RandomLyapunov r;
    r.epsilon = kernel.epsilon();
    r.per_trial.assign(trials, 0.0);
    std::vector<std::size_t> hits(trials, 0);
    const double c = map.singular_point();
    parallel_for(trials, threads, [&](std::size_t k) {
        NoisyChain chain(map, kernel, derive_seed(seed, k));
        long double sum = 0.0L;
        double y = x;
        for (std::size_t i = 0; i < n; ++i) {
            // the derivative of f_t is Dg; a state on c contributes the tolerance value
            const double d = near_singular(y, c) ? map.log_deriv(c + 2.0 * kCollisionTol) : map.log_deriv(y);
            sum += d;
            y = chain.step(y);
        }
        r.per_trial[k] = static_cast<double>(sum / static_cast<long double>(n));
        hits[k] = chain.collisions();
    });
    for (std::size_t k = 0; k < trials; ++k) {
        r.mean += r.per_trial[k];
        r.positive_part += std::max(0.0, r.per_trial[k]);
        r.collisions += hits[k];
    }
    if (trials) {
        r.mean /= static_cast<double>(trials);
        r.positive_part /= static_cast<double>(trials);
        double v = 0.0;
        for (double p : r.per_trial) v += (p - r.mean) * (p - r.mean);
        r.spread = trials > 1 ? std::sqrt(v / static_cast<double>(trials - 1)) : 0.0;
    }
    return r;
}

double near_critical_integral(const RestrictedMap& map, const MeasureHistogram& h, double r) {
    if (!map.base().is_standard()) throw std::invalid_argument("closed-form quadrature needs a standard-family base");
    const StandardFamilyMap& f = map.base().base();
    const double c = map.singular_point(), s = 1.0 - 2.0 * map.margin(), w = h.width();
    double total = 0.0;
    for (std::size_t i = h.bin_of(c - r); i <= h.bin_of(c + r); ++i) {
        const double a = std::max(h.left(i), c - r), b = std::min(h.left(i) + w, c + r);
        if (!(b > a) || h.weights()[i] == 0.0) continue;
        // Dg(x) = Df(Bx), dx = dy / (1 - 2m)
        total += h.weights()[i] / w * log_df_integral(f, map.to_base(a), map.to_base(b)) / s;
    }
    return total;
}

double near_critical_bound(double d0, double c0, double epsilon, double width) {
    return 2.0 * d0 * c0 * epsilon * (1.0 - 2.0 * std::log(epsilon)) * (1.0 + width / (epsilon * epsilon));
}

}  // namespace lorenz
