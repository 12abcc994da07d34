#include "lorenz/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "lorenz/attractor.hpp"
#include "lorenz/lyapunov.hpp"
#include "lorenz/renorm.hpp"
#include "lorenz/stochastic.hpp"

#ifndef LORENZ_VERSION
#define LORENZ_VERSION "0.0.0"
#endif

namespace lorenz {

namespace fs = std::filesystem;

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"tune",     "levels",        "geometry",   "measure",
                                                "recurrence", "lyapunov",    "integrability", "stationary",
                                                "stability", "shadow",       "rlyap"};
    return names;
}

namespace {

const std::map<std::string, std::vector<std::string>>& stage_deps() {
    static const std::map<std::string, std::vector<std::string>> deps{
        {"tune", {}},
        {"levels", {"tune"}},
        {"geometry", {"levels"}},
        {"measure", {"levels"}},
        {"recurrence", {"levels"}},
        {"lyapunov", {"levels"}},
        {"integrability", {"levels"}},
        {"stationary", {"tune"}},
        {"stability", {"levels"}},
        {"shadow", {"tune"}},
        {"rlyap", {"tune"}},
    };
    return deps;
}

const std::map<std::string, std::string>& default_values() {
    static const std::map<std::string, std::string> d = [] {
        std::map<std::string, std::string> m{
            {"map.c", "0.5"},
            {"map.alpha", "2"},
            {"map.u", ""},
            {"map.v", ""},
            {"tune.types", "2,2x4"},
            {"tune.budget", "100000"},
            {"tune.diameter", "1e-10"},
            {"tune.lookahead", "6"},
            {"levels.depth", "0"},
            {"geometry.ratio_floor", "1e-3"},
            {"geometry.k_cap", "1000"},
            {"measure.depth", "0"},
            {"measure.width", "1/4096"},
            {"measure.samples", "10000000"},
            {"measure.burn_in", "10000"},
            {"recurrence.level", "3"},
            {"recurrence.halvings", "4"},
            {"recurrence.n", "1000,10000,100000,1000000"},
            {"recurrence.visit_depth", "4"},
            {"recurrence.visit_n", "100000"},
            {"lyapunov.n_max", "1000000"},
            {"lyapunov.grid", "1/4194304"},
            {"lyapunov.radius", "0.01"},
            {"stationary.margin", "0.018"},
            {"stationary.kernel", "uniform"},
            {"stationary.eps", "0.01,0.003,0.001"},
            {"stationary.width_ratio", "5"},
            {"stationary.samples", "10000000"},
            {"stationary.burn_in", "10000"},
            {"stability.eps", "0.01,0.005,0.0025,0.00125"},
            {"shadow.K", "1.01"},
            {"shadow.xi", "0.5"},
            {"shadow.eta", "1e-4,1e-5,1e-6"},
            {"shadow.trials", "1000"},
            {"shadow.probes", "1e-4,1e-5,1e-6,1e-7,1e-8,1e-9,1e-10,1e-11,1e-12"},
            {"shadow.probe_trials", "200"},
            {"rlyap.eps", "0.01,0.005,0.0025,0.00125"},
            {"rlyap.n", "100000"},
            {"rlyap.trials", "20"},
            {"run.seed", "1"},
            {"run.out", "out"},
            {"run.threads", "1"},
        };
        for (const auto& s : stage_names()) m["stages." + s] = "false";
        return m;
    }();
    return d;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::optional<double> parse_real(const std::string& raw) {
    const std::string s = trim(raw);
    if (s.empty()) return std::nullopt;
    const auto slash = s.find('/');
    if (slash != std::string::npos) {
        auto a = parse_real(s.substr(0, slash)), b = parse_real(s.substr(slash + 1));
        if (!a || !b || *b == 0.0) return std::nullopt;
        return *a / *b;
    }
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

std::string join(const std::vector<long>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string fmt(double x) { return format_double(x); }

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : columns_(header.size()) { row_strings(header); }

    template <typename... T>
    void row(const T&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << '\n';
    }

    void write(const fs::path& path) const {
        std::ofstream f(path, std::ios::binary);
        f << out_.str();
        if (!f) throw std::runtime_error("cannot write " + path.string());
    }

private:
    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }
    static std::string cell(double x) { return fmt(x); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(bool b) { return b ? "1" : "0"; }
    template <typename I>
        requires std::is_integral_v<I>
    static std::string cell(I i) {
        return std::to_string(i);
    }

    std::size_t columns_;
    std::ostringstream out_;
};

struct Context {
    Context(const ExperimentConfig& c, fs::path o) : cfg(c), out(std::move(o)) {}

    const ExperimentConfig& cfg;
    fs::path out;
    std::uint64_t seed = 1;
    int threads = 1;
    std::optional<StandardFamilyMap> map;
    std::vector<MonotoneStep> types;
    std::vector<RenormResult> cascade;
    std::optional<LevelStructure> levels;
    std::optional<RestrictedMap> restricted;

    const StandardFamilyMap& f() const { return *map; }
    const LevelStructure& ls() const { return *levels; }
    int measure_depth() const {
        const auto d = static_cast<int>(cfg.integer("measure.depth"));
        return d == 0 ? ls().depth() : std::min(d, ls().depth());
    }
    const RestrictedMap& g() {
        if (!restricted) restricted = restrict_rescale(LorenzMap(f()), cfg.number("stationary.margin"));
        return *restricted;
    }
};

using StageFn = std::function<void(Context&, StageRecord&)>;

void emit(Context& ctx, StageRecord& rec, const std::string& name, const Csv& csv) {
    csv.write(ctx.out / name);
    rec.outputs.push_back(name);
}

void stage_tune(Context& ctx, StageRecord& rec) {
    const auto& cfg = ctx.cfg;
    const double c = cfg.number("map.c"), alpha = cfg.number("map.alpha");
    ctx.types = parse_type_sequence(cfg.text("tune.types"));
    double u, v;
    if (cfg.has_value("map.u")) {
        u = cfg.number("map.u");
        v = cfg.number("map.v");
        const Cascade cas = certify_cascade(LorenzMap(StandardFamilyMap(u, v, c, alpha)), ctx.types);
        ctx.cascade = cas.levels;
        rec.summary.push_back({"source", "given"});
        if (!cas.complete) {
            rec.summary.push_back({"failing_depth", std::to_string(cas.levels.size() + 1)});
            throw StageFailed("tune", "certification failed at depth " + std::to_string(cas.levels.size() + 1) +
                                          " (" + to_string(cas.failure.reason) + ": " + cas.failure.detail + ")");
        }
    } else {
        TuneOptions opt;
        opt.budget = cfg.integer("tune.budget");
        opt.target_diameter = cfg.number("tune.diameter");
        opt.lookahead = static_cast<int>(cfg.integer("tune.lookahead"));
        opt.threads = ctx.threads;
        try {
            const TuneResult t = tune_parameters(c, alpha, ctx.types, opt);
            u = t.u;
            v = t.v;
            ctx.cascade = t.cascade;
            rec.summary.push_back({"source", "tuned"});
            rec.summary.push_back({"evaluations", std::to_string(t.certifications)});
            rec.summary.push_back({"diameter", fmt(t.diameter)});
        } catch (const TuningFailed& e) {
            rec.summary.push_back({"failing_depth", std::to_string(e.achieved_depth() + 1)});
            throw StageFailed("tune", e.what());
        }
    }
    ctx.map = StandardFamilyMap(u, v, c, alpha);
    if (ctx.cascade.size() > ctx.types.size()) ctx.cascade.erase(ctx.cascade.begin() + static_cast<long>(ctx.types.size()), ctx.cascade.end());
    Csv csv({"level", "a", "b", "p", "q", "left_residual", "right_residual", "rescaled_singular_point"});
    double worst = 0.0;
    for (std::size_t i = 0; i < ctx.cascade.size(); ++i) {
        const auto& r = ctx.cascade[i];
        csv.row(i + 1, r.type.a(), r.type.b(), r.window.lo, r.window.hi, r.left_residual, r.right_residual,
                r.rescaled_singular_point);
        worst = std::max({worst, r.left_residual, r.right_residual});
    }
    emit(ctx, rec, "tune.csv", csv);
    {
        std::ofstream m(ctx.out / "map.txt", std::ios::binary);
        m << to_key_value(LorenzMap(ctx.f()));
        rec.outputs.push_back("map.txt");
    }
    rec.summary.push_back({"u", fmt(u)});
    rec.summary.push_back({"v", fmt(v)});
    rec.summary.push_back({"certified_depth", std::to_string(ctx.cascade.size())});
    rec.summary.push_back({"max_residual", fmt(worst)});
}

void stage_levels(Context& ctx, StageRecord& rec) {
    auto cascade = ctx.cascade;
    const auto want = ctx.cfg.integer("levels.depth");
    if (want > 0 && static_cast<std::size_t>(want) < cascade.size()) cascade.erase(cascade.begin() + want, cascade.end());
    ctx.levels = build_levels(LorenzMap(ctx.f()), cascade);
    Csv csv({"n", "p_n", "q_n", "S_minus", "S_plus", "direct_minus", "direct_plus", "intervals", "total_length",
             "overlaps"});
    std::vector<long> sm, sp;
    bool growth = true;
    for (const auto& lv : ctx.ls().levels) {
        csv.row(lv.n, lv.window.lo, lv.window.hi, lv.s_minus, lv.s_plus, lv.direct_minus, lv.direct_plus,
                ctx.ls().components(lv.n).size(), ctx.ls().total_length(lv.n), overlap_count(lv));
        if (lv.n == 0) continue;
        sm.push_back(lv.s_minus);
        sp.push_back(lv.s_plus);
        if (std::min(lv.s_minus, lv.s_plus) < (1L << lv.n)) growth = false;
    }
    emit(ctx, rec, "levels.csv", csv);
    rec.summary.push_back({"depth", std::to_string(ctx.ls().depth())});
    rec.summary.push_back({"S_minus", join(sm)});
    rec.summary.push_back({"S_plus", join(sp)});
    rec.summary.push_back({"S_n_at_least_2^n", growth ? "yes" : "no"});
}

void stage_geometry(Context& ctx, StageRecord& rec) {
    if (ctx.ls().depth() < 2) throw StageFailed("geometry", "geometry audit needs depth >= 2");
    const auto g = geometry_report(ctx.ls(), ctx.cfg.number("geometry.ratio_floor"), ctx.cfg.number("geometry.k_cap"));
    Csv csv({"n", "child_min", "child_max", "gap_min", "gap_max", "branch_ratio", "cycle_length", "intervals", "gaps"});
    for (const auto& l : g.levels)
        csv.row(l.n, l.child_min, l.child_max, l.gap_min, l.gap_max, l.branch_ratio, l.cycle_length, l.intervals,
                l.gaps);
    emit(ctx, rec, "geometry.csv", csv);
    rec.summary.push_back({"verdict", g.bounded ? "BOUNDED" : "NOT BOUNDED"});
    rec.summary.push_back({"mu_hat", fmt(g.mu_hat)});
    rec.summary.push_back({"lambda_hat", fmt(g.lambda_hat)});
    rec.summary.push_back({"K_hat", fmt(g.k_hat)});
    rec.summary.push_back({"audited_depth", std::to_string(g.audited_depth)});
    rec.summary.push_back({"length_decreasing", g.length_decreasing ? "yes" : "no"});
}

void stage_measure(Context& ctx, StageRecord& rec) {
    const int N = ctx.measure_depth();
    const double w = ctx.cfg.number("measure.width");
    const PhysicalMeasure pm = physical_measure(ctx.ls(), N);
    const MeasureHistogram hp = pm.histogram(w);
    BirkhoffOptions bo;
    bo.width = w;
    bo.samples = static_cast<std::size_t>(ctx.cfg.integer("measure.samples"));
    bo.burn_in = static_cast<std::size_t>(ctx.cfg.integer("measure.burn_in"));
    const MeasureHistogram hb = birkhoff_measure(LorenzMap(ctx.f()), bo);
    Csv csv({"bin_left", "physical", "birkhoff"});
    for (std::size_t i = 0; i < hp.bins(); ++i) csv.row(hp.left(i), hp.weights()[i], hb.weights()[i]);
    emit(ctx, rec, "measure.csv", csv);
    Csv lv({"n", "x_n", "y_n", "mu_C_n", "bound_2_over_S_n"});
    bool ok = true;
    for (int n = 0; n <= N; ++n) {
        const Level& l = ctx.ls().levels[static_cast<std::size_t>(n)];
        const double m = pm.mass(l.window), b = 2.0 / static_cast<double>(l.s_min());
        lv.row(n, pm.x[static_cast<std::size_t>(n)], pm.y[static_cast<std::size_t>(n)], m, b);
        if (n > 0 && m > b) ok = false;
    }
    emit(ctx, rec, "measure_levels.csv", lv);
    const double w1 = wasserstein1(hp, hb);
    const double bound = 4.0 / static_cast<double>(ctx.ls().levels[static_cast<std::size_t>(N)].s_min()) + 2.0 * w;
    rec.summary.push_back({"depth", std::to_string(N)});
    rec.summary.push_back({"width", fmt(w)});
    rec.summary.push_back({"W1_birkhoff", fmt(w1)});
    rec.summary.push_back({"W1_bound", fmt(bound)});
    rec.summary.push_back({"mass_bounds", ok ? "hold" : "violated"});
}

void stage_recurrence(Context& ctx, StageRecord& rec) {
    const auto& ls = ctx.ls();
    const int level = static_cast<int>(ctx.cfg.integer("recurrence.level"));
    if (level > ls.depth()) throw StageFailed("recurrence", "recurrence.level exceeds the level depth");
    const Level& L = ls.levels[static_cast<std::size_t>(level)];
    const double d0 = std::min(L.minus().length(), L.plus().length());
    std::vector<double> deltas;
    for (int i = 0; i <= ctx.cfg.integer("recurrence.halvings"); ++i) deltas.push_back(std::ldexp(d0, -i));
    std::vector<std::size_t> ns{static_cast<std::size_t>(10 * L.s_min())};
    for (double n : ctx.cfg.numbers("recurrence.n")) ns.push_back(static_cast<std::size_t>(n));
    const auto geom = fit_geometry_constants(ls);
    const LorenzMap map(ctx.f());
    Csv csv({"start", "delta", "k0", "n", "value", "bound"});
    Csv env({"start", "delta", "envelope", "bound"});
    bool within = true, shrinking = true;
    for (Side s : {Side::left, Side::right}) {
        const std::string tag = s == Side::left ? "c1-" : "c1+";
        const auto prof = recurrence_profile(map, ctx.f().limit(s), deltas, ns);
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            const int k0 = containing_level(ls, deltas[i]);
            const double b = recurrence_bound(geom, k0);
            for (std::size_t j = 0; j < prof.values[i].size(); ++j) {
                csv.row(tag, deltas[i], k0, prof.ns[j], prof.values[i][j], b);
                if (std::abs(prof.values[i][j]) > b) within = false;
            }
            env.row(tag, deltas[i], prof.envelope(i), b);
            rec.summary.push_back({"envelope_" + tag + "_" + std::to_string(i),
                                   fmt(deltas[i]) + " " + fmt(prof.envelope(i)) + " " + fmt(b)});
        }
        if (!(prof.envelope(deltas.size() - 1) < prof.envelope(0))) shrinking = false;
    }
    emit(ctx, rec, "recurrence.csv", csv);
    emit(ctx, rec, "recurrence_envelope.csv", env);

    const int kmax = std::min(static_cast<int>(ctx.cfg.integer("recurrence.visit_depth")), ls.depth());
    const auto vn = static_cast<std::size_t>(ctx.cfg.integer("recurrence.visit_n"));
    Csv vis({"start", "k_max", "n_max", "checked", "violations", "worst_ratio"});
    std::size_t violations = 0;
    for (Side s : {Side::left, Side::right}) {
        const auto a = visit_audit(map, ctx.f().limit(s), ls, kmax, vn);
        vis.row(s == Side::left ? "c1-" : "c1+", kmax, vn, a.checked, a.violations, a.worst_ratio);
        violations += a.violations;
    }
    emit(ctx, rec, "visits.csv", vis);
    rec.summary.push_back({"rho_hat", fmt(geom.rho)});
    rec.summary.push_back({"C1_hat", fmt(geom.c1)});
    rec.summary.push_back({"within_bound", within ? "yes" : "no"});
    rec.summary.push_back({"envelope_shrinks", shrinking ? "yes" : "no"});
    rec.summary.push_back({"visit_violations", std::to_string(violations)});
}

void stage_lyapunov(Context& ctx, StageRecord& rec) {
    const LorenzMap map(ctx.f());
    const auto n_max = static_cast<std::size_t>(ctx.cfg.integer("lyapunov.n_max"));
    Csv tr({"start", "n", "value"});
    Csv sum({"start", "first_decade_median", "last_decade_median", "growth_exponent", "max_abs_log_df", "final",
             "truncated"});
    for (Side s : {Side::left, Side::right}) {
        const std::string tag = s == Side::left ? "c1-" : "c1+";
        const auto t = lyapunov_trace(map, ctx.f().limit(s), n_max);
        for (std::size_t i = 0; i < t.n.size(); ++i) tr.row(tag, t.n[i], t.value[i]);
        sum.row(tag, t.first_decade_median, t.last_decade_median, t.growth_exponent, t.max_abs_log,
                t.value.empty() ? 0.0 : t.value.back(), t.truncated);
        rec.summary.push_back({"trace_" + tag, fmt(t.first_decade_median) + " -> " + fmt(t.last_decade_median)});
        rec.summary.push_back({"growth_" + tag, fmt(t.growth_exponent)});
    }
    emit(ctx, rec, "trace.csv", tr);
    emit(ctx, rec, "lyapunov.csv", sum);
    const auto local = fit_local_constants(map, ctx.f().alpha(), ctx.cfg.number("lyapunov.radius"));
    const auto geom = fit_geometry_constants(ctx.ls());
    const auto chi = chi_mu_estimate(ctx.f(), physical_measure(ctx.ls(), ctx.measure_depth()), ctx.ls(), local, geom);
    Csv k({"a", "b", "C0", "radius", "rho", "rho_prime", "C1", "chi_mu", "chi_error"});
    k.row(local.a, local.b, local.c0, local.radius, geom.rho, geom.rho_prime, geom.c1, chi.value, chi.error);
    emit(ctx, rec, "constants.csv", k);
    rec.summary.push_back({"chi_mu", fmt(chi.value) + " +- " + fmt(chi.error)});
}

void stage_integrability(Context& ctx, StageRecord& rec) {
    const LorenzMap map(ctx.f());
    const auto local = fit_local_constants(map, ctx.f().alpha(), ctx.cfg.number("lyapunov.radius"));
    const auto geom = fit_geometry_constants(ctx.ls());
    const auto h = physical_measure(ctx.ls(), ctx.measure_depth()).histogram(ctx.cfg.number("lyapunov.grid"));
    const auto r = integrability_report(ctx.f(), h, ctx.ls(), local, geom);
    Csv csv({"n", "integral", "C2", "increment", "increment_bound"});
    for (std::size_t n = 0; n < r.integrals.size(); ++n) {
        const bool has = n < r.increments.size();
        csv.row(n, r.integrals[n], r.c2, has ? r.increments[n] : 0.0, has ? r.increment_bounds[n] : 0.0);
    }
    emit(ctx, rec, "integrability.csv", csv);
    rec.summary.push_back({"n0", std::to_string(r.n0)});
    rec.summary.push_back({"C2", fmt(r.c2)});
    rec.summary.push_back({"nondecreasing", r.nondecreasing ? "yes" : "no"});
    rec.summary.push_back({"bounded", r.bounded ? "yes" : "no"});
}

void stage_stationary(Context& ctx, StageRecord& rec) {
    const auto& g = ctx.g();
    const auto shape = parse_kernel_shape(ctx.cfg.text("stationary.kernel"));
    const double ratio = ctx.cfg.number("stationary.width_ratio");
    const auto n = static_cast<std::size_t>(ctx.cfg.integer("stationary.samples"));
    const auto burn = static_cast<std::size_t>(ctx.cfg.integer("stationary.burn_in"));
    const auto local = fit_local_constants(g, ctx.f().alpha(), ctx.cfg.number("lyapunov.radius"));
    Csv csv({"eps", "w", "bins", "n", "seed", "row_error", "residual_l1", "power_iterations", "w1_mc_ulam",
             "w1_bound", "density_ulam", "density_mc", "density_limit", "invariance_w1", "near_critical",
             "near_critical_bound", "collisions"});
    Csv hist({"eps", "bin_left", "ulam", "mc"});
    const auto eps = ctx.cfg.numbers("stationary.eps");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const NoiseKernel k(shape, eps[i]);
        const double w = noise_grid_width(eps[i], ratio);
        const auto m = transition_matrix(g, k, w);
        const auto u = stationary_from_matrix(m);
        const std::uint64_t s = derive_seed(ctx.seed, i);
        const auto mc = stationary_mc(g, k, n, burn, w, s);
        const double nc = near_critical_integral(g, u.measure, eps[i] * eps[i]);
        csv.row(eps[i], m.width, m.bins(), n, s, u.max_row_error, u.residual_l1, u.power_iterations,
                wasserstein1(u.measure, mc.measure), 3.0 * m.width + 5.0 / std::sqrt(static_cast<double>(n)),
                u.measure.max_density(), mc.measure.max_density(), k.d0() / eps[i],
                wasserstein1(push_forward(m, mc.measure), mc.measure), nc,
                near_critical_bound(k.d0(), local.c0, eps[i], m.width), mc.collisions);
        for (std::size_t b = 0; b < m.bins(); ++b)
            hist.row(eps[i], u.measure.left(b), u.measure.weights()[b], mc.measure.weights()[b]);
    }
    emit(ctx, rec, "stationary.csv", csv);
    emit(ctx, rec, "stationary_hist.csv", hist);
    rec.summary.push_back({"eps0", fmt(g.epsilon0())});
    rec.summary.push_back({"C0", fmt(local.c0)});
}

void stage_stability(Context& ctx, StageRecord& rec) {
    const auto& g = ctx.g();
    const auto shape = parse_kernel_shape(ctx.cfg.text("stationary.kernel"));
    const auto eps = ctx.cfg.numbers("stability.eps");
    const double w = noise_grid_width(*std::min_element(eps.begin(), eps.end()),
                                      ctx.cfg.number("stationary.width_ratio"));
    const auto ref = physical_measure(ctx.ls(), ctx.measure_depth()).histogram(w, g.margin(), 1.0 - 2.0 * g.margin());
    const auto curve = stability_curve(g, shape, eps, ref, ctx.threads);
    Csv csv({"eps", "W1", "w", "bins", "residual", "seed"});
    for (const auto& p : curve) {
        csv.row(p.epsilon, p.w1, p.width, p.bins, p.residual, ctx.seed);
        rec.summary.push_back({"point", fmt(p.epsilon) + " " + fmt(p.w1)});
    }
    emit(ctx, rec, "stability.csv", csv);
    rec.summary.push_back({"W1_first", fmt(curve.front().w1)});
    rec.summary.push_back({"W1_last", fmt(curve.back().w1)});
    rec.summary.push_back({"ratio", fmt(curve.back().w1 / curve.front().w1)});
}

void stage_shadow(Context& ctx, StageRecord& rec) {
    const auto& g = ctx.g();
    const auto shape = parse_kernel_shape(ctx.cfg.text("stationary.kernel"));
    const double K = ctx.cfg.number("shadow.K"), xi = ctx.cfg.number("shadow.xi");
    const auto wit = shadowing_presearch(g, shape, K, xi, ctx.cfg.numbers("shadow.probes"),
                                         static_cast<std::size_t>(ctx.cfg.integer("shadow.probe_trials")),
                                         derive_seed(ctx.seed, 1000), ctx.threads);
    Csv w({"K", "xi", "probe_eta", "passed"});
    for (std::size_t i = 0; i < wit.probes.size(); ++i) w.row(K, xi, wit.probes[i], static_cast<bool>(wit.probe_passed[i]));
    emit(ctx, rec, "shadow_presearch.csv", w);
    Csv csv({"eta", "eps", "n_max", "trials", "pass_fraction", "tau1_violations", "first_failure", "worst_ratio",
             "eta_below_delta"});
    const auto etas = ctx.cfg.numbers("shadow.eta");
    bool all = true;
    for (std::size_t i = 0; i < etas.size(); ++i) {
        const auto r = shadowing_check(g, shape, K, xi, etas[i], static_cast<std::size_t>(ctx.cfg.integer("shadow.trials")),
                                       derive_seed(ctx.seed, 2000 + i), ctx.threads);
        csv.row(etas[i], r.epsilon, r.n_max, r.trials, r.pass_fraction(), r.tau1_violations, r.first_failure,
                r.worst_ratio, wit.found && etas[i] < wit.delta);
        if (r.pass_fraction() < 1.0) all = false;
    }
    emit(ctx, rec, "shadow.csv", csv);
    rec.summary.push_back({"witness_delta", wit.found ? fmt(wit.delta) : "none"});
    rec.summary.push_back({"all_pass", all ? "yes" : "no"});
}

void stage_rlyap(Context& ctx, StageRecord& rec) {
    const auto& g = ctx.g();
    const auto shape = parse_kernel_shape(ctx.cfg.text("stationary.kernel"));
    const auto n = static_cast<std::size_t>(ctx.cfg.integer("rlyap.n"));
    const auto trials = static_cast<std::size_t>(ctx.cfg.integer("rlyap.trials"));
    Csv csv({"eps", "n", "trials", "seed", "mean", "spread", "positive_part", "collisions"});
    const auto eps = ctx.cfg.numbers("rlyap.eps");
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const std::uint64_t s = derive_seed(ctx.seed, 3000 + i);
        const auto r = random_lyapunov(g, NoiseKernel(shape, eps[i]), g.limit(Side::right), n, trials, s, ctx.threads);
        csv.row(eps[i], n, trials, s, r.mean, r.spread, r.positive_part, r.collisions);
        (i == 0 ? first : last) = r.positive_part;
    }
    emit(ctx, rec, "rlyap.csv", csv);
    rec.summary.push_back({"chi_plus_first", fmt(first)});
    rec.summary.push_back({"chi_plus_last", fmt(last)});
}

const std::map<std::string, StageFn>& stage_table() {
    static const std::map<std::string, StageFn> t{
        {"tune", stage_tune},         {"levels", stage_levels},         {"geometry", stage_geometry},
        {"measure", stage_measure},   {"recurrence", stage_recurrence}, {"lyapunov", stage_lyapunov},
        {"integrability", stage_integrability}, {"stationary", stage_stationary}, {"stability", stage_stability},
        {"shadow", stage_shadow},     {"rlyap", stage_rlyap},
    };
    return t;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigInvalid(what);
}

}  // namespace

std::set<std::string> stage_closure(const std::string& stage) {
    const auto& deps = stage_deps();
    if (!deps.count(stage)) throw ConfigInvalid("unknown stage '" + stage + "'");
    std::set<std::string> out{stage};
    for (const auto& d : deps.at(stage)) {
        const auto sub = stage_closure(d);
        out.insert(sub.begin(), sub.end());
    }
    return out;
}

ExperimentConfig::ExperimentConfig() : values_(default_values()) {}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigInvalid("line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigInvalid("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigInvalid("unknown key '" + key + "'");
    it->second = value;
}

bool ExperimentConfig::has_value(const std::string& key) const { return !text(key).empty(); }

const std::string& ExperimentConfig::text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigInvalid("unknown key '" + key + "'");
    return it->second;
}

double ExperimentConfig::number(const std::string& key) const {
    const auto v = parse_real(text(key));
    if (!v) throw ConfigInvalid(key + " is not a number: '" + text(key) + "'");
    return *v;
}

std::int64_t ExperimentConfig::integer(const std::string& key) const {
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw ConfigInvalid(key + " must be an integer");
    return static_cast<std::int64_t>(v);
}

bool ExperimentConfig::flag(const std::string& key) const {
    const std::string& v = text(key);
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw ConfigInvalid(key + " must be true or false");
}

std::vector<double> ExperimentConfig::numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split(text(key), ',')) {
        const auto v = parse_real(item);
        if (!v) throw ConfigInvalid(key + " has a non-numeric entry '" + item + "'");
        out.push_back(*v);
    }
    if (out.empty()) throw ConfigInvalid(key + " is empty");
    return out;
}

void ExperimentConfig::validate() const {
    const double c = number("map.c"), alpha = number("map.alpha");
    require(c > 0.0 && c < 1.0, "map.c must lie in (0,1)");
    require(alpha > 1.0, "map.alpha must exceed 1");
    require(has_value("map.u") == has_value("map.v"), "map.u and map.v must be given together");
    if (has_value("map.u")) {
        const double u = number("map.u"), v = number("map.v");
        require(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0, "map.u, map.v must lie in (0,1)");
        require(1.0 - v < c && c < u, "the map must be non-trivial: 1 - v < c < u");
    }
    try {
        require(!parse_type_sequence(text("tune.types")).empty(), "tune.types is empty");
    } catch (const std::invalid_argument& e) {
        throw ConfigInvalid(std::string("tune.types: ") + e.what());
    }
    require(integer("tune.budget") > 0, "tune.budget must be positive");
    require(number("tune.diameter") > 0.0, "tune.diameter must be positive");
    require(integer("tune.lookahead") >= 0, "tune.lookahead must be nonnegative");
    require(integer("levels.depth") >= 0, "levels.depth must be nonnegative");
    const double floor = number("geometry.ratio_floor");
    require(floor > 0.0 && floor < 0.5, "geometry.ratio_floor must lie in (0, 1/2)");
    require(number("geometry.k_cap") > 1.0, "geometry.k_cap must exceed 1");
    auto grid = [&](const std::string& key) {
        try {
            grid_bins(number(key));
        } catch (const std::invalid_argument& e) {
            throw ConfigInvalid(key + ": " + e.what());
        }
    };
    grid("measure.width");
    grid("lyapunov.grid");
    require(integer("measure.depth") >= 0, "measure.depth must be nonnegative");
    require(integer("measure.samples") > 0, "measure.samples must be positive");
    require(integer("measure.burn_in") >= 0, "measure.burn_in must be nonnegative");
    require(integer("recurrence.level") >= 1, "recurrence.level must be at least 1");
    require(integer("recurrence.halvings") >= 0, "recurrence.halvings must be nonnegative");
    for (double n : numbers("recurrence.n")) require(n >= 1.0 && n == std::floor(n), "recurrence.n entries must be positive integers");
    require(integer("recurrence.visit_depth") >= 1, "recurrence.visit_depth must be at least 1");
    require(integer("recurrence.visit_n") >= 1, "recurrence.visit_n must be positive");
    require(integer("lyapunov.n_max") >= 10, "lyapunov.n_max must be at least 10");
    require(number("lyapunov.radius") > 0.0 && number("lyapunov.radius") < std::min(c, 1.0 - c),
            "lyapunov.radius must fit inside (0,1) around c");
    const double m = number("stationary.margin");
    require(m > 0.0 && m < std::min(c, 1.0 - c), "stationary.margin must lie in (0, min(c, 1-c))");
    auto kernel = [&](const std::string& key) {
        try {
            parse_kernel_shape(text(key));
        } catch (const std::invalid_argument& e) {
            throw ConfigInvalid(key + ": " + e.what());
        }
    };
    kernel("stationary.kernel");
    require(number("stationary.width_ratio") >= 5.0, "stationary.width_ratio must be at least 5 (w <= eps/5)");
    require(integer("stationary.samples") > 0, "stationary.samples must be positive");
    require(integer("stationary.burn_in") >= 0, "stationary.burn_in must be nonnegative");
    std::optional<double> eps0;
    if (has_value("map.u")) {
        try {
            eps0 = restrict_rescale(LorenzMap(StandardFamilyMap(number("map.u"), number("map.v"), c, alpha)), m)
                       .epsilon0();
        } catch (const MarginTooLarge& e) {
            throw ConfigInvalid(std::string("stationary.margin: ") + e.what());
        }
    }
    for (const std::string key : {"stationary.eps", "stability.eps", "rlyap.eps"})
        for (double e : numbers(key)) {
            require(e > 0.0 && e < 0.5, key + " entries must lie in (0, 1/2)");
            if (eps0) require(e <= *eps0, key + " entry " + format_double(e) + " exceeds eps0 = " + format_double(*eps0));
        }
    require(numbers("stability.eps").size() >= 2, "stability.eps needs at least two entries");
    require(number("shadow.K") > 1.0, "shadow.K must exceed 1");
    const double xi = number("shadow.xi");
    require(xi > 0.0 && xi <= 0.5, "shadow.xi must lie in (0, 1/2]");
    for (const std::string key : {"shadow.eta", "shadow.probes"})
        for (double e : numbers(key)) require(e > 0.0 && e < std::min(c, 1.0 - c), key + " entries must lie in (0, min(c,1-c))");
    require(integer("shadow.trials") >= 1 && integer("shadow.probe_trials") >= 1, "shadow trial counts must be positive");
    require(integer("rlyap.n") >= 1 && integer("rlyap.trials") >= 1, "rlyap.n and rlyap.trials must be positive");
    require(integer("run.seed") >= 0, "run.seed must be nonnegative");
    require(integer("run.threads") >= 1, "run.threads must be at least 1");
    require(!text("run.out").empty(), "run.out must be set");
    for (const auto& s : stage_names()) flag("stages." + s);
}

std::string ExperimentConfig::canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
    return s;
}

std::string ExperimentConfig::hash() const {
    // FNV-1a, 64 bit
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::set<std::string> ExperimentConfig::enabled_stages() const {
    std::set<std::string> s;
    for (const auto& name : stage_names())
        if (flag("stages." + name)) s.insert(name);
    return s;
}

bool RunManifest::ok() const {
    for (const auto& s : stages)
        if (s.status != "ok") return false;
    return true;
}

const StageRecord* RunManifest::find(const std::string& stage) const {
    for (const auto& s : stages)
        if (s.name == stage) return &s;
    return nullptr;
}

std::string RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["version"] = version;
    j["out_dir"] = out_dir;
    j["stages"] = nlohmann::ordered_json::array();
    for (const auto& s : stages) {
        nlohmann::ordered_json e;
        e["name"] = s.name;
        e["status"] = s.status;
        e["seconds"] = s.seconds;
        e["outputs"] = s.outputs;
        e["diagnostic"] = s.diagnostic;
        nlohmann::ordered_json sum = nlohmann::ordered_json::array();
        for (const auto& [k, v] : s.summary) sum.push_back({k, v});
        e["summary"] = sum;
        j["stages"].push_back(e);
    }
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.out_dir = j.value("out_dir", "");
    for (const auto& e : j.at("stages")) {
        StageRecord s;
        s.name = e.at("name").get<std::string>();
        s.status = e.at("status").get<std::string>();
        s.seconds = e.value("seconds", 0.0);
        s.outputs = e.value("outputs", std::vector<std::string>{});
        s.diagnostic = e.value("diagnostic", "");
        for (const auto& kv : e.at("summary")) s.summary.push_back({kv.at(0).get<std::string>(), kv.at(1).get<std::string>()});
        m.stages.push_back(std::move(s));
    }
    return m;
}

RunManifest run(const ExperimentConfig& config) { return run(config, config.enabled_stages()); }

RunManifest run(const ExperimentConfig& config, const std::set<std::string>& requested) {
    config.validate();
    std::set<std::string> stages;
    for (const auto& s : requested) {
        const auto c = stage_closure(s);
        stages.insert(c.begin(), c.end());
    }
    RunManifest man;
    man.config_hash = config.hash();
    man.version = LORENZ_VERSION;
    man.out_dir = config.text("run.out");
    const fs::path out(man.out_dir);
    fs::create_directories(out);

    Context ctx(config, out);
    ctx.seed = static_cast<std::uint64_t>(config.integer("run.seed"));
    ctx.threads = static_cast<int>(config.integer("run.threads"));
    bool halted = false;
    for (const auto& name : stage_names()) {
        if (!stages.count(name)) continue;
        StageRecord rec;
        rec.name = name;
        if (halted) {
            rec.status = "skipped";
            rec.diagnostic = "upstream stage failed";
            man.stages.push_back(std::move(rec));
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
            stage_table().at(name)(ctx, rec);
            rec.status = "ok";
        } catch (const std::exception& e) {
            rec.status = "failed";
            rec.diagnostic = e.what();
            halted = true;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        man.stages.push_back(std::move(rec));
    }
    std::ofstream(out / "manifest.json", std::ios::binary) << man.to_json();
    return man;
}

namespace {

std::string lookup(const StageRecord& s, const std::string& key) {
    for (const auto& [k, v] : s.summary)
        if (k == key) return v;
    return "";
}

std::vector<long> parse_longs(const std::string& s) {
    std::vector<long> out;
    for (const auto& item : split(s, ','))
        if (!item.empty()) out.push_back(std::stol(item));
    return out;
}

// "S_n = k^n" when both return times are the same power sequence
std::string return_time_line(const StageRecord& s) {
    const auto sm = parse_longs(lookup(s, "S_minus")), sp = parse_longs(lookup(s, "S_plus"));
    if (sm.empty() || sm != sp) {
        std::string line = "S_n^- = " + lookup(s, "S_minus") + "; S_n^+ = " + lookup(s, "S_plus");
        return line;
    }
    const long k = sm.front();
    long p = 1;
    for (std::size_t i = 0; i < sm.size(); ++i) {
        p *= k;
        if (sm[i] != p) return "S_n = " + lookup(s, "S_minus");
    }
    return "S_n = " + std::to_string(k) + "^n (n = 1.." + std::to_string(sm.size()) + ")";
}

}  // namespace

std::string report(const RunManifest& m) {
    if (m.stages.empty()) return "no stages run\n";
    std::ostringstream os;
    os << "run " << m.config_hash << " (version " << m.version << ") in " << m.out_dir << "\n";
    for (const auto& s : m.stages) {
        os << "  " << s.name << ": " << s.status;
        if (!s.diagnostic.empty()) os << " - " << s.diagnostic;
        os << "\n";
    }
    if (const auto* s = m.find("tune"); s) {
        if (s->status == "ok")
            os << "map: u = " << lookup(*s, "u") << ", v = " << lookup(*s, "v") << ", certified depth "
               << lookup(*s, "certified_depth") << ", max residual " << lookup(*s, "max_residual") << "\n";
        else if (!lookup(*s, "failing_depth").empty())
            os << "tune failed at depth " << lookup(*s, "failing_depth") << "\n";
    }
    if (const auto* s = m.find("levels"); s && s->status == "ok") {
        os << return_time_line(*s) << "; S_n >= 2^n: " << lookup(*s, "S_n_at_least_2^n") << "\n";
        const auto sm = parse_longs(lookup(*s, "S_minus")), sp = parse_longs(lookup(*s, "S_plus"));
        os << "   n   S_n^-   S_n^+\n";
        for (std::size_t i = 0; i < sm.size() && i < sp.size(); ++i) {
            char line[64];
            std::snprintf(line, sizeof line, "  %2zu %7ld %7ld\n", i + 1, sm[i], sp[i]);
            os << line;
        }
    }
    if (const auto* s = m.find("geometry"); s && s->status == "ok")
        os << "geometry: " << lookup(*s, "verdict") << " at audited depth " << lookup(*s, "audited_depth")
           << " (mu = " << lookup(*s, "mu_hat") << ", lambda = " << lookup(*s, "lambda_hat")
           << ", K = " << lookup(*s, "K_hat") << ")\n";
    if (const auto* s = m.find("measure"); s && s->status == "ok")
        os << "measure: W1(physical, Birkhoff) = " << lookup(*s, "W1_birkhoff") << " < " << lookup(*s, "W1_bound")
           << "; mass bounds " << lookup(*s, "mass_bounds") << "\n";
    if (const auto* s = m.find("recurrence"); s && s->status == "ok") {
        os << "recurrence: within bound " << lookup(*s, "within_bound") << ", envelope shrinks "
           << lookup(*s, "envelope_shrinks") << ", visit violations " << lookup(*s, "visit_violations") << "\n";
        os << "  start  delta  envelope  bound\n";
        for (const auto& [k, v] : s->summary)
            if (k.rfind("envelope_", 0) == 0 && k != "envelope_shrinks")
                os << "  " << k.substr(9, 3) << "  " << v << "\n";
    }
    if (const auto* s = m.find("lyapunov"); s && s->status == "ok")
        os << "exponent trace: c1- " << lookup(*s, "trace_c1-") << ", c1+ " << lookup(*s, "trace_c1+")
           << "; chi_mu = " << lookup(*s, "chi_mu") << "\n";
    if (const auto* s = m.find("integrability"); s && s->status == "ok")
        os << "integrability: C2 = " << lookup(*s, "C2") << ", nondecreasing " << lookup(*s, "nondecreasing")
           << ", bounded " << lookup(*s, "bounded") << "\n";
    if (const auto* s = m.find("stability"); s && s->status == "ok") {
        os << "stability: W1 " << lookup(*s, "W1_first") << " -> " << lookup(*s, "W1_last") << " (ratio "
           << lookup(*s, "ratio") << ")\n  eps  W1\n";
        for (const auto& [k, v] : s->summary)
            if (k == "point") os << "  " << v << "\n";
    }
    if (const auto* s = m.find("shadow"); s && s->status == "ok")
        os << "shadowing: witness delta " << lookup(*s, "witness_delta") << ", all pass " << lookup(*s, "all_pass")
           << "\n";
    if (const auto* s = m.find("rlyap"); s && s->status == "ok")
        os << "random exponent: chi+ " << lookup(*s, "chi_plus_first") << " -> " << lookup(*s, "chi_plus_last") << "\n";
    return os.str();
}

}  // namespace lorenz
