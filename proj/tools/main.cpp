#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lorenz/pipeline.hpp"

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    long long seed = -1;
    int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config,-c", c.config, "configuration file");
    app->add_option("--set", c.sets, "override: key=value (repeatable)");
    app->add_option("--seed", c.seed, "run.seed");
    app->add_option("--out,-o", c.out, "output directory");
    app->add_option("--threads,-j", c.threads, "worker threads");
}

lorenz::ExperimentConfig build_config(const Common& c) {
    auto cfg = c.config.empty() ? lorenz::ExperimentConfig() : lorenz::ExperimentConfig::load(c.config);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw lorenz::ConfigInvalid("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed >= 0) cfg.set("run.seed", std::to_string(c.seed));
    if (!c.out.empty()) cfg.set("run.out", c.out);
    if (const char* env = std::getenv("LORENZ_THREADS")) cfg.set("run.threads", env);
    if (c.threads > 0) cfg.set("run.threads", std::to_string(c.threads));
    return cfg;
}

int finish(const lorenz::RunManifest& m) {
    std::cout << lorenz::report(m);
    return m.ok() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lorenz map renormalization and stochastic stability experiments"};
    app.require_subcommand(1);

    Common common;
    std::string stage_run;
    for (const auto& name : lorenz::stage_names()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " stage and what it needs");
        add_common(sub, common);
        sub->callback([&stage_run, name] { stage_run = name; });
    }
    auto* run = app.add_subcommand("run", "run every stage enabled in the configuration");
    add_common(run, common);

    std::string report_dir;
    auto* rep = app.add_subcommand("report", "summarize a finished run");
    rep->add_option("dir", report_dir, "run output directory")->required();

    auto* cfgcmd = app.add_subcommand("config", "print the resolved configuration and its hash");
    add_common(cfgcmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rep->parsed()) {
            std::ifstream f(report_dir + "/manifest.json");
            if (!f) {
                std::cerr << "no manifest.json in " << report_dir << "\n";
                return 2;
            }
            std::stringstream ss;
            ss << f.rdbuf();
            std::cout << lorenz::report(lorenz::RunManifest::from_json(ss.str()));
            return 0;
        }
        const auto cfg = build_config(common);
        if (cfgcmd->parsed()) {
            cfg.validate();
            std::cout << cfg.canonical() << "# hash " << cfg.hash() << "\n";
            return 0;
        }
        if (run->parsed()) return finish(lorenz::run(cfg));
        return finish(lorenz::run(cfg, {stage_run}));
    } catch (const lorenz::ConfigInvalid& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
