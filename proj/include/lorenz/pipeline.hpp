#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lorenz {

class ConfigInvalid : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StageFailed : public std::runtime_error {
public:
    StageFailed(std::string stage, const std::string& diagnostic)
        : std::runtime_error(stage + ": " + diagnostic), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Stages in dependency order.
const std::vector<std::string>& stage_names();

/// Stages `stage` needs, transitively, itself included.
std::set<std::string> stage_closure(const std::string& stage);

/// Flat stage.key=value configuration over a fixed key set.
class ExperimentConfig {
public:
    /// All keys with their defaults.
    ExperimentConfig();

    /// Lines of `key = value`; '#' starts a comment. Unknown keys are rejected.
    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has_value(const std::string& key) const;

    const std::string& text(const std::string& key) const;
    double number(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;

    /// Every module precondition that can be checked before a stage runs.
    void validate() const;

    /// Sorted key=value lines; the hash covers exactly this text.
    std::string canonical() const;
    std::string hash() const;

    std::set<std::string> enabled_stages() const;

private:
    std::map<std::string, std::string> values_;
};

struct StageRecord {
    std::string name;
    std::string status;  // ok, failed, skipped
    double seconds = 0.0;
    std::vector<std::string> outputs;
    std::string diagnostic;
    /// Short results shown by the report, in insertion order.
    std::vector<std::pair<std::string, std::string>> summary;
};

struct RunManifest {
    std::string config_hash;
    std::string version;
    std::string out_dir;
    std::vector<StageRecord> stages;

    bool ok() const;
    const StageRecord* find(const std::string& stage) const;
    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
};

/// Runs `stages` (closed under dependencies) in order, writing CSVs and manifest.json into
/// the configured output directory. A failing stage halts everything downstream.
RunManifest run(const ExperimentConfig& config, const std::set<std::string>& stages);
RunManifest run(const ExperimentConfig& config);

std::string report(const RunManifest& manifest);

}  // namespace lorenz
