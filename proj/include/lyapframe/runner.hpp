#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "lyapframe/ode.hpp"
#include "lyapframe/vector_field.hpp"

namespace lyapframe {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum class ExperimentType { spectrum, reduced, perturb, counterexample, diagnostics };
std::string to_string(ExperimentType t);

struct ExperimentEntry {
    ExperimentType type = ExperimentType::spectrum;
    /// Parameters as written in the config (empty object for bare names).
    nlohmann::json params = nlohmann::json::object();
    /// Artifact stem, unique within the config.
    std::string key;
};

struct ExperimentConfig {
    nlohmann::json raw;
    VectorFieldSpec field;
    Vec x0;
    unsigned long long frame_seed = 0;
    bool auto_ell = true;
    /// Negative selects the scale-aware default.
    double epsilon_zero = -1.0;
    /// Rows of the reduced system in the ascending frame (0 = slowest).
    std::vector<int> indices;
    double duration = 100.0;
    double burn_in = -1.0;
    /// Length of the backward settle sweep for the ascending frame.
    double settle = -1.0;
    SolverConfig solver = SolverConfig::frame_default();
    std::vector<ExperimentEntry> experiments;
    std::string output_dir;
};

/// Schema and referential checks; every message starts with a JSON pointer.
std::vector<std::string> validate_config(const nlohmann::json& j);

/// Throws ConfigError listing every validation error.
ExperimentConfig parse_config(const nlohmann::json& j);

/// SHA-256 hex digest of the canonical (sorted-key, compact) config dump.
std::string config_hash(const nlohmann::json& j);
std::string sha256_hex(const std::string& bytes);

struct ArtifactRecord {
    std::string path;
    std::string sha256;
    std::size_t bytes = 0;
};

struct RunManifest {
    std::string config_hash;
    std::string version = kToolkitVersion;
    std::vector<ArtifactRecord> artifacts;
    /// Stage or experiment key -> wall-clock seconds.
    std::vector<std::pair<std::string, double>> timings;
    /// Experiment key -> error message.
    std::vector<std::pair<std::string, std::string>> failures;

    nlohmann::json to_json() const;
};

struct RunOptions {
    /// Overrides the config's output_dir when non-empty.
    std::string output_dir;
    int threads = 1;
};

/// Runs every experiment, writes artifacts and manifest.json. Independent
/// experiments keep going when one fails; failures land in the manifest.
RunManifest run_experiments(const ExperimentConfig& cfg, const RunOptions& opts);

/// Exit codes of the command-line front end.
enum ExitCode { exit_ok = 0, exit_partial = 1, exit_config = 2 };

int run_command(const std::string& config_path, const RunOptions& opts, std::ostream& log);
int validate_command(const std::string& config_path, std::ostream& log);

} // namespace lyapframe
