#pragma once

// Command layer of the regstab executable. Commands return named artifacts
// (CSV/JSON/SVG text) so they can be written to a directory, printed, or
// compared in tests without touching the filesystem.

#include <regstab/io.hpp>
#include <regstab/regstab.hpp>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace regstab::cli {

using json = nlohmann::json;

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3 };

/// Schema violation; `path` is a JSON pointer into the config (or a flag name).
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& message)
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct PolicySpec {
    std::string  id;
    LinearPolicy policy;
};

struct CounterexampleConfig {
    Matrix                   A, B, Q, R;
    std::vector<double>      alpha_grid;
    std::optional<double>    alpha; // unset: first grid point in Gamma
    double                   W = 1.0;
    double                   X = 1.0;
    std::vector<std::size_t> T_grid;
    std::uint64_t            seed = 0;
};

struct ExperimentConfig {
    std::optional<SystemDynamics>     system;
    std::vector<PolicySpec>           policies;
    std::optional<QuadraticStageCost> costs;
    DisturbanceRecipe                 recipe;
    Vector                            x0;
    double                            X = 0.0;
    std::vector<std::size_t>          horizons;
    std::size_t                       T = 0;
    GrowthThresholds                  growth;
    StabilityOptions                  stability;
    bool                              certificate = false;
    CertificateOptions                certificate_options;
    CounterexampleConfig              counterexample;
    json                              metadata; // effective settings, defaults included
};

/// Command-line settings that take precedence over the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string>   horizons;
    std::optional<std::string>   recipe;
    std::vector<std::string>     thresholds; // key=value
    bool                         certificate = false;
    std::optional<std::string>   policy;
};

struct Artifact {
    std::string name;
    std::string content;
};

/// "a:b" or "a:b:step", inclusive of b when reached.
[[nodiscard]] std::vector<std::size_t> parse_horizons(const std::string& spec);

[[nodiscard]] ExperimentConfig parse_config(const json& doc, const Overrides& overrides = {});

/// The two-state, single-input example with the three fixed gains.
[[nodiscard]] json figure1_document();

[[nodiscard]] std::vector<Artifact> cmd_simulate(const ExperimentConfig& cfg);
[[nodiscard]] std::vector<Artifact> cmd_stability(const ExperimentConfig& cfg);
[[nodiscard]] std::vector<Artifact> cmd_regret(const ExperimentConfig& cfg);
[[nodiscard]] std::vector<Artifact> cmd_figure1(const ExperimentConfig& cfg);
[[nodiscard]] std::vector<Artifact> cmd_counterexample(const ExperimentConfig& cfg);

/// Curves computed for the figure command, exposed for checks.
[[nodiscard]] std::vector<std::pair<std::string, RegretCurve>> figure1_curves(const ExperimentConfig& cfg);

/// Full command-line entry point. Diagnostics go to `err` as one JSON object.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace regstab::cli
