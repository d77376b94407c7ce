#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sttraffic/analytics.hpp"
#include "sttraffic/simulator.hpp"
#include "sttraffic/traffic.hpp"

namespace sttraffic {

// ---------------------------------------------------------------------------
// Raw configuration text
//
//   # comment
//   [section]
//   key = value            lists are comma separated
//
// Keys keep the line they came from so that later validation can point at it.

struct ConfigEntry {
    std::string value;
    int line = 0;  ///< position in the file; orders [network] keys
    bool overridden = false;
};

struct RawConfig {
    std::string source = "<config>";
    std::map<std::string, std::map<std::string, ConfigEntry>> sections;

    bool has(const std::string& section, const std::string& key) const;
    const ConfigEntry* find(const std::string& section, const std::string& key) const;
    /// "source:line: [section] key: " prefix for diagnostics.
    std::string where(const std::string& section, const std::string& key) const;
};

RawConfig parse_config(std::string_view text, std::string source = "<config>");
RawConfig load_config(const std::filesystem::path& path);

/// Applies `section.key=value`, replacing any value from the file. An empty
/// value removes the key.
void apply_override(RawConfig& config, std::string_view assignment);

// ---------------------------------------------------------------------------
// Interpreted experiment

enum class ScenarioKind { link, pmf, arrival_variance, unstable, sir_static, coupled, delay_oracle };

std::string_view to_string(ScenarioKind kind);

/// Cluster parameters given by r_c and one of lambda_p / lambda_c; the other
/// follows from lambda_u, so one PcpSpec serves every point of a lambda_u sweep.
struct PcpSpec {
    double r_c = 0.0;
    std::optional<double> lambda_p;
    std::optional<double> lambda_c;

    PcpParams resolve(double lambda_u) const;
};

struct PopulationSpec {
    std::string name = "ppp";
    PopulationModel model = PopulationModel::ppp;
    std::optional<PcpSpec> pcp;
};

struct SimulationControls {
    std::uint64_t horizon = 1'000'000;
    std::optional<std::uint64_t> warmup;
    std::uint64_t replications = 1;
    std::uint64_t seed = 0;
    std::uint64_t samples = 1'000'000;         ///< static SIR samples per replication
    std::uint64_t variance_replications = 2000;  ///< arrival-variance cells per replication
    double bs_per_window = 100.0;
    Scheduling scheduling = Scheduling::all_users;
    AssociationMode association = AssociationMode::per_user;
    bool interference = true;
    InterferenceField interference_field = InterferenceField::unconditioned;  ///< static SIR only
    bool enabled_for_reproduce = false;
};

struct NumericSeries {
    std::string key;
    std::vector<double> values;
};

struct ExperimentConfig {
    std::string name;
    ScenarioKind kind = ScenarioKind::link;
    /// Network keys with their values, in file order. A key with several
    /// values spans a family of curves.
    std::vector<NumericSeries> network;
    std::vector<ArrivalRateDistribution> rates;
    std::vector<PopulationSpec> populations;
    std::string sweep_variable;
    std::vector<double> grid;
    std::vector<std::string> metrics;  ///< empty: every metric of the scenario kind
    SimulationControls simulation;
    std::string output;  ///< base file name for reproduce
    unsigned threads = 0;  ///< 0: hardware concurrency
};

ExperimentConfig interpret_config(const RawConfig& raw);
ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Numeric keys accepted in [network] and as a sweep variable.
const std::vector<std::string>& network_keys();

// ---------------------------------------------------------------------------
// Sweep output: sweep_var,value,metric,estimate,stderr,source

struct SweepRow {
    std::string sweep_var;
    double value = 0.0;
    std::string metric;
    std::optional<double> estimate;  ///< absent for an unstable delay
    double stderr = 0.0;
    std::string source;
};

inline constexpr std::string_view kSweepHeader = "sweep_var,value,metric,estimate,stderr,source";
inline constexpr std::string_view kUnstableToken = "unstable";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(std::istream& in, const std::string& source = "<csv>");
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

std::vector<SweepRow> run_analytic_sweep(const ExperimentConfig& config);
std::vector<SweepRow> run_simulation_sweep(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Comparison

/// Per-metric tolerance. Grammar, comma separated:
///   *=0.02                  default relative tolerance
///   busy_probability=0.1:informational
///   mean_delay=0.02:upper   pass when simulated <= analytic (1 + tol)
/// A metric matches on its name before any `[...]` series label.
struct ToleranceRule {
    double relative = 0.0;
    bool informational = false;
    bool upper_bound = false;
};

struct ToleranceSpec {
    ToleranceRule fallback{0.02, false, false};
    std::map<std::string, ToleranceRule> per_metric;

    static ToleranceSpec parse(std::string_view text);
    const ToleranceRule& rule_for(std::string_view metric) const;
};

struct ComparisonRow {
    std::string sweep_var;
    double value = 0.0;
    std::string metric;
    std::optional<double> analytic;
    std::optional<double> simulated;
    double stderr = 0.0;
    double relative_gap = 0.0;
    ToleranceRule rule;
    bool passed = false;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::vector<std::string> unmatched_metrics;

    /// True when every non-informational row passed.
    bool passed() const;
    std::size_t failures(bool include_informational = false) const;
    void write_csv(std::ostream& out) const;
    void write_summary(std::ostream& out) const;
};

/// Joins on (sweep_var, value, metric) for metrics present in both inputs;
/// throws ConfigError listing rows that exist on one side only.
ComparisonReport compare(const std::vector<SweepRow>& analytic, const std::vector<SweepRow>& simulated,
                         const ToleranceSpec& tolerance);

// ---------------------------------------------------------------------------

/// Output directory: the explicit argument, else $STTRAFFIC_OUTPUT_DIR, else the working directory.
std::filesystem::path resolve_output_dir(const std::optional<std::string>& explicit_dir = std::nullopt);

/// Directory holding the canned figure configs: $STTRAFFIC_CONFIG_DIR or the source tree.
std::filesystem::path config_dir();

inline constexpr std::string_view kOutputDirEnv = "STTRAFFIC_OUTPUT_DIR";
inline constexpr std::string_view kConfigDirEnv = "STTRAFFIC_CONFIG_DIR";

}  // namespace sttraffic
