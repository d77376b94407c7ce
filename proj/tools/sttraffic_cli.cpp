// Command-line front end: gen, analyze, simulate, compare, reproduce.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sttraffic/geometry.hpp"
#include "sttraffic/harness.hpp"

namespace fs = std::filesystem;
using namespace sttraffic;

namespace {

struct SweepFlags {
    std::string config;
    std::string output;
    std::vector<std::string> set;
    std::optional<double> lambda_b, lambda_u, theta_db, alpha;
    std::optional<std::uint64_t> seed, horizon, replications;
    std::optional<unsigned> threads;
};

void add_sweep_flags(CLI::App* cmd, SweepFlags& f) {
    cmd->add_option("config", f.config, "Experiment config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("-o,--output", f.output, "Output CSV (default: <output-dir>/<scenario>_<mode>.csv)");
    cmd->add_option("--set", f.set, "Override a config value, section.key=value (repeatable)");
    cmd->add_option("--lambda-b", f.lambda_b, "BS intensity per m^2");
    cmd->add_option("--lambda-u", f.lambda_u, "User intensity per m^2");
    cmd->add_option("--theta-db", f.theta_db, "SIR threshold in dB");
    cmd->add_option("--alpha", f.alpha, "Path-loss exponent");
    cmd->add_option("--seed", f.seed, "Base seed");
    cmd->add_option("--horizon", f.horizon, "Simulated slots");
    cmd->add_option("--replications", f.replications, "Replications per grid point");
    cmd->add_option("--threads", f.threads, "Worker threads (0: all cores)");
}

ExperimentConfig load_with_flags(const SweepFlags& f) {
    RawConfig raw = load_config(f.config);
    for (const auto& s : f.set) apply_override(raw, s);
    const auto put = [&](const char* key, const auto& value) {
        if (!value) return;
        std::ostringstream text;
        text << std::setprecision(17) << *value;
        apply_override(raw, std::string(key) + "=" + text.str());
    };
    if (f.theta_db) raw.sections["network"].erase("theta");
    put("network.lambda_b", f.lambda_b);
    put("network.lambda_u", f.lambda_u);
    put("network.theta_db", f.theta_db);
    put("network.alpha", f.alpha);
    put("simulation.seed", f.seed);
    put("simulation.horizon", f.horizon);
    put("simulation.replications", f.replications);
    put("scenario.threads", f.threads);
    return interpret_config(raw);
}

fs::path output_path(const std::string& explicit_file, const fs::path& dir, const std::string& fallback) {
    if (!explicit_file.empty()) return explicit_file;
    fs::create_directories(dir);
    return dir / fallback;
}

void write_rows(const fs::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    write_sweep_csv(out, rows);
    std::cout << "wrote " << rows.size() << " rows to " << path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatio-temporal traffic analysis and simulation for cellular networks"};
    app.require_subcommand(1);
    std::string output_dir;
    app.add_option("--output-dir", output_dir,
                   "Directory for generated files (default: $" + std::string(kOutputDirEnv) + " or the working directory)");

    // gen
    auto* gen = app.add_subcommand("gen", "Sample a point pattern and write x,y,parent_index CSV");
    std::string gen_model = "ppp", gen_metric = "toroidal", gen_out;
    double gen_intensity = 1e-4, gen_width = 1000.0, gen_height = 1000.0, gen_rc = 0.0;
    std::optional<double> gen_lp, gen_lc;
    std::uint64_t gen_seed = 0;
    gen->add_option("--model", gen_model, "ppp or pcp")->check(CLI::IsMember({"ppp", "pcp"}));
    gen->add_option("--intensity", gen_intensity, "PPP intensity per m^2");
    gen->add_option("--lambda-p", gen_lp, "PCP parent intensity per m^2");
    gen->add_option("--lambda-c", gen_lc, "PCP daughter intensity per m^2 inside a disc");
    gen->add_option("--r-c", gen_rc, "PCP cluster radius, m");
    gen->add_option("--width", gen_width, "Window width, m");
    gen->add_option("--height", gen_height, "Window height, m");
    gen->add_option("--metric", gen_metric, "toroidal or euclidean")->check(CLI::IsMember({"toroidal", "euclidean"}));
    gen->add_option("--seed", gen_seed, "Seed")->required();
    gen->add_option("-o,--output", gen_out, "Output CSV (default: <output-dir>/points.csv)");

    SweepFlags analyze_flags, simulate_flags;
    auto* analyze = app.add_subcommand("analyze", "Evaluate closed forms over a sweep");
    add_sweep_flags(analyze, analyze_flags);
    auto* simulate = app.add_subcommand("simulate", "Run Monte Carlo over a sweep");
    add_sweep_flags(simulate, simulate_flags);

    auto* cmp = app.add_subcommand("compare", "Compare analytic and simulated sweep CSVs");
    std::string cmp_analytic, cmp_simulated, cmp_tol = "*=0.02", cmp_out;
    cmp->add_option("analytic", cmp_analytic, "Analytic sweep CSV")->required()->check(CLI::ExistingFile);
    cmp->add_option("simulated", cmp_simulated, "Simulated sweep CSV")->required()->check(CLI::ExistingFile);
    cmp->add_option("--tolerance", cmp_tol,
                    "metric=rel[:informational][:upper], comma separated; '*' sets the default");
    cmp->add_option("-o,--output", cmp_out, "Comparison report CSV");

    auto* rep = app.add_subcommand("reproduce", "Regenerate the data behind one figure from a shipped config");
    std::string figure;
    bool rep_sim = false;
    rep->add_option("figure", figure, "Figure id")
        ->required()
        ->check(CLI::IsMember({"fig3", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11"}));
    rep->add_flag("--with-simulation", rep_sim, "Also run the Monte Carlo counterpart when the config has one");

    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path dir = resolve_output_dir(output_dir.empty() ? std::nullopt : std::optional(output_dir));
        if (*gen) {
            const Window w = make_window(gen_width, gen_height,
                                         gen_metric == "toroidal" ? Metric::toroidal : Metric::euclidean_truncated);
            PointPattern pattern;
            if (gen_model == "ppp") {
                pattern = sample_ppp(gen_intensity, w, gen_seed);
            } else {
                if (!gen_lp || !gen_lc) throw ConfigError("pcp needs --lambda-p, --lambda-c and --r-c");
                pattern = sample_pcp(PcpParams{*gen_lp, *gen_lc, gen_rc}, w, gen_seed);
            }
            const fs::path path = output_path(gen_out, dir, "points.csv");
            std::ofstream out(path);
            if (!out) throw ConfigError("cannot write " + path.string());
            write_point_pattern(out, pattern);
            std::cout << "wrote " << pattern.size() << " points to " << path.string() << '\n';
            return 0;
        }
        if (*analyze) {
            const ExperimentConfig cfg = load_with_flags(analyze_flags);
            write_rows(output_path(analyze_flags.output, dir, cfg.output + "_analytic.csv"), run_analytic_sweep(cfg));
            return 0;
        }
        if (*simulate) {
            const ExperimentConfig cfg = load_with_flags(simulate_flags);
            write_rows(output_path(simulate_flags.output, dir, cfg.output + "_simulation.csv"),
                       run_simulation_sweep(cfg));
            return 0;
        }
        if (*cmp) {
            const ComparisonReport report =
                compare(read_sweep_csv(fs::path(cmp_analytic)), read_sweep_csv(fs::path(cmp_simulated)),
                        ToleranceSpec::parse(cmp_tol));
            if (!cmp_out.empty()) {
                std::ofstream out(cmp_out);
                if (!out) throw ConfigError("cannot write " + cmp_out);
                report.write_csv(out);
            }
            report.write_summary(std::cout);
            return report.passed() ? 0 : 1;
        }
        if (*rep) {
            const ExperimentConfig cfg = load_experiment(config_dir() / (figure + ".ini"));
            const auto analytic = run_analytic_sweep(cfg);
            fs::create_directories(dir);
            write_rows(dir / (cfg.output + "_analytic.csv"), analytic);
            if (rep_sim || cfg.simulation.enabled_for_reproduce) {
                if (cfg.kind != ScenarioKind::arrival_variance && cfg.kind != ScenarioKind::coupled &&
                    cfg.kind != ScenarioKind::sir_static && cfg.kind != ScenarioKind::delay_oracle) {
                    std::cout << figure << " has no Monte Carlo counterpart; analytic data only\n";
                    return 0;
                }
                const auto simulated = run_simulation_sweep(cfg);
                write_rows(dir / (cfg.output + "_simulation.csv"), simulated);
                const ComparisonReport report = compare(analytic, simulated, ToleranceSpec::parse("*=0.1"));
                std::ofstream out(dir / (cfg.output + "_comparison.csv"));
                report.write_csv(out);
                report.write_summary(std::cout);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
