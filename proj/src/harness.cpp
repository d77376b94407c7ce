#include "sttraffic/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "csv_util.hpp"

namespace sttraffic {

namespace {

// One curve of a figure: a fixed choice for every list-valued key.
struct Series {
    std::map<std::string, double> values;
    const ArrivalRateDistribution* rate = nullptr;
    const PopulationSpec* population = nullptr;
    std::string label;  // "[alpha=4;model=pcp]" or empty
};

std::vector<Series> expand_series(const ExperimentConfig& cfg) {
    std::vector<Series> out(1);
    std::vector<std::string> labelled;
    for (const NumericSeries& s : cfg.network) {
        if (s.key == cfg.sweep_variable) continue;
        std::vector<Series> next;
        for (const Series& base : out)
            for (double v : s.values) {
                Series e = base;
                e.values[s.key] = v;
                if (s.values.size() > 1) e.label += (e.label.empty() ? "" : ";") + s.key + "=" + csv::format_double(v);
                next.push_back(std::move(e));
            }
        out = std::move(next);
    }
    if (!cfg.rates.empty()) {
        std::vector<Series> next;
        for (const Series& base : out)
            for (const auto& rate : cfg.rates) {
                Series e = base;
                e.rate = &rate;
                if (cfg.rates.size() > 1) e.label += (e.label.empty() ? "" : ";") + ("rate=" + rate.to_string());
                next.push_back(std::move(e));
            }
        out = std::move(next);
    }
    std::vector<Series> next;
    for (const Series& base : out)
        for (const auto& pop : cfg.populations) {
            Series e = base;
            e.population = &pop;
            if (cfg.populations.size() > 1) e.label += (e.label.empty() ? "" : ";") + ("model=" + pop.name);
            next.push_back(std::move(e));
        }
    for (Series& e : next)
        if (!e.label.empty()) e.label = "[" + e.label + "]";
    return next;
}

// Parameter values of one series at one grid value.
class Point {
public:
    Point(const ExperimentConfig& cfg, const Series& series, double grid_value)
        : cfg_(cfg), series_(series), values_(series.values) {
        values_[cfg.sweep_variable] = grid_value;
    }

    std::optional<double> get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    double require(const std::string& key) const {
        const auto v = get(key);
        if (!v)
            throw ConfigError("scenario kind '" + std::string(to_string(cfg_.kind)) + "' needs '" + key +
                              "' in [network] or as the sweep variable");
        return *v;
    }

    std::uint64_t require_count(const std::string& key) const {
        const double v = require(key);
        if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError("'" + key + "' must be a non-negative integer");
        return static_cast<std::uint64_t>(v);
    }

    const ArrivalRateDistribution& rate() const {
        if (!series_.rate)
            throw ConfigError("scenario kind '" + std::string(to_string(cfg_.kind)) + "' needs [traffic] rate");
        return *series_.rate;
    }

    PopulationModel model() const { return series_.population->model; }

    NetworkParameters params() const {
        NetworkParameters p;
        p.lambda_b = get("lambda_b").value_or(p.lambda_b);
        p.lambda_u = get("lambda_u").value_or(p.lambda_u);
        if (const auto db = get("theta_db")) p.theta = db_to_linear(*db);
        p.theta = get("theta").value_or(p.theta);
        p.alpha = get("alpha").value_or(p.alpha);
        p.beta = get("beta").value_or(p.beta);
        p.p_b = get("p_b").value_or(p.p_b);
        if (series_.population->pcp) p.pcp = series_.population->pcp->resolve(p.lambda_u);
        p.validate_for(model());
        return p;
    }

    double tol() const { return get("tol").value_or(1e-10); }

private:
    const ExperimentConfig& cfg_;
    const Series& series_;
    std::map<std::string, double> values_;
};

struct Value {
    std::string metric;
    std::optional<double> estimate;
    double stderr = 0.0;
};

Value delay_value(const DelayResult& d) { return {"mean_delay", d.as_optional(), 0.0}; }

std::vector<Value> analytic_values(const ExperimentConfig& cfg, const Point& pt) {
    const NetworkParameters p = pt.params();
    std::vector<Value> out;
    switch (cfg.kind) {
        case ScenarioKind::link: {
            const double n = pt.require("users");
            const double xi0 = pt.require("xi0");
            out.push_back({"busy_probability", solve_busy_probability(n, xi0, p.theta, p.alpha)});
            out.push_back({"success_probability", approx_success_probability(n, xi0, p.theta, p.alpha)});
            out.push_back({"achievable_rate", achievable_rate(n, xi0, p.theta, p.alpha)});
            out.push_back({"service_rate", service_rate(n, xi0, p.theta, p.alpha)});
            out.push_back(delay_value(mean_delay(n, xi0, p.theta, p.alpha)));
            out.push_back({"b0", saturation_rate(n, p.theta, p.alpha)});
            if (xi0 > 0.0 && xi0 < 1.0) {
                const auto th = stability_thresholds(xi0, p.theta, p.alpha, p.beta);
                out.push_back({"a1", th.a1});
                out.push_back({"a2", th.a2});
            }
            break;
        }
        case ScenarioKind::pmf: {
            const auto k = static_cast<std::int64_t>(pt.require_count("k"));
            const double s = pt.require("area");
            const double v = pt.model() == PopulationModel::ppp ? pmf_users_ppp(k, p.lambda_u, s)
                                                                 : pmf_users_pcp(k, *p.pcp, s, pt.tol());
            out.push_back({"pmf", v});
            break;
        }
        case ScenarioKind::arrival_variance: {
            const ArrivalMoments m = total_arrival_moments(pt.rate(), p, pt.model());
            out.push_back({"arrival_mean", m.mean});
            out.push_back({"arrival_variance", m.variance});
            break;
        }
        case ScenarioKind::unstable:
            out.push_back({"unstable_probability",
                           unstable_probability(pt.rate(), pt.model(), p, pt.require("area"), pt.tol())});
            break;
        case ScenarioKind::sir_static:
            out.push_back({"success_probability", success_probability(pt.require("q"), p.theta, p.alpha)});
            break;
        case ScenarioKind::coupled: {
            // mean-field prediction at the mean cell population
            const double n = p.lambda_u / p.lambda_b;
            const double xi0 = std::min(rate_mean(pt.rate()), 1.0);
            out.push_back({"busy_probability", solve_busy_probability(n, xi0, p.theta, p.alpha)});
            out.push_back({"success_probability", approx_success_probability(n, xi0, p.theta, p.alpha)});
            out.push_back(delay_value(mean_delay(n, xi0, p.theta, p.alpha)));
            break;
        }
        case ScenarioKind::delay_oracle: {
            const double n = pt.require("users");
            const double xi0 = pt.require("xi0");
            out.push_back({"service_rate", service_rate(n, xi0, p.theta, p.alpha)});
            out.push_back(delay_value(mean_delay(n, xi0, p.theta, p.alpha)));
            break;
        }
    }
    return out;
}

// Replication results of one metric, merged into mean and standard error.
class Aggregate {
public:
    void add(const Value& v) {
        if (!v.estimate) {
            unstable_ = true;
        } else {
            values_.push_back(*v.estimate);
            last_stderr_ = v.stderr;
        }
        ++count_;
    }

    Value result(const std::string& metric) const {
        Value out{metric, std::nullopt, 0.0};
        if (unstable_ || values_.empty()) return out;
        if (count_ == 1) {
            out.estimate = values_.front();
            out.stderr = last_stderr_;
            return out;
        }
        const double n = static_cast<double>(values_.size());
        double mean = 0.0;
        for (double x : values_) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : values_) ss += (x - mean) * (x - mean);
        out.estimate = mean;
        out.stderr = std::sqrt(ss / (n - 1.0) / n);
        return out;
    }

private:
    std::vector<double> values_;
    double last_stderr_ = 0.0;
    std::size_t count_ = 0;
    bool unstable_ = false;
};

std::vector<Value> simulated_replication(const ExperimentConfig& cfg, const Point& pt, std::uint64_t seed) {
    const NetworkParameters p = pt.params();
    const SimulationControls& sim = cfg.simulation;
    std::vector<Value> out;
    switch (cfg.kind) {
        case ScenarioKind::sir_static: {
            const Estimate e = run_sir_static(p, pt.require("q"), sim.samples, seed,
                                            {sim.bs_per_window, sim.interference_field});
            out.push_back({"success_probability", e.value, e.stderr});
            break;
        }
        case ScenarioKind::coupled: {
            CoupledOptions o;
            o.horizon = sim.horizon;
            o.warmup = sim.warmup;
            o.seed = seed;
            o.model = pt.model();
            o.association = sim.association;
            o.scheduling = sim.scheduling;
            o.interference = sim.interference;
            o.bs_per_window = sim.bs_per_window;
            const MetricsReport r = run_coupled(p, pt.rate(), o);
            out.push_back({"busy_probability", r.empirical_busy_prob});
            out.push_back({"success_probability", r.empirical_success_prob});
            out.push_back({"mean_delay", r.delay_samples > 0 ? std::optional<double>(r.per_user_mean_delay) : std::nullopt});
            if (r.unstable_fraction) out.push_back({"unstable_fraction", *r.unstable_fraction});
            out.push_back({"clamped_rate_fraction", r.clamped_rate_fraction});
            break;
        }
        case ScenarioKind::delay_oracle: {
            const std::uint64_t n = pt.require_count("users");
            const double xi0 = pt.require("xi0");
            const double mu = service_rate(static_cast<double>(n), xi0, p.theta, p.alpha);
            DelayOracleOptions o;
            o.warmup = sim.warmup.value_or(0);
            const DelayOracleResult r = run_delay_oracle(n, xi0, mu, sim.horizon, seed, o);
            out.push_back({"mean_delay", r.mean_delay.as_optional(), r.stderr});
            break;
        }
        case ScenarioKind::arrival_variance: {
            ArrivalVarianceOptions o;
            o.bs_per_window = sim.bs_per_window;
            o.association = sim.association;
            const auto e = estimate_total_arrival_variance(p, pt.rate(), pt.model(), sim.variance_replications, seed, o);
            out.push_back({"arrival_mean", e.mean, e.mean_stderr});
            out.push_back({"arrival_variance", e.variance, e.variance_stderr});
            break;
        }
        default:
            throw ConfigError("scenario kind '" + std::string(to_string(cfg.kind)) + "' has no simulation counterpart");
    }
    return out;
}

std::vector<Value> simulated_values(const ExperimentConfig& cfg, const Point& pt) {
    std::vector<std::string> order;
    std::map<std::string, Aggregate> merged;
    for (std::uint64_t i = 0; i < cfg.simulation.replications; ++i) {
        // documented splitting rule: replication i runs with base_seed + i
        for (const Value& v : simulated_replication(cfg, pt, cfg.simulation.seed + i)) {
            if (!merged.count(v.metric)) order.push_back(v.metric);
            merged[v.metric].add(v);
        }
    }
    std::vector<Value> out;
    for (const auto& m : order) out.push_back(merged.at(m).result(m));
    return out;
}

const std::set<std::string>& known_metrics() {
    static const std::set<std::string> names{
        "busy_probability", "success_probability", "achievable_rate",   "service_rate", "mean_delay",
        "b0",               "a1",                  "a2",                "pmf",          "arrival_mean",
        "arrival_variance", "unstable_probability", "unstable_fraction", "clamped_rate_fraction"};
    return names;
}

std::string base_metric(std::string_view metric) { return std::string(metric.substr(0, metric.find('['))); }

void rethrow_with_context(std::exception_ptr error, const std::string& context) {
    try {
        std::rethrow_exception(error);
    } catch (const ParameterError& e) {
        throw ParameterError(context + e.what());
    } catch (const NumericError& e) {
        throw NumericError(context + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(context + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(context + e.what());
    }
}

using PointEvaluator = std::function<std::vector<Value>(const ExperimentConfig&, const Point&)>;

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const PointEvaluator& evaluate, const std::string& source) {
    for (const auto& m : cfg.metrics)
        if (!known_metrics().count(m)) throw ConfigError("[metrics] list: unknown metric '" + m + "'");
    const std::vector<Series> series = expand_series(cfg);
    const std::size_t points = cfg.grid.size();

    std::vector<std::vector<SweepRow>> rows(points);
    std::vector<std::exception_ptr> errors(points);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t g = next++; g < points; g = next++) {
            try {
                for (const Series& s : series) {
                    const Point pt(cfg, s, cfg.grid[g]);
                    for (const Value& v : evaluate(cfg, pt)) {
                        if (!cfg.metrics.empty() &&
                            std::find(cfg.metrics.begin(), cfg.metrics.end(), v.metric) == cfg.metrics.end())
                            continue;
                        rows[g].push_back({cfg.sweep_variable, cfg.grid[g], v.metric + s.label, v.estimate, v.stderr,
                                           source});
                    }
                }
            } catch (...) {
                errors[g] = std::current_exception();
            }
        }
    };
    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, points));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t g = 0; g < points; ++g)
        if (errors[g])
            rethrow_with_context(errors[g], cfg.name + ": grid point " + cfg.sweep_variable + "=" +
                                                csv::format_double(cfg.grid[g]) + ": ");

    std::vector<SweepRow> out;
    for (auto& r : rows) out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<SweepRow> run_analytic_sweep(const ExperimentConfig& config) {
    return run_sweep(config, analytic_values, "analytic");
}

std::vector<SweepRow> run_simulation_sweep(const ExperimentConfig& config) {
    return run_sweep(config, simulated_values, "simulation");
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << kSweepHeader << '\n';
    for (const SweepRow& r : rows) {
        out << r.sweep_var << ',' << csv::format_double(r.value) << ',' << r.metric << ',';
        if (r.estimate) out << csv::format_double(*r.estimate);
        else out << kUnstableToken;
        out << ',' << csv::format_double(r.stderr) << ',' << r.source << '\n';
    }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != kSweepHeader)
        throw ConfigError(source + ":1: expected header '" + std::string(kSweepHeader) + "'");
    std::vector<SweepRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto fields = csv::split(line, ',');
        const std::string at = source + ":" + std::to_string(line_no) + ": ";
        if (fields.size() != 6) throw ConfigError(at + "expected 6 fields, found " + std::to_string(fields.size()));
        try {
            SweepRow r;
            r.sweep_var = fields[0];
            r.value = csv::parse_double(fields[1], "value");
            r.metric = fields[2];
            if (fields[3] != kUnstableToken) r.estimate = csv::parse_double(fields[3], "estimate");
            r.stderr = csv::parse_double(fields[4], "stderr");
            r.source = fields[5];
            rows.push_back(std::move(r));
        } catch (const ConfigError& e) {
            throw ConfigError(at + e.what());
        }
    }
    return rows;
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    return read_sweep_csv(in, path.string());
}

// ---------------------------------------------------------------------------

ToleranceSpec ToleranceSpec::parse(std::string_view text) {
    ToleranceSpec spec;
    for (const auto& item : csv::split(text, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("tolerance '" + item + "': expected metric=value[:flags]");
        const std::string metric(csv::trim(std::string_view(item).substr(0, eq)));
        const auto parts = csv::split(std::string_view(item).substr(eq + 1), ':');
        ToleranceRule rule;
        rule.relative = csv::parse_double(parts[0], "tolerance");
        if (!(rule.relative >= 0.0)) throw ConfigError("tolerance '" + item + "': must be non-negative");
        for (std::size_t i = 1; i < parts.size(); ++i) {
            if (parts[i] == "informational") rule.informational = true;
            else if (parts[i] == "upper") rule.upper_bound = true;
            else throw ConfigError("tolerance '" + item + "': unknown flag '" + parts[i] + "'");
        }
        if (metric == "*") spec.fallback = rule;
        else spec.per_metric[metric] = rule;
    }
    return spec;
}

const ToleranceRule& ToleranceSpec::rule_for(std::string_view metric) const {
    const auto it = per_metric.find(base_metric(metric));
    return it == per_metric.end() ? fallback : it->second;
}

bool ComparisonReport::passed() const { return failures(false) == 0; }

std::size_t ComparisonReport::failures(bool include_informational) const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](const ComparisonRow& r) {
        return !r.passed && (include_informational || !r.rule.informational);
    }));
}

namespace {

std::string value_or_token(const std::optional<double>& v) {
    return v ? csv::format_double(*v) : std::string(kUnstableToken);
}

std::string mode_of(const ToleranceRule& rule) {
    std::string mode = rule.upper_bound ? "upper" : "two-sided";
    if (rule.informational) mode += "+informational";
    return mode;
}

}  // namespace

void ComparisonReport::write_csv(std::ostream& out) const {
    out << "sweep_var,value,metric,analytic,simulated,stderr,relative_gap,tolerance,mode,status\n";
    for (const ComparisonRow& r : rows) {
        out << r.sweep_var << ',' << csv::format_double(r.value) << ',' << r.metric << ','
            << value_or_token(r.analytic) << ',' << value_or_token(r.simulated) << ',' << csv::format_double(r.stderr)
            << ',' << csv::format_double(r.relative_gap) << ',' << csv::format_double(r.rule.relative) << ','
            << mode_of(r.rule) << ',' << (r.passed ? "pass" : "fail") << '\n';
    }
}

void ComparisonReport::write_summary(std::ostream& out) const {
    std::map<std::string, std::pair<double, std::size_t>> worst;  // metric -> (max gap, failures)
    for (const ComparisonRow& r : rows) {
        auto& w = worst[base_metric(r.metric)];
        if (std::isfinite(r.relative_gap)) w.first = std::max(w.first, r.relative_gap);
        else w.first = INFINITY;
        if (!r.passed) ++w.second;
    }
    out << "compared " << rows.size() << " rows\n";
    for (const auto& [metric, w] : worst)
        out << "  " << std::left << std::setw(24) << metric << " max relative gap " << csv::format_double(w.first)
            << ", failed rows " << w.second << '\n';
    for (const auto& m : unmatched_metrics) out << "  skipped (present in one input only): " << m << '\n';
    const std::size_t hard = failures(false);
    const std::size_t soft = failures(true) - hard;
    out << (hard == 0 ? "PASS" : "FAIL") << ": " << hard << " failing rows";
    if (soft) out << ", " << soft << " informational rows outside tolerance";
    out << '\n';
}

ComparisonReport compare(const std::vector<SweepRow>& analytic, const std::vector<SweepRow>& simulated,
                         const ToleranceSpec& tolerance) {
    using Key = std::tuple<std::string, double, std::string>;
    const auto key_of = [](const SweepRow& r) { return Key{r.sweep_var, r.value, r.metric}; };
    std::map<Key, const SweepRow*> sim_rows;
    std::set<std::string> sim_metrics, ana_metrics;
    for (const SweepRow& r : simulated) {
        if (!sim_rows.emplace(key_of(r), &r).second)
            throw ConfigError("simulated input repeats row " + r.sweep_var + "=" + csv::format_double(r.value) + " " +
                              r.metric);
        sim_metrics.insert(r.metric);
    }
    for (const SweepRow& r : analytic) ana_metrics.insert(r.metric);

    ComparisonReport report;
    std::vector<std::string> offending;
    std::set<Key> matched;
    for (const SweepRow& a : analytic) {
        if (!sim_metrics.count(a.metric)) continue;
        const auto it = sim_rows.find(key_of(a));
        if (it == sim_rows.end()) {
            offending.push_back("analytic only: " + a.sweep_var + "=" + csv::format_double(a.value) + " " + a.metric);
            continue;
        }
        matched.insert(key_of(a));
        const SweepRow& s = *it->second;
        ComparisonRow row;
        row.sweep_var = a.sweep_var;
        row.value = a.value;
        row.metric = a.metric;
        row.analytic = a.estimate;
        row.simulated = s.estimate;
        row.stderr = s.stderr;
        row.rule = tolerance.rule_for(a.metric);
        if (!a.estimate && !s.estimate) {
            row.relative_gap = 0.0;
            row.passed = true;
        } else if (!a.estimate || !s.estimate) {
            row.relative_gap = INFINITY;
            // an unbounded analytic value is a valid upper bound for any finite measurement
            row.passed = row.rule.upper_bound && !a.estimate;
        } else {
            const double scale = *a.estimate != 0.0 ? std::abs(*a.estimate) : 1.0;
            const double signed_gap = (*s.estimate - *a.estimate) / scale;
            row.relative_gap = std::abs(signed_gap);
            row.passed = row.rule.upper_bound ? signed_gap <= row.rule.relative : row.relative_gap <= row.rule.relative;
        }
        report.rows.push_back(row);
    }
    for (const SweepRow& s : simulated)
        if (ana_metrics.count(s.metric) && !matched.count(key_of(s)))
            offending.push_back("simulated only: " + s.sweep_var + "=" + csv::format_double(s.value) + " " + s.metric);
    if (!offending.empty()) {
        std::string msg = "grid mismatch between inputs:";
        for (const auto& o : offending) msg += "\n  " + o;
        throw ConfigError(msg);
    }
    for (const auto& m : ana_metrics)
        if (!sim_metrics.count(m)) report.unmatched_metrics.push_back(m);
    for (const auto& m : sim_metrics)
        if (!ana_metrics.count(m)) report.unmatched_metrics.push_back(m);
    return report;
}

}  // namespace sttraffic
