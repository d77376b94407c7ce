#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "csv_util.hpp"
#include "sttraffic/harness.hpp"

namespace sttraffic {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Recursive-descent evaluator for numeric config values: numbers, `pi`,
// + - * / and parentheses, so values such as 1/(1.1 pi) can be written as is.
class Expression {
public:
    explicit Expression(std::string_view text) : text_(text) {}

    double evaluate() {
        const double v = sum();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(text_.substr(pos_)) + "'");
        return v;
    }

private:
    double sum() {
        double v = product();
        for (;;) {
            skip_space();
            if (accept('+')) v += product();
            else if (accept('-')) v -= product();
            else return v;
        }
    }

    double product() {
        double v = unary();
        for (;;) {
            skip_space();
            if (accept('*')) v *= unary();
            else if (accept('/')) v /= unary();
            else return v;
        }
    }

    double unary() {
        skip_space();
        if (accept('-')) return -unary();
        if (accept('+')) return unary();
        if (accept('(')) {
            const double v = sum();
            skip_space();
            if (!accept(')')) fail("missing ')'");
            return v;
        }
        if (text_.substr(pos_, 2) == "pi") {
            pos_ += 2;
            return std::numbers::pi;
        }
        return number();
    }

    double number() {
        const std::size_t start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            const bool exponent_sign = (c == '+' || c == '-') && pos_ > start &&
                                       (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E');
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' || exponent_sign)
                ++pos_;
            else
                break;
        }
        if (start == pos_) fail("expected a number");
        return csv::parse_double(text_.substr(start, pos_ - start), "value");
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& why) const {
        throw ConfigError("cannot evaluate '" + std::string(text_) + "': " + why);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

// Typed accessors that attach file and line to every failure.
class Reader {
public:
    explicit Reader(const RawConfig& raw) : raw_(raw) {}

    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& why) const {
        throw ConfigError(raw_.where(section, key) + why);
    }

    std::optional<std::string> text(const std::string& section, const std::string& key) const {
        const ConfigEntry* e = raw_.find(section, key);
        if (!e) return std::nullopt;
        return e->value;
    }

    std::vector<std::string> list(const std::string& section, const std::string& key) const {
        const auto t = text(section, key);
        if (!t) return {};
        auto items = csv::split(*t, ',');
        for (const auto& item : items)
            if (item.empty()) fail(section, key, "empty list item");
        return items;
    }

    double number(const std::string& section, const std::string& key, std::string_view item) const {
        try {
            return Expression(item).evaluate();
        } catch (const ConfigError& e) {
            fail(section, key, e.what());
        }
    }

    std::vector<double> numbers(const std::string& section, const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : list(section, key)) out.push_back(number(section, key, item));
        return out;
    }

    std::optional<double> scalar(const std::string& section, const std::string& key) const {
        const auto values = numbers(section, key);
        if (values.empty()) return std::nullopt;
        if (values.size() != 1) fail(section, key, "expected a single value");
        return values.front();
    }

    std::optional<std::uint64_t> count(const std::string& section, const std::string& key) const {
        const auto v = scalar(section, key);
        if (!v) return std::nullopt;
        if (!(*v >= 0.0) || *v != std::floor(*v) || *v > 1e18) fail(section, key, "expected a non-negative integer");
        return static_cast<std::uint64_t>(*v);
    }

    std::optional<bool> flag(const std::string& section, const std::string& key) const {
        const auto t = text(section, key);
        if (!t) return std::nullopt;
        const std::string v = lower(*t);
        if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
        if (v == "false" || v == "no" || v == "0" || v == "off") return false;
        fail(section, key, "expected true or false");
    }

    void only_keys(const std::string& section, std::initializer_list<std::string_view> allowed) const {
        const auto it = raw_.sections.find(section);
        if (it == raw_.sections.end()) return;
        for (const auto& [key, entry] : it->second)
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail(section, key, "unknown key");
    }

private:
    const RawConfig& raw_;
};

std::vector<double> make_grid(const Reader& r) {
    const int given = static_cast<int>(r.text("sweep", "values").has_value()) +
                      static_cast<int>(r.text("sweep", "linspace").has_value()) +
                      static_cast<int>(r.text("sweep", "logspace").has_value());
    if (given != 1) r.fail("sweep", "values", "give exactly one of values, linspace or logspace");
    if (r.text("sweep", "values")) return r.numbers("sweep", "values");

    const bool log = r.text("sweep", "logspace").has_value();
    const std::string key = log ? "logspace" : "linspace";
    const auto spec = r.numbers("sweep", key);
    if (spec.size() != 3) r.fail("sweep", key, "expected start, stop, count");
    const double count = spec[2];
    if (count < 1.0 || count != std::floor(count)) r.fail("sweep", key, "count must be a positive integer");
    const auto n = static_cast<std::size_t>(count);
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        // endpoints are taken verbatim; integer grids stay exact
        double x = spec[0];
        if (i + 1 == n && n > 1) x = spec[1];
        else if (i > 0) x = spec[0] + (spec[1] - spec[0]) * static_cast<double>(i) / static_cast<double>(n - 1);
        grid[i] = log ? std::pow(10.0, x) : x;
    }
    return grid;
}

PcpSpec read_pcp(const Reader& r, const std::string& section) {
    r.only_keys(section, {"r_c", "lambda_p", "lambda_c"});
    PcpSpec spec;
    const auto rc = r.scalar(section, "r_c");
    if (!rc) r.fail(section, "r_c", "cluster radius is required");
    if (!(*rc > 0.0)) r.fail(section, "r_c", "must be positive");
    spec.r_c = *rc;
    spec.lambda_p = r.scalar(section, "lambda_p");
    spec.lambda_c = r.scalar(section, "lambda_c");
    if (spec.lambda_p.has_value() == spec.lambda_c.has_value())
        r.fail(section, "lambda_p", "give exactly one of lambda_p or lambda_c; the other follows from lambda_u");
    const double given = spec.lambda_p ? *spec.lambda_p : *spec.lambda_c;
    if (!(given > 0.0)) r.fail(section, spec.lambda_p ? "lambda_p" : "lambda_c", "must be positive");
    return spec;
}

}  // namespace

// ---------------------------------------------------------------------------

bool RawConfig::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

const ConfigEntry* RawConfig::find(const std::string& section, const std::string& key) const {
    const auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

std::string RawConfig::where(const std::string& section, const std::string& key) const {
    std::string out = source;
    if (const ConfigEntry* e = find(section, key); e && e->overridden) out += ": override";
    else if (e && e->line > 0) out += ":" + std::to_string(e->line);
    return out + ": [" + section + "] " + key + ": ";
}

RawConfig parse_config(std::string_view text, std::string source) {
    RawConfig raw;
    raw.source = std::move(source);
    std::string section;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        start = end == std::string_view::npos ? text.size() + 1 : end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = csv::trim(line);
        if (line.empty()) continue;
        const std::string at = raw.source + ":" + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(at + "unterminated section header");
            section = lower(csv::trim(line.substr(1, line.size() - 2)));
            if (section.empty()) throw ConfigError(at + "empty section name");
            raw.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(at + "expected key = value");
        if (section.empty()) throw ConfigError(at + "key outside any section");
        const std::string key = lower(csv::trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError(at + "empty key");
        auto& keys = raw.sections[section];
        if (keys.count(key)) throw ConfigError(at + "[" + section + "] " + key + ": duplicate key");
        keys[key] = ConfigEntry{std::string(csv::trim(line.substr(eq + 1))), line_no};
    }
    return raw;
}

RawConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

void apply_override(RawConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.substr(0, eq).rfind('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos)
        throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
    const std::string section = lower(csv::trim(assignment.substr(0, dot)));
    const std::string key = lower(csv::trim(assignment.substr(dot + 1, eq - dot - 1)));
    if (section.empty() || key.empty()) throw ConfigError("override '" + std::string(assignment) + "' lacks a section or key");
    const std::string value(csv::trim(assignment.substr(eq + 1)));
    auto& entries = config.sections[section];
    if (value.empty()) {
        entries.erase(key);
        return;
    }
    // an overridden key keeps its place in file order; new keys go last
    const auto old = entries.find(key);
    const int line = old != entries.end() ? old->second.line : std::numeric_limits<int>::max();
    entries[key] = ConfigEntry{value, line, true};
}

std::string_view to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::link: return "link";
        case ScenarioKind::pmf: return "pmf";
        case ScenarioKind::arrival_variance: return "arrival_variance";
        case ScenarioKind::unstable: return "unstable";
        case ScenarioKind::sir_static: return "sir_static";
        case ScenarioKind::coupled: return "coupled";
        case ScenarioKind::delay_oracle: return "delay_oracle";
    }
    return "unknown";
}

PcpParams PcpSpec::resolve(double lambda_u) const {
    detail::require(lambda_u > 0.0, "PCP resolution needs a positive lambda_u");
    const double disc = std::numbers::pi * r_c * r_c;
    PcpParams p;
    p.r_c = r_c;
    if (lambda_p) {
        p.lambda_p = *lambda_p;
        p.lambda_c = lambda_u / (disc * *lambda_p);
    } else {
        p.lambda_c = *lambda_c;
        p.lambda_p = lambda_u / (disc * *lambda_c);
    }
    return p;
}

const std::vector<std::string>& network_keys() {
    static const std::vector<std::string> keys{"lambda_b", "lambda_u", "theta", "theta_db", "alpha", "beta", "p_b",
                                               "users",    "xi0",      "q",     "area",     "k",     "tol"};
    return keys;
}

ExperimentConfig interpret_config(const RawConfig& raw) {
    const Reader r(raw);
    static const std::set<std::string> known_sections{"scenario", "network", "traffic", "population", "pcp",
                                                      "sweep",    "metrics", "simulation"};
    for (const auto& [name, keys] : raw.sections) {
        if (known_sections.count(name) || name.rfind("pcp.", 0) == 0) continue;
        throw ConfigError(raw.source + ": unknown section [" + name + "]");
    }
    r.only_keys("scenario", {"name", "kind", "output", "threads"});
    r.only_keys("traffic", {"rate"});
    r.only_keys("population", {"models"});
    r.only_keys("sweep", {"variable", "values", "linspace", "logspace"});
    r.only_keys("metrics", {"list"});
    r.only_keys("simulation", {"horizon", "warmup", "replications", "seed", "samples", "variance_replications",
                               "bs_per_window", "scheduling", "association", "interference", "interference_field",
                               "reproduce"});

    ExperimentConfig cfg;
    cfg.name = r.text("scenario", "name").value_or("experiment");
    cfg.output = r.text("scenario", "output").value_or(cfg.name);
    if (const auto t = r.count("scenario", "threads")) cfg.threads = static_cast<unsigned>(*t);

    const std::string kind = lower(r.text("scenario", "kind").value_or(""));
    static const std::map<std::string, ScenarioKind> kinds{
        {"link", ScenarioKind::link},         {"pmf", ScenarioKind::pmf},
        {"arrival_variance", ScenarioKind::arrival_variance},
        {"unstable", ScenarioKind::unstable}, {"sir_static", ScenarioKind::sir_static},
        {"coupled", ScenarioKind::coupled},   {"delay_oracle", ScenarioKind::delay_oracle}};
    const auto k = kinds.find(kind);
    if (k == kinds.end())
        r.fail("scenario", "kind",
               "expected one of link, pmf, arrival_variance, unstable, sir_static, coupled, delay_oracle");
    cfg.kind = k->second;

    // [network]: every key may carry a list
    if (const auto it = raw.sections.find("network"); it != raw.sections.end()) {
        std::vector<std::pair<int, std::string>> ordered;
        for (const auto& [key, entry] : it->second) {
            if (std::find(network_keys().begin(), network_keys().end(), key) == network_keys().end())
                r.fail("network", key, "unknown key");
            ordered.emplace_back(entry.line, key);
        }
        std::sort(ordered.begin(), ordered.end());
        for (const auto& [line, key] : ordered) cfg.network.push_back({key, r.numbers("network", key)});
    }
    const auto has_network = [&](const std::string& key) {
        return std::any_of(cfg.network.begin(), cfg.network.end(), [&](const NumericSeries& s) { return s.key == key; });
    };
    if (has_network("theta") && has_network("theta_db"))
        r.fail("network", "theta_db", "give theta (linear) or theta_db, not both");

    for (const auto& item : r.list("traffic", "rate")) {
        try {
            cfg.rates.push_back(ArrivalRateDistribution::parse(item));
        } catch (const ConfigError& e) {
            r.fail("traffic", "rate", e.what());
        }
    }

    const auto models = r.list("population", "models");
    for (const auto& name : models.empty() ? std::vector<std::string>{"ppp"} : models) {
        PopulationSpec pop;
        pop.name = lower(name);
        if (pop.name != "ppp") {
            const std::string section = pop.name == "pcp" ? "pcp" : "pcp." + pop.name;
            if (!raw.sections.count(section))
                r.fail("population", "models", "model '" + pop.name + "' needs a [" + section + "] section");
            pop.model = PopulationModel::pcp;
            pop.pcp = read_pcp(r, section);
        }
        cfg.populations.push_back(std::move(pop));
    }

    cfg.sweep_variable = lower(r.text("sweep", "variable").value_or(""));
    if (std::find(network_keys().begin(), network_keys().end(), cfg.sweep_variable) == network_keys().end())
        r.fail("sweep", "variable", "expected one of the [network] keys");
    cfg.grid = make_grid(r);
    if (cfg.grid.empty()) r.fail("sweep", "values", "grid must not be empty");
    for (std::size_t i = 1; i < cfg.grid.size(); ++i)
        if (!(cfg.grid[i] > cfg.grid[i - 1])) r.fail("sweep", "values", "grid must be strictly increasing");
    for (const auto& s : cfg.network)
        if (s.key == cfg.sweep_variable && s.values.size() > 1)
            r.fail("network", s.key, "the sweep variable cannot also be a list");
    if ((cfg.sweep_variable == "theta" && has_network("theta_db")) ||
        (cfg.sweep_variable == "theta_db" && has_network("theta")))
        r.fail("sweep", "variable", "conflicts with the threshold given in [network]");

    cfg.metrics = r.list("metrics", "list");

    SimulationControls& sim = cfg.simulation;
    const auto seed = r.count("simulation", "seed");
    if (!seed) throw ConfigError(raw.source + ": [simulation] seed: a seed is mandatory");
    sim.seed = *seed;
    if (const auto v = r.count("simulation", "horizon")) sim.horizon = *v;
    sim.warmup = r.count("simulation", "warmup");
    if (const auto v = r.count("simulation", "replications")) sim.replications = *v;
    if (sim.replications < 1) r.fail("simulation", "replications", "must be at least 1");
    if (const auto v = r.count("simulation", "samples")) sim.samples = *v;
    if (const auto v = r.count("simulation", "variance_replications")) sim.variance_replications = *v;
    if (const auto v = r.scalar("simulation", "bs_per_window")) sim.bs_per_window = *v;
    if (const auto v = r.flag("simulation", "interference")) sim.interference = *v;
    if (const auto v = r.flag("simulation", "reproduce")) sim.enabled_for_reproduce = *v;
    if (const auto t = r.text("simulation", "scheduling")) {
        const std::string v = lower(*t);
        if (v == "all" || v == "all_users") sim.scheduling = Scheduling::all_users;
        else if (v == "active" || v == "active_only") sim.scheduling = Scheduling::active_only;
        else r.fail("simulation", "scheduling", "expected all_users or active_only");
    }
    if (const auto t = r.text("simulation", "association")) {
        const std::string v = lower(*t);
        if (v == "per_user") sim.association = AssociationMode::per_user;
        else if (v == "per_cluster") sim.association = AssociationMode::per_cluster;
        else r.fail("simulation", "association", "expected per_user or per_cluster");
    }
    if (const auto t = r.text("simulation", "interference_field")) {
        const std::string v = lower(*t);
        if (v == "unconditioned") sim.interference_field = InterferenceField::unconditioned;
        else if (v == "beyond_serving") sim.interference_field = InterferenceField::beyond_serving;
        else r.fail("simulation", "interference_field", "expected unconditioned or beyond_serving");
    }
    if (sim.warmup && *sim.warmup >= sim.horizon) r.fail("simulation", "warmup", "must be below the horizon");
    return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    RawConfig raw = load_config(path);
    for (const auto& o : overrides) apply_override(raw, o);
    return interpret_config(raw);
}

std::filesystem::path resolve_output_dir(const std::optional<std::string>& explicit_dir) {
    if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
    if (const char* env = std::getenv(std::string(kOutputDirEnv).c_str()); env && *env) return env;
    return std::filesystem::current_path();
}

std::filesystem::path config_dir() {
    if (const char* env = std::getenv(std::string(kConfigDirEnv).c_str()); env && *env) return env;
    return STTRAFFIC_CONFIG_DIR;
}

}  // namespace sttraffic
