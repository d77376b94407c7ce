#include "sttraffic/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <Eigen/Core>

#include "csv_util.hpp"

namespace sttraffic {

namespace {

// l^-alpha evaluated from a squared distance, with cheap paths for the common exponents.
class PathLoss {
public:
    explicit PathLoss(double alpha) : half_alpha_(0.5 * alpha) {}

    double operator()(double d2) const {
        if (half_alpha_ == 2.0) return 1.0 / (d2 * d2);
        if (half_alpha_ == 1.5) return 1.0 / (d2 * std::sqrt(d2));
        return std::pow(d2, -half_alpha_);
    }

private:
    double half_alpha_;
};

// Accumulates sojourn times into equal-width time batches for a batch-means error.
class BatchMeans {
public:
    BatchMeans(std::uint64_t first_slot, std::uint64_t last_slot) : first_(first_slot), span_(last_slot - first_slot) {}

    void add(std::uint64_t slot, double value) {
        const auto b = static_cast<std::size_t>((slot - first_) * kBatches / span_);
        sum_[b] += value;
        ++count_[b];
        total_ += value;
        ++n_;
    }

    std::uint64_t count() const { return n_; }
    double mean() const { return n_ == 0 ? 0.0 : total_ / static_cast<double>(n_); }

    double stderr() const {
        double m = 0.0, m2 = 0.0;
        std::size_t used = 0;
        for (std::size_t b = 0; b < kBatches; ++b) {
            if (count_[b] == 0) continue;
            const double x = sum_[b] / static_cast<double>(count_[b]);
            ++used;
            const double d = x - m;
            m += d / static_cast<double>(used);
            m2 += d * (x - m);
        }
        if (used < 2) return 0.0;
        return std::sqrt(m2 / static_cast<double>(used - 1) / static_cast<double>(used));
    }

private:
    static constexpr std::size_t kBatches = 32;
    std::uint64_t first_;
    std::uint64_t span_;
    std::array<double, kBatches> sum_{};
    std::array<std::uint64_t, kBatches> count_{};
    double total_ = 0.0;
    std::uint64_t n_ = 0;
};

std::string optional_field(const std::optional<double>& v) { return v ? csv::format_double(*v) : "na"; }

}  // namespace

// ---------------------------------------------------------------------------

Estimate run_sir_static(const NetworkParameters& params, double q, std::uint64_t samples, std::uint64_t seed,
                        const SirStaticOptions& options) {
    params.validate();
    detail::require(q >= 0.0 && q <= 1.0, "run_sir_static: q must lie in [0, 1]");
    detail::require(samples >= 100'000, "run_sir_static: at least 1e5 samples are required");
    detail::require(options.bs_per_window >= 1.0, "run_sir_static: bs_per_window must be at least 1");

    // Points of a PPP around the user in order of distance: pi lambda r_k^2 are
    // the arrival epochs of a unit-rate Poisson process. Sampling stops at the
    // disc holding bs_per_window points on average.
    const double pi_lambda = std::numbers::pi * params.lambda_b;
    const double horizon = options.bs_per_window;
    const PathLoss loss(params.alpha);
    Engine engine = make_engine(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::exponential_distribution<double> exp1(1.0);

    std::uint64_t successes = 0;
    for (std::uint64_t s = 0; s < samples; ++s) {
        double epoch = exp1(engine);
        const double budget = exp1(engine) * loss(epoch / pi_lambda) / params.theta;
        double interference = 0.0;
        bool ok = true;
        if (options.field == InterferenceField::beyond_serving) {
            while (ok) {
                epoch += exp1(engine);
                if (epoch > horizon) break;
                if (u01(engine) >= q) continue;
                interference += exp1(engine) * loss(epoch / pi_lambda);
                ok = interference < budget;
            }
        } else if (q > 0.0) {
            // an independent PPP of intensity q lambda_b
            double other = 0.0;
            while (ok) {
                other += exp1(engine);
                if (other > q * horizon) break;
                interference += exp1(engine) * loss(other / (q * pi_lambda));
                ok = interference < budget;
            }
        }
        if (ok) ++successes;
    }
    const double p = static_cast<double>(successes) / static_cast<double>(samples);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(samples)), samples};
}

// ---------------------------------------------------------------------------

void DriftAccumulator::add(double slot, double length) {
    ++n_;
    const double k = static_cast<double>(n_);
    const double dx = slot - mean_x_;
    mean_x_ += dx / k;
    mean_y_ += (length - mean_y_) / k;
    sxx_ += dx * (slot - mean_x_);
    sxy_ += dx * (length - mean_y_);
}

double DriftAccumulator::slope() const { return sxx_ > 0.0 ? sxy_ / sxx_ : 0.0; }

QueueTrace QueueTrace::from_lengths(std::span<const double> lengths) {
    QueueTrace trace;
    trace.observed_slots = lengths.size();
    for (std::size_t i = lengths.size() / 2; i < lengths.size(); ++i)
        trace.drift.add(static_cast<double>(i), lengths[i]);
    return trace;
}

double classify_queue_stability(std::span<const QueueTrace> traces, double slope_threshold) {
    detail::require(!traces.empty(), "classify_queue_stability: no traces");
    detail::require(slope_threshold > 0.0, "classify_queue_stability: threshold must be positive");
    std::size_t unstable = 0;
    for (const QueueTrace& t : traces) {
        if (t.observed_slots < kMinStabilityTraceSlots)
            throw ParameterError("classify_queue_stability: trace shorter than " +
                                 std::to_string(kMinStabilityTraceSlots) + " post-warmup slots");
        if (t.drift.slope() > slope_threshold) ++unstable;
    }
    return static_cast<double>(unstable) / static_cast<double>(traces.size());
}

// ---------------------------------------------------------------------------

DelayOracleResult run_delay_oracle(std::uint64_t n, double xi0, double mu, std::uint64_t horizon, std::uint64_t seed,
                                   const DelayOracleOptions& options) {
    detail::require(n >= 1, "run_delay_oracle: n must be at least 1");
    detail::require(mu > 0.0 && mu <= 1.0, "run_delay_oracle: mu must lie in (0, 1]");
    detail::require(xi0 >= 0.0 && xi0 <= 1.0, "run_delay_oracle: xi0 must lie in [0, 1]");
    const double per_pick = static_cast<double>(n) * mu;
    detail::require(per_pick <= 1.0 + 1e-12, "run_delay_oracle: n * mu must not exceed 1");
    detail::require(horizon >= 1'000'000, "run_delay_oracle: horizon must be at least 1e6 slots");
    detail::require(options.warmup < horizon / 2, "run_delay_oracle: warmup must be below half the horizon");
    detail::require(options.drift_threshold > 0.0, "run_delay_oracle: drift threshold must be positive");

    const ArrivalStream arrivals = make_arrival_stream(xi0, oracle_arrival_seed(seed));
    Engine service = make_engine(derive_seed(seed, stream::service));
    std::uniform_int_distribution<std::uint64_t> pick(0, n - 1);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    QueueState queue;
    BatchMeans delays(options.warmup, horizon);
    DelayOracleResult out;
    out.trace.observed_slots = horizon - options.warmup;
    const std::uint64_t drift_start = options.warmup + (horizon - options.warmup) / 2;
    for (std::uint64_t t = 0; t < horizon; ++t) {
        if (next_arrival(arrivals, t)) queue.push(t);
        if (!queue.empty() && pick(service) == 0 && u01(service) < per_pick) {
            const std::uint64_t d = queue.depart(t);
            if (t >= options.warmup) delays.add(t, static_cast<double>(d));
        }
        if (t >= drift_start) out.trace.drift.add(static_cast<double>(t), static_cast<double>(queue.size()));
    }
    out.departures = delays.count();
    out.stderr = delays.stderr();
    if (out.trace.drift.slope() > options.drift_threshold || delays.count() == 0)
        out.mean_delay = DelayResult::unstable();
    else
        out.mean_delay = DelayResult::finite(delays.mean());
    return out;
}

// ---------------------------------------------------------------------------

Topology sample_topology(const NetworkParameters& params, const CoupledOptions& options) {
    params.validate_for(options.model);
    detail::require(options.bs_per_window >= 1.0, "sample_topology: bs_per_window must be at least 1");
    Topology topo;
    topo.window = square_window_for(params.lambda_b, options.bs_per_window, Metric::toroidal);
    topo.bss = sample_ppp(params.lambda_b, topo.window, derive_seed(options.seed, stream::base_stations));
    const std::uint64_t user_seed = derive_seed(options.seed, stream::users);
    topo.users = options.model == PopulationModel::pcp ? sample_pcp(*params.pcp, topo.window, user_seed)
                                                        : sample_ppp(params.lambda_u, topo.window, user_seed);
    topo.association = associate(topo.users, topo.bss, topo.window, options.association);
    return topo;
}

std::vector<UserTraffic> assign_traffic(const ArrivalRateDistribution& dist, std::size_t users, std::uint64_t seed,
                                        double* clamped_fraction) {
    Engine engine = make_engine(derive_seed(seed, stream::rates));
    const std::uint64_t arrival_root = derive_seed(seed, stream::arrivals);
    std::vector<UserTraffic> out(users);
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < users; ++i) {
        const RateDraw draw = sample_rate(dist, engine);
        out[i].rate = draw.rate;
        out[i].arrival_seed = derive_seed(arrival_root, i);
        if (draw.clamped) ++clamped;
    }
    if (clamped_fraction)
        *clamped_fraction = users == 0 ? 0.0 : static_cast<double>(clamped) / static_cast<double>(users);
    return out;
}

MetricsReport run_coupled(const NetworkParameters& params, const ArrivalRateDistribution& dist,
                          std::uint64_t horizon, std::uint64_t warmup, std::uint64_t seed) {
    CoupledOptions options;
    options.horizon = horizon;
    options.warmup = warmup;
    options.seed = seed;
    return run_coupled(params, dist, options);
}

MetricsReport run_coupled(const NetworkParameters& params, const ArrivalRateDistribution& dist,
                          const CoupledOptions& options) {
    const Topology topo = sample_topology(params, options);
    if (topo.users.empty()) throw ParameterError("run_coupled: the sampled user pattern is empty");
    double clamped = 0.0;
    const auto traffic = assign_traffic(dist, topo.users.size(), options.seed, &clamped);
    MetricsReport report = run_coupled(topo, traffic, params, options);
    report.clamped_rate_fraction = clamped;
    return report;
}

MetricsReport run_coupled(const Topology& topo, std::span<const UserTraffic> traffic,
                          const NetworkParameters& params, const CoupledOptions& options) {
    detail::require_link_params(params.theta, params.alpha);
    const std::size_t nu = topo.users.size();
    const std::size_t nb = topo.bss.size();
    if (nu == 0) throw ParameterError("run_coupled: empty user pattern");
    detail::require(traffic.size() == nu, "run_coupled: one traffic entry per user is required");
    detail::require(topo.association.serving_bs.size() == nu && topo.association.cell_members.size() == nb,
                    "run_coupled: association does not match the deployment");
    const std::uint64_t horizon = options.horizon;
    const std::uint64_t warmup = options.effective_warmup();
    detail::require(horizon > warmup, "run_coupled: horizon must exceed warmup");
    detail::require(options.drift_threshold > 0.0, "run_coupled: drift threshold must be positive");

    std::vector<ArrivalStream> streams;
    streams.reserve(nu);
    for (const UserTraffic& t : traffic) streams.push_back(make_arrival_stream(t.rate, t.arrival_seed));

    // Precomputed user-to-BS path gains when the table is affordable.
    const PathLoss loss(params.alpha);
    constexpr std::size_t kMaxGainTable = 20'000'000;
    Eigen::MatrixXd gain_table;
    if (options.interference && nu * nb <= kMaxGainTable) {
        gain_table.resize(static_cast<Eigen::Index>(nu), static_cast<Eigen::Index>(nb));
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t u = 0; u < nu; ++u)
                gain_table(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(b)) =
                    loss(topo.window.distance2(topo.users.point(u), topo.bss.point(b)));
    }
    const auto gain = [&](std::size_t u, std::size_t b) {
        if (gain_table.size() > 0) return gain_table(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(b));
        return loss(topo.window.distance2(topo.users.point(u), topo.bss.point(b)));
    };

    Engine scheduler = make_engine(derive_seed(options.seed, stream::scheduling));
    Engine fading_engine = make_engine(derive_seed(options.seed, stream::fading));
    std::exponential_distribution<double> fading(1.0);

    std::vector<QueueState> queues(nu);
    std::vector<UserStats> stats(nu);
    std::vector<double> delay_sum(nu, 0.0);
    std::vector<std::uint64_t> last_departed(nu, 0);
    std::vector<QueueTrace> traces(nu);
    const std::uint64_t observed = horizon - warmup;
    for (QueueTrace& t : traces) t.observed_slots = observed;
    const std::uint64_t drift_start = warmup + observed / 2;

    MetricsReport report;
    if (options.record_traces) {
        report.traces.assign(nu, {});
        for (auto& row : report.traces) row.reserve(static_cast<std::size_t>(observed));
    }

    std::vector<std::size_t> tx_bs, tx_user, candidates;
    std::vector<char> delivered;
    std::uint64_t busy_slots = 0;
    for (std::uint64_t t = 0; t < horizon; ++t) {
        for (std::size_t u = 0; u < nu; ++u) {
            if (next_arrival(streams[u], t)) {
                queues[u].push(t);
                ++stats[u].arrivals;
            }
        }

        tx_bs.clear();
        tx_user.clear();
        for (std::size_t b = 0; b < nb; ++b) {
            const auto& members = topo.association.cell_members[b];
            if (members.empty()) continue;
            if (options.scheduling == Scheduling::all_users) {
                std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
                const std::size_t u = members[pick(scheduler)];
                if (queues[u].empty()) continue;
                tx_bs.push_back(b);
                tx_user.push_back(u);
            } else {
                candidates.clear();
                for (std::size_t u : members)
                    if (!queues[u].empty()) candidates.push_back(u);
                if (candidates.empty()) continue;
                std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
                tx_bs.push_back(b);
                tx_user.push_back(candidates[pick(scheduler)]);
            }
        }

        // All transmissions of the slot are evaluated against the same active set.
        delivered.assign(tx_bs.size(), 1);
        if (options.interference) {
            for (std::size_t i = 0; i < tx_bs.size(); ++i) {
                const std::size_t u = tx_user[i];
                const double budget = fading(fading_engine) * gain(u, tx_bs[i]) / params.theta;
                double interference = 0.0;
                for (std::size_t j = 0; j < tx_bs.size(); ++j) {
                    if (j == i) continue;
                    interference += fading(fading_engine) * gain(u, tx_bs[j]);
                    if (interference >= budget) break;
                }
                delivered[i] = interference < budget;
            }
        }

        const bool counting = t >= warmup;
        for (std::size_t i = 0; i < tx_bs.size(); ++i) {
            if (counting) ++report.transmissions;
            if (!delivered[i]) continue;
            const std::size_t u = tx_user[i];
            UserStats& s = stats[u];
            const std::uint64_t arrival = queues[u].head();
            if (s.departures > 0 && arrival < last_departed[u]) s.fifo_order_held = false;
            last_departed[u] = arrival;
            const std::uint64_t d = queues[u].depart(t);
            ++s.departures;
            if (counting) {
                ++report.successes;
                ++s.delay_samples;
                delay_sum[u] += static_cast<double>(d);
            }
        }
        if (counting) {
            busy_slots += tx_bs.size();
            if (options.record_traces)
                for (std::size_t u = 0; u < nu; ++u)
                    report.traces[u].push_back(static_cast<std::uint32_t>(queues[u].size()));
        }
        if (t >= drift_start)
            for (std::size_t u = 0; u < nu; ++u)
                traces[u].drift.add(static_cast<double>(t), static_cast<double>(queues[u].size()));
    }

    double total_delay = 0.0;
    for (std::size_t u = 0; u < nu; ++u) {
        UserStats& s = stats[u];
        s.final_queue = queues[u].size();
        if (s.delay_samples > 0) s.mean_delay = delay_sum[u] / static_cast<double>(s.delay_samples);
        report.delay_samples += s.delay_samples;
        total_delay += delay_sum[u];
    }
    report.empirical_busy_prob =
        nb == 0 ? 0.0 : static_cast<double>(busy_slots) / (static_cast<double>(nb) * static_cast<double>(observed));
    report.empirical_success_prob =
        report.transmissions == 0
            ? 0.0
            : static_cast<double>(report.successes) / static_cast<double>(report.transmissions);
    report.per_user_mean_delay =
        report.delay_samples == 0 ? 0.0 : total_delay / static_cast<double>(report.delay_samples);
    if (observed >= kMinStabilityTraceSlots) report.unstable_fraction = classify_queue_stability(traces, options.drift_threshold);
    report.seed = options.seed;
    report.horizon = horizon;
    report.warmup = warmup;
    report.base_stations = nb;
    report.users = nu;
    report.user_stats = std::move(stats);
    return report;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, std::string>> metrics_fields(const MetricsReport& r) {
    return {
        {"empirical_busy_prob", csv::format_double(r.empirical_busy_prob)},
        {"empirical_success_prob", csv::format_double(r.empirical_success_prob)},
        {"per_user_mean_delay", csv::format_double(r.per_user_mean_delay)},
        {"delay_samples", std::to_string(r.delay_samples)},
        {"unstable_fraction", optional_field(r.unstable_fraction)},
        {"clamped_rate_fraction", csv::format_double(r.clamped_rate_fraction)},
        {"seed", std::to_string(r.seed)},
        {"horizon", std::to_string(r.horizon)},
        {"warmup", std::to_string(r.warmup)},
        {"base_stations", std::to_string(r.base_stations)},
        {"users", std::to_string(r.users)},
        {"transmissions", std::to_string(r.transmissions)},
        {"successes", std::to_string(r.successes)},
    };
}

}  // namespace

void write_metrics_record(std::ostream& out, const MetricsReport& report) {
    for (const auto& [key, value] : metrics_fields(report)) out << key << '=' << value << '\n';
}

std::string metrics_csv_header() {
    std::string line;
    for (const auto& [key, value] : metrics_fields(MetricsReport{})) {
        if (!line.empty()) line += ',';
        line += key;
    }
    return line;
}

std::string metrics_csv_row(const MetricsReport& report) {
    std::string line;
    for (const auto& [key, value] : metrics_fields(report)) {
        if (!line.empty()) line += ',';
        line += value;
    }
    return line;
}

void write_traces(std::ostream& out, const MetricsReport& report) {
    out << "slot,user,length\n";
    for (std::size_t u = 0; u < report.traces.size(); ++u)
        for (std::size_t i = 0; i < report.traces[u].size(); ++i)
            out << report.warmup + i << ',' << u << ',' << report.traces[u][i] << '\n';
}

// ---------------------------------------------------------------------------

ArrivalVarianceEstimate estimate_total_arrival_variance(const NetworkParameters& params,
                                                        const ArrivalRateDistribution& dist, PopulationModel model,
                                                        std::uint64_t replications, std::uint64_t seed,
                                                        const ArrivalVarianceOptions& options) {
    params.validate_for(model);
    detail::require(replications >= 1000, "estimate_total_arrival_variance: at least 1e3 replications are required");
    detail::require(options.bs_per_window >= 1.0, "estimate_total_arrival_variance: bs_per_window must be at least 1");

    const Window window = square_window_for(params.lambda_b, options.bs_per_window, Metric::toroidal);
    Engine engine = make_engine(seed);
    const bool whole_clusters = model == PopulationModel::pcp && options.association == AssociationMode::per_cluster;

    // Welford accumulation of the first moment, plus raw central sums for the fourth.
    std::vector<double> totals;
    totals.reserve(static_cast<std::size_t>(replications));
    for (std::uint64_t r = 0; r < replications; ++r) {
        const PointPattern sampled = sample_ppp(params.lambda_b, window, engine);
        // The typical BS sits at the centre; the remaining BSs stay Poisson.
        Points sites(2, sampled.points.cols() + 1);
        sites.col(0) = window.center();
        sites.rightCols(sampled.points.cols()) = sampled.points;
        const NearestIndex index(sites, window);

        const PointPattern users = model == PopulationModel::pcp ? sample_pcp(*params.pcp, window, engine)
                                                                 : sample_ppp(params.lambda_u, window, engine);
        std::vector<char> parent_in_cell;
        if (whole_clusters) {
            parent_in_cell.resize(static_cast<std::size_t>(users.parents.cols()));
            for (Eigen::Index p = 0; p < users.parents.cols(); ++p)
                parent_in_cell[static_cast<std::size_t>(p)] = index.nearest(users.parents.col(p)) == 0;
        }
        double total = 0.0;
        for (std::size_t i = 0; i < users.size(); ++i) {
            const bool member = whole_clusters
                                    ? parent_in_cell[static_cast<std::size_t>(users.cluster_of[i])] != 0
                                    : index.nearest(users.point(i)) == 0;
            if (member) total += sample_rate(dist, engine).raw;
        }
        totals.push_back(total);
    }

    const double n = static_cast<double>(replications);
    double mean = 0.0;
    for (double x : totals) mean += x;
    mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double x : totals) {
        const double d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    ArrivalVarianceEstimate out;
    out.replications = replications;
    out.mean = mean;
    out.variance = m2 / (n - 1.0);
    out.mean_stderr = std::sqrt(out.variance / n);
    const double central2 = m2 / n;
    out.variance_stderr = std::sqrt(std::max(0.0, m4 / n - central2 * central2) / n);
    return out;
}

}  // namespace sttraffic
