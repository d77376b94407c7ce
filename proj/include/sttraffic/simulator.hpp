#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sttraffic/analytics.hpp"
#include "sttraffic/geometry.hpp"
#include "sttraffic/traffic.hpp"

namespace sttraffic {

/// Monte Carlo estimate with its standard error.
struct Estimate {
    double value = 0.0;
    double stderr = 0.0;
    std::uint64_t samples = 0;
};

// ---------------------------------------------------------------------------
// Static SIR sampling

/// Where the interferers of the static SIR sample come from.
enum class InterferenceField {
    /// A thinned PPP of intensity q lambda_b over the whole plane, drawn
    /// independently of the serving distance. This is the field behind the
    /// closed-form success probability.
    unconditioned,
    /// The other BSs of the serving pattern, each active with probability q.
    /// They all lie beyond the serving BS, so links succeed more often.
    beyond_serving
};

struct SirStaticOptions {
    /// Expected BS count inside the sampled disc around the user.
    double bs_per_window = 400.0;
    InterferenceField field = InterferenceField::unconditioned;
};

/// Fraction of samples with SIR > theta for a user at the origin served by its
/// nearest BS, with unit-mean exponential fading on all links.
Estimate run_sir_static(const NetworkParameters& params, double q, std::uint64_t samples, std::uint64_t seed,
                        const SirStaticOptions& options = {});

// ---------------------------------------------------------------------------
// Queue primitives

/// Packet buffer of one user. A failed head-of-line packet stays at the head.
class QueueState {
public:
    void push(std::uint64_t arrival_slot) { buffer_.push_back(arrival_slot); }
    bool empty() const { return buffer_.empty(); }
    std::size_t size() const { return buffer_.size(); }
    std::uint64_t head() const { return buffer_.front(); }

    /// Removes the head packet and returns its sojourn in slots, counting the
    /// departure slot.
    std::uint64_t depart(std::uint64_t slot) {
        const std::uint64_t arrival = buffer_.front();
        buffer_.pop_front();
        return slot - arrival + 1;
    }

private:
    std::deque<std::uint64_t> buffer_;
};

/// Online least-squares slope of queue length against slot index.
class DriftAccumulator {
public:
    void add(double slot, double length);
    double slope() const;
    std::uint64_t count() const { return n_; }

private:
    std::uint64_t n_ = 0;
    double mean_x_ = 0.0;
    double mean_y_ = 0.0;
    double sxx_ = 0.0;
    double sxy_ = 0.0;
};

/// Length history summary of one queue after warmup.
struct QueueTrace {
    std::uint64_t observed_slots = 0;  ///< post-warmup slots
    DriftAccumulator drift;            ///< fitted over the last half of the observed slots

    static QueueTrace from_lengths(std::span<const double> lengths);
};

inline constexpr std::uint64_t kMinStabilityTraceSlots = 100'000;
inline constexpr double kDefaultDriftThreshold = 1e-3;

/// Fraction of queues whose length grows linearly (slope above the threshold).
/// Throws ParameterError when a trace is shorter than kMinStabilityTraceSlots.
double classify_queue_stability(std::span<const QueueTrace> traces,
                                double slope_threshold = kDefaultDriftThreshold);

// ---------------------------------------------------------------------------
// Single-queue delay oracle

struct DelayOracleResult {
    DelayResult mean_delay = DelayResult::unstable();
    double stderr = 0.0;  ///< batch-means standard error of the mean sojourn
    std::uint64_t departures = 0;  ///< post-warmup departures
    QueueTrace trace;
};

struct DelayOracleOptions {
    std::uint64_t warmup = 0;  ///< slots discarded before collecting sojourns
    double drift_threshold = kDefaultDriftThreshold;
};

/// Arrival seed used by run_delay_oracle for a given run seed.
inline std::uint64_t oracle_arrival_seed(std::uint64_t seed) { return derive_seed(seed, stream::arrivals); }

/// One user in an n-user cell: Bernoulli(xi0) arrivals, the BS picks this user
/// with probability 1/n and the transmission succeeds with probability n mu, so
/// the per-slot service probability is mu.
DelayOracleResult run_delay_oracle(std::uint64_t n, double xi0, double mu, std::uint64_t horizon, std::uint64_t seed,
                                   const DelayOracleOptions& options = {});

// ---------------------------------------------------------------------------
// Coupled network engine

enum class Scheduling {
    all_users,   ///< pick uniformly among all associated users, idle if that queue is empty
    active_only  ///< pick uniformly among non-empty queues
};

struct UserTraffic {
    double rate = 0.0;
    std::uint64_t arrival_seed = 0;
};

/// A fixed deployment: BSs, users and their association.
struct Topology {
    Window window;
    PointPattern bss;
    PointPattern users;
    AssociationMap association;
};

struct CoupledOptions {
    std::uint64_t horizon = 100'000;
    std::optional<std::uint64_t> warmup;  ///< defaults to 20% of the horizon
    std::uint64_t seed = 1;
    PopulationModel model = PopulationModel::ppp;
    AssociationMode association = AssociationMode::per_user;
    Scheduling scheduling = Scheduling::all_users;
    bool interference = true;
    bool record_traces = false;
    double bs_per_window = 100.0;
    double drift_threshold = kDefaultDriftThreshold;

    std::uint64_t effective_warmup() const { return warmup.value_or(horizon / 5); }
};

struct UserStats {
    std::uint64_t arrivals = 0;      ///< over the whole horizon
    std::uint64_t departures = 0;    ///< over the whole horizon
    std::uint64_t final_queue = 0;
    std::uint64_t delay_samples = 0;  ///< post-warmup departures
    double mean_delay = 0.0;          ///< over post-warmup departures; 0 when none
    bool fifo_order_held = true;      ///< departures left in arrival order
};

/// Empirical counterparts of the analytic quantities from one run.
struct MetricsReport {
    double empirical_busy_prob = 0.0;
    double empirical_success_prob = 0.0;  ///< 0 when nothing was transmitted
    double per_user_mean_delay = 0.0;  ///< mean sojourn over all post-warmup departures
    std::uint64_t delay_samples = 0;
    std::optional<double> unstable_fraction;  ///< absent when the horizon is too short to classify
    double clamped_rate_fraction = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t horizon = 0;
    std::uint64_t warmup = 0;

    std::uint64_t base_stations = 0;
    std::uint64_t users = 0;
    std::uint64_t transmissions = 0;
    std::uint64_t successes = 0;
    std::vector<UserStats> user_stats;
    /// Per-slot queue lengths after warmup, one row per user; empty unless requested.
    std::vector<std::vector<std::uint32_t>> traces;
};

/// Samples a deployment for `params` (PPP or PCP users) in a toroidal window.
Topology sample_topology(const NetworkParameters& params, const CoupledOptions& options);

/// Draws one rate per user and derives per-user arrival seeds.
std::vector<UserTraffic> assign_traffic(const ArrivalRateDistribution& dist, std::size_t users, std::uint64_t seed,
                                        double* clamped_fraction = nullptr);

MetricsReport run_coupled(const NetworkParameters& params, const ArrivalRateDistribution& dist,
                          std::uint64_t horizon, std::uint64_t warmup, std::uint64_t seed);

MetricsReport run_coupled(const NetworkParameters& params, const ArrivalRateDistribution& dist,
                          const CoupledOptions& options);

/// Runs a given deployment. Only theta and alpha are read from `params`.
MetricsReport run_coupled(const Topology& topology, std::span<const UserTraffic> traffic,
                          const NetworkParameters& params, const CoupledOptions& options);

/// Flat `key=value` record, one field per line.
void write_metrics_record(std::ostream& out, const MetricsReport& report);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);
/// Queue-length traces as CSV: `slot,user,length`.
void write_traces(std::ostream& out, const MetricsReport& report);

// ---------------------------------------------------------------------------
// Spatial arrival statistics

struct ArrivalVarianceOptions {
    double bs_per_window = 100.0;
    AssociationMode association = AssociationMode::per_user;
};

struct ArrivalVarianceEstimate {
    double mean = 0.0;
    double variance = 0.0;
    double mean_stderr = 0.0;
    double variance_stderr = 0.0;
    std::uint64_t replications = 0;
};

/// Summed (unclamped) arrival rate of the typical cell: a BS placed at the
/// window centre joins each sampled BS pattern and its Voronoi cell is used.
ArrivalVarianceEstimate estimate_total_arrival_variance(const NetworkParameters& params,
                                                        const ArrivalRateDistribution& dist, PopulationModel model,
                                                        std::uint64_t replications, std::uint64_t seed,
                                                        const ArrivalVarianceOptions& options = {});

}  // namespace sttraffic
