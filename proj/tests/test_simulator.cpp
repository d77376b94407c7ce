#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "sttraffic/simulator.hpp"

using namespace sttraffic;
using doctest::Approx;

namespace {

// Two BSs far apart with `left` and `right` users placed next to them.
Topology two_cells(std::size_t left, std::size_t right) {
    Topology t;
    t.window = make_window(1000.0, 1000.0);
    t.bss.points.resize(2, 2);
    t.bss.points << 250.0, 750.0, 500.0, 500.0;
    t.users.points.resize(2, static_cast<Eigen::Index>(left + right));
    for (std::size_t i = 0; i < left + right; ++i) {
        const double x = i < left ? 250.0 : 750.0;
        t.users.points.col(static_cast<Eigen::Index>(i)) = Vec2(x + 5.0 + double(i), 510.0);
    }
    t.association = associate(t.users, t.bss, t.window);
    return t;
}

std::vector<UserTraffic> constant_traffic(std::size_t users, double rate, std::uint64_t seed) {
    std::vector<UserTraffic> out(users);
    for (std::size_t i = 0; i < users; ++i) out[i] = {rate, derive_seed(seed, i)};
    return out;
}

NetworkParameters base_params() {
    NetworkParameters p;
    p.lambda_b = 1e-5;
    p.lambda_u = 5e-5;
    p.theta = 10.0;
    p.alpha = 4.0;
    return p;
}

}  // namespace

TEST_CASE("static SIR sampling reproduces the closed form") {
    NetworkParameters p = base_params();
    const Estimate none = run_sir_static(p, 0.0, 100000, 1);
    CHECK(none.value == 1.0);
    const Estimate e = run_sir_static(p, 0.5, 200000, 2);
    CHECK(std::abs(e.value - success_probability(0.5, p.theta, p.alpha)) < 4.0 * e.stderr + 0.005);
    CHECK(e.stderr == Approx(std::sqrt(e.value * (1 - e.value) / 200000)).epsilon(1e-6));
    // scale invariance: the success probability does not depend on lambda_b
    p.lambda_b = 1e-3;
    const Estimate dense = run_sir_static(p, 0.5, 200000, 3);
    CHECK(std::abs(dense.value - e.value) < 4.0 * std::hypot(e.stderr, dense.stderr));
    CHECK(run_sir_static(p, 0.5, 100000, 9).value == run_sir_static(p, 0.5, 100000, 9).value);
    CHECK_THROWS_AS(run_sir_static(p, 1.5, 100000, 1), ParameterError);
    CHECK_THROWS_AS(run_sir_static(p, 0.5, 1000, 1), ParameterError);
}

TEST_CASE("interferers beyond the serving BS follow the exclusion-disc closed form") {
    // alpha = 4: P = 1 / (1 + q sqrt(theta) (pi/2 - atan(1/sqrt(theta))))
    const NetworkParameters p = base_params();
    const double rho = std::sqrt(p.theta) * (std::numbers::pi / 2 - std::atan(1.0 / std::sqrt(p.theta)));
    SirStaticOptions o;
    o.field = InterferenceField::beyond_serving;
    for (double q : {0.2, 1.0}) {
        const Estimate e = run_sir_static(p, q, 200000, 40, o);
        CHECK(std::abs(e.value - 1.0 / (1.0 + q * rho)) < 4.0 * e.stderr + 0.002);
        CHECK(e.value > success_probability(q, p.theta, p.alpha));
    }
}

TEST_CASE("queue buffer is FIFO with head-of-line retention") {
    QueueState q;
    q.push(3);
    q.push(5);
    CHECK(q.head() == 3);
    CHECK(q.size() == 2);
    CHECK(q.depart(3) == 1);
    CHECK(q.head() == 5);
    CHECK(q.depart(9) == 5);
    CHECK(q.empty());
}

TEST_CASE("drift fit and stability classification") {
    DriftAccumulator d;
    for (int i = 0; i < 100; ++i) d.add(i, 3.0 + 0.25 * i);
    CHECK(d.slope() == Approx(0.25));
    CHECK(d.count() == 100);
    CHECK(DriftAccumulator{}.slope() == 0.0);

    std::vector<double> growing(kMinStabilityTraceSlots), flat(kMinStabilityTraceSlots, 4.0);
    for (std::size_t i = 0; i < growing.size(); ++i) growing[i] = 0.01 * double(i);
    const std::vector<QueueTrace> traces{QueueTrace::from_lengths(growing), QueueTrace::from_lengths(flat)};
    CHECK(traces[0].drift.slope() == Approx(0.01));
    CHECK(classify_queue_stability(traces) == Approx(0.5));
    const std::vector<double> short_trace(1000, 0.0);
    const std::vector<QueueTrace> too_short{QueueTrace::from_lengths(short_trace)};
    CHECK_THROWS_AS(classify_queue_stability(too_short), ParameterError);
}

TEST_CASE("delay oracle against the Geo/Geo/1 formula") {
    const auto r = run_delay_oracle(1, 0.3, 0.5, 2'000'000, 5);
    REQUIRE(r.mean_delay.is_finite());
    CHECK(r.mean_delay.value() == Approx(3.5).epsilon(0.02));
    CHECK(std::abs(r.mean_delay.value() - 3.5) < 4.0 * r.stderr);
    // light traffic: delay tends to 1 / mu
    const auto light = run_delay_oracle(4, 1e-3, 0.2, 2'000'000, 6);
    CHECK(light.mean_delay.value() == Approx(geo_queue_delay(1e-3, 0.2).value()).epsilon(0.03));
    CHECK(light.mean_delay.value() == Approx(5.0).epsilon(0.03));
    // overload is reported as unstable
    const auto over = run_delay_oracle(2, 0.3, 0.2, 1'000'000, 7);
    CHECK(over.mean_delay.is_unstable());
    CHECK(over.trace.drift.slope() == Approx(0.1).epsilon(0.1));
    const auto again = run_delay_oracle(1, 0.3, 0.5, 1'000'000, 5);
    CHECK(again.departures == run_delay_oracle(1, 0.3, 0.5, 1'000'000, 5).departures);
    CHECK_THROWS_AS(run_delay_oracle(1, 0.3, 0.5, 1000, 1), ParameterError);
    CHECK_THROWS_AS(run_delay_oracle(4, 0.01, 0.5, 1'000'000, 1), ParameterError);
    CHECK_THROWS_AS(run_delay_oracle(0, 0.01, 0.5, 1'000'000, 1), ParameterError);
}

TEST_CASE("isolated single-user cell serves every packet in its arrival slot") {
    const Topology t = two_cells(1, 1);
    CoupledOptions o;
    o.horizon = 20000;
    o.warmup = 1000;
    o.interference = false;
    const auto traffic = constant_traffic(2, 0.3, 1);
    const MetricsReport r = run_coupled(t, traffic, base_params(), o);
    CHECK(r.per_user_mean_delay == 1.0);
    CHECK(r.empirical_success_prob == 1.0);
    CHECK(r.empirical_busy_prob == Approx(0.3).epsilon(0.05));
    for (const UserStats& s : r.user_stats) CHECK(s.final_queue == 0);
    CHECK_FALSE(r.unstable_fraction.has_value());
}

TEST_CASE("coupled run conserves packets and keeps FIFO order") {
    const Topology t = two_cells(3, 2);
    CoupledOptions o;
    o.horizon = 50000;
    o.seed = 4;
    const auto traffic = constant_traffic(5, 0.08, 2);
    const MetricsReport r = run_coupled(t, traffic, base_params(), o);
    REQUIRE(r.user_stats.size() == 5);
    std::uint64_t samples = 0;
    for (const UserStats& s : r.user_stats) {
        CHECK(s.arrivals == s.departures + s.final_queue);
        CHECK(s.delay_samples <= s.departures);
        CHECK(s.fifo_order_held);
        samples += s.delay_samples;
    }
    CHECK(samples == r.delay_samples);
    CHECK(r.successes <= r.transmissions);
    CHECK(r.empirical_busy_prob >= 0.0);
    CHECK(r.empirical_busy_prob <= 1.0);
    CHECK(r.warmup == 10000);
    CHECK(r.base_stations == 2);
    CHECK(r.users == 5);
}

TEST_CASE("coupled run is a pure function of its seed") {
    CoupledOptions o;
    o.horizon = 20000;
    o.seed = 12;
    o.bs_per_window = 30;
    const auto dist = ArrivalRateDistribution::exponential_mean(0.01);
    const MetricsReport a = run_coupled(base_params(), dist, o);
    const MetricsReport b = run_coupled(base_params(), dist, o);
    CHECK(metrics_csv_row(a) == metrics_csv_row(b));
    o.seed = 13;
    CHECK(metrics_csv_row(run_coupled(base_params(), dist, o)) != metrics_csv_row(a));
}

TEST_CASE("zero traffic leaves every BS idle") {
    CoupledOptions o;
    o.horizon = 5000;
    o.bs_per_window = 20;
    const MetricsReport r = run_coupled(base_params(), ArrivalRateDistribution::deterministic(0.0), o);
    CHECK(r.empirical_busy_prob == 0.0);
    CHECK(r.delay_samples == 0);
    CHECK(r.transmissions == 0);
    CHECK(r.empirical_success_prob == 0.0);
}

TEST_CASE("scheduling rule and interference switch") {
    const Topology t = two_cells(4, 4);
    const auto traffic = constant_traffic(8, 0.05, 3);
    CoupledOptions o;
    o.horizon = 40000;
    const MetricsReport all = run_coupled(t, traffic, base_params(), o);
    o.scheduling = Scheduling::active_only;
    const MetricsReport active = run_coupled(t, traffic, base_params(), o);
    CHECK(active.per_user_mean_delay < all.per_user_mean_delay);
    o.interference = false;
    const MetricsReport quiet = run_coupled(t, traffic, base_params(), o);
    CHECK(quiet.successes == quiet.transmissions);
}

TEST_CASE("coupled run rejects malformed inputs") {
    const Topology t = two_cells(2, 1);
    CoupledOptions o;
    o.horizon = 1000;
    o.warmup = 1000;
    const auto traffic = constant_traffic(3, 0.1, 1);
    CHECK_THROWS_AS(run_coupled(t, traffic, base_params(), o), ParameterError);
    o.warmup = 0;
    CHECK_THROWS_AS(run_coupled(t, constant_traffic(2, 0.1, 1), base_params(), o), ParameterError);
    Topology empty = t;
    empty.users = PointPattern{};
    empty.association = associate(empty.users, empty.bss, empty.window);
    CHECK_THROWS_AS(run_coupled(empty, std::vector<UserTraffic>{}, base_params(), o), ParameterError);
}

TEST_CASE("traces, record and CSV serialisation") {
    const Topology t = two_cells(2, 1);
    CoupledOptions o;
    o.horizon = 1000;
    o.warmup = 200;
    o.record_traces = true;
    const MetricsReport r = run_coupled(t, constant_traffic(3, 0.2, 5), base_params(), o);
    REQUIRE(r.traces.size() == 3);
    for (const auto& row : r.traces) CHECK(row.size() == 800);
    for (std::size_t u = 0; u < 3; ++u) CHECK(r.traces[u].back() == r.user_stats[u].final_queue);

    std::ostringstream trace_text;
    write_traces(trace_text, r);
    CHECK(trace_text.str().rfind("slot,user,length\n200,0,", 0) == 0);

    std::ostringstream record;
    write_metrics_record(record, r);
    CHECK(record.str().find("empirical_busy_prob=") != std::string::npos);
    CHECK(record.str().find("unstable_fraction=na\n") != std::string::npos);
    CHECK(record.str().find("seed=1\n") != std::string::npos);
    const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
    CHECK(count(metrics_csv_header()) == count(metrics_csv_row(r)));
    CHECK(metrics_csv_header().rfind("empirical_busy_prob,empirical_success_prob,per_user_mean_delay", 0) == 0);
}

TEST_CASE("traffic assignment draws rates and distinct arrival seeds") {
    double clamped = -1.0;
    const auto traffic = assign_traffic(ArrivalRateDistribution::exponential_mean(0.5), 20000, 9, &clamped);
    CHECK(clamped == Approx(std::exp(-2.0)).epsilon(0.1));
    for (const auto& u : traffic) CHECK(u.rate <= 1.0);
    CHECK(traffic[0].arrival_seed != traffic[1].arrival_seed);
    CHECK(assign_traffic(ArrivalRateDistribution::uniform(0.02), 5, 9)[3].rate ==
          assign_traffic(ArrivalRateDistribution::uniform(0.02), 5, 9)[3].rate);
}

TEST_CASE("unstable fraction grows with user density") {
    NetworkParameters p = base_params();
    const auto dist = ArrivalRateDistribution::exponential_mean(0.02);
    CoupledOptions o;
    o.horizon = 125000;
    o.warmup = 25000;
    o.bs_per_window = 20;
    o.seed = 17;
    std::vector<double> fractions;
    for (double ratio : {1.0, 8.0, 30.0}) {
        p.lambda_u = ratio * p.lambda_b;
        const MetricsReport r = run_coupled(p, dist, o);
        REQUIRE(r.unstable_fraction.has_value());
        fractions.push_back(*r.unstable_fraction);
    }
    CHECK(fractions[0] <= fractions[1]);
    CHECK(fractions[1] <= fractions[2]);
    CHECK(fractions[2] > fractions[0] + 0.1);
}

TEST_CASE("summed arrival variance estimator") {
    NetworkParameters p = base_params();
    const auto zero = estimate_total_arrival_variance(p, ArrivalRateDistribution::deterministic(0.0),
                                                      PopulationModel::ppp, 1000, 1);
    CHECK(zero.variance == 0.0);
    CHECK(zero.replications == 1000);
    CHECK_THROWS_AS(estimate_total_arrival_variance(p, ArrivalRateDistribution::deterministic(1.0),
                                                    PopulationModel::ppp, 10, 1),
                    ParameterError);
    // strongly clustered users (6 per cluster) against Poisson users at the same density
    p.lambda_u = 5e-5;
    p.pcp = PcpParams{p.lambda_u / 6.0, 6.0 / (std::numbers::pi * 400.0), 20.0};
    const auto det = ArrivalRateDistribution::deterministic(1.0);
    const auto ppp = estimate_total_arrival_variance(p, det, PopulationModel::ppp, 2000, 2);
    const auto pcp = estimate_total_arrival_variance(p, det, PopulationModel::pcp, 2000, 2);
    CHECK(ppp.mean == Approx(5.0).epsilon(0.05));
    CHECK(pcp.variance > ppp.variance + 3.0 * std::hypot(ppp.variance_stderr, pcp.variance_stderr));
    CHECK(ppp.variance == Approx(total_arrival_moments(det, p, PopulationModel::ppp).variance).epsilon(0.15));
}
