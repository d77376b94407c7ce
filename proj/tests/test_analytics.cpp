#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sttraffic/analytics.hpp"

using namespace sttraffic;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

// Poisson pmf table by the recurrence p(k) = p(k-1) mean / k.
std::vector<double> poisson_table(double mean, int last) {
    std::vector<double> p(static_cast<std::size_t>(last) + 1);
    p[0] = std::exp(-mean);
    for (int k = 1; k <= last; ++k) p[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k) - 1] * mean / k;
    return p;
}

// Direct double sum for the clustered user count, no log-space tricks.
double pcp_pmf_direct(int k, const PcpParams& pcp, double s, int parents) {
    const auto parent = poisson_table(pcp.lambda_p * s, parents);
    const double m = pcp.mean_cluster_size();
    double sum = 0.0;
    for (int a = 0; a <= parents; ++a) {
        if (a == 0) {
            sum += k == 0 ? parent[0] : 0.0;
            continue;
        }
        sum += parent[static_cast<std::size_t>(a)] * poisson_table(a * m, k)[static_cast<std::size_t>(k)];
    }
    return sum;
}

double stable_rate(int k, double theta, double alpha) {
    const double d = 2.0 / alpha;
    const double sinc = std::sin(kPi * d) / (kPi * d);
    return sinc / (k * (sinc + std::pow(theta, d)));
}

NetworkParameters fig8_params(double lambda_u, double alpha) {
    NetworkParameters p;
    p.lambda_b = 0.1;
    p.lambda_u = lambda_u;
    p.theta = 10.0;
    p.alpha = alpha;
    p.pcp = PcpParams{1.0 / (1.1 * kPi), lambda_u * 1.1, 1.0};
    return p;
}

}  // namespace

TEST_CASE("sinc and threshold power") {
    CHECK(sinc_delta(4.0) == Approx(2.0 / kPi));
    CHECK(sinc_delta(3.0) == Approx(std::sin(2 * kPi / 3) / (2 * kPi / 3)));
    CHECK(theta_power(10.0, 4.0) == Approx(std::sqrt(10.0)));
    CHECK(sinc_delta(4.0L) == Approx(static_cast<double>(2.0L / std::numbers::pi_v<long double>)));
}

TEST_CASE("busy-probability fixed point at the worked example") {
    const double q = solve_busy_probability(10.0, 0.01, 10.0, 4.0);
    CHECK(q == Approx(0.198701).epsilon(1e-5));
    const auto it = iterate_busy_probability(10.0, 0.01, 10.0, 4.0);
    CHECK(std::abs(it.q - q) < 1e-10);
    CHECK(it.iterations > 0);
    CHECK(solve_busy_probability(10.0, 0.0, 10.0, 4.0) == 0.0);
    CHECK(iterate_busy_probability(10.0, 0.0, 10.0, 4.0).q == 0.0);
    // q solves q = n xi0 / P_s(q)
    CHECK(q == Approx(10.0 * 0.01 / success_probability(q, 10.0, 4.0)).epsilon(1e-12));
}

TEST_CASE("busy probability saturates continuously at the threshold") {
    const double n = 10.0, theta = 10.0, alpha = 4.0;
    const double b0 = saturation_rate(n, theta, alpha);
    CHECK(b0 * n == Approx(sinc_delta(alpha) / (sinc_delta(alpha) + theta_power(theta, alpha))));
    CHECK(solve_busy_probability(n, b0 * (1 - 1e-9), theta, alpha) == Approx(1.0).epsilon(1e-6));
    CHECK(solve_busy_probability(n, b0, theta, alpha) == 1.0);
    CHECK(solve_busy_probability(n, 2 * b0, theta, alpha) == 1.0);
    CHECK(iterate_busy_probability(n, 2 * b0, theta, alpha).q == 1.0);
    CHECK(approx_success_probability(n, b0 * (1 - 1e-12), theta, alpha) ==
          Approx(approx_success_probability(n, b0, theta, alpha)).epsilon(1e-9));
}

TEST_CASE("closed form and iteration agree on random draws") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> un(1.0, 50.0), ux(0.0, 0.05), ua(2.05, 6.0), ut(-10.0, 20.0);
    for (int i = 0; i < 300; ++i) {
        const double n = un(rng), xi0 = ux(rng), alpha = ua(rng), theta = db_to_linear(ut(rng));
        const double q = solve_busy_probability(n, xi0, theta, alpha);
        CHECK(q >= 0.0);
        CHECK(q <= 1.0);
        CHECK(std::abs(iterate_busy_probability(n, xi0, theta, alpha).q - q) <= 1e-10);
    }
}

TEST_CASE("success probability closed forms") {
    CHECK(success_probability(0.0, 10.0, 4.0) == 1.0);
    CHECK(success_probability(1.0, 10.0, 4.0) == Approx(0.16757).epsilon(1e-4));
    CHECK(approx_success_probability(10.0, 0.01, 10.0, 4.0) == Approx(0.50327).epsilon(1e-4));
    CHECK(approx_success_probability(10.0, 0.1, 10.0, 4.0) == Approx(0.16757).epsilon(1e-4));
    // the linear form equals P_s evaluated at the fixed point
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> un(1.0, 30.0), ux(0.0, 0.05), ua(2.1, 5.0);
    for (int i = 0; i < 200; ++i) {
        const double n = un(rng), xi0 = ux(rng), alpha = ua(rng), theta = 10.0;
        const double q = solve_busy_probability(n, xi0, theta, alpha);
        CHECK(approx_success_probability(n, xi0, theta, alpha) ==
              Approx(success_probability(q, theta, alpha)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(success_probability(1.5, 10.0, 4.0), ParameterError);
    CHECK_THROWS_AS(success_probability(0.5, 10.0, 2.0), ParameterError);
    CHECK_THROWS_AS(success_probability(0.5, 0.0, 4.0), ParameterError);
}

TEST_CASE("achievable rate is unimodal in theta and grows with alpha") {
    for (double alpha : {2.5, 3.0, 4.0}) {
        double prev = achievable_rate(10.0, 0.01, db_to_linear(-40.0), alpha);
        CHECK(prev < 1e-3);
        int turns = 0;
        bool rising = true;
        for (double db = -39.5; db <= 40.0; db += 0.5) {
            const double tau = achievable_rate(10.0, 0.01, db_to_linear(db), alpha);
            if (rising && tau < prev) {
                rising = false;
                ++turns;
            } else if (!rising && tau > prev) {
                ++turns;
            }
            prev = tau;
        }
        CHECK(turns == 1);
    }
    for (double db : {0.0, 10.0, 20.0}) {
        const double theta = db_to_linear(db);
        CHECK(achievable_rate(10.0, 0.01, theta, 3.0) > achievable_rate(10.0, 0.01, theta, 2.5));
        CHECK(achievable_rate(10.0, 0.01, theta, 4.0) > achievable_rate(10.0, 0.01, theta, 3.0));
    }
}

TEST_CASE("service rate and mean delay") {
    CHECK(service_rate(20.0, 0.005, 10.0, 4.0) == Approx(0.025163).epsilon(1e-4));
    CHECK(service_rate(1.0, 0.0, 10.0, 4.0) == 1.0);
    double prev = 1.0;
    for (int n = 1; n <= 40; ++n) {
        const double mu = service_rate(double(n), 0.005, 10.0, 4.0);
        CHECK(mu <= prev);
        prev = mu;
    }
    const DelayResult d = mean_delay(20.0, 0.005, 10.0, 4.0);
    REQUIRE(d.is_finite());
    CHECK(d.value() == Approx(49.35).epsilon(1e-3));
    // same value through the queue formula
    CHECK(d.value() == Approx(geo_queue_delay(0.005, service_rate(20.0, 0.005, 10.0, 4.0)).value()).epsilon(1e-10));
    CHECK(mean_delay(1.0, 1e-9, 10.0, 4.0).value() == Approx(1.0).epsilon(1e-6));
    const DelayResult u = mean_delay(40.0, 0.005, 10.0, 4.0);
    CHECK(u.is_unstable());
    CHECK_THROWS_AS(u.value(), NumericError);
    CHECK(geo_queue_delay(0.3, 0.3).is_unstable());
}

TEST_CASE("stability thresholds") {
    const auto th = stability_thresholds(0.005, 10.0, 4.0, 100.0);
    CHECK(th.a1 == Approx(33.516).epsilon(1e-4));
    CHECK(th.a2 < th.a1);
    CHECK(th.b0 == Approx(0.16757).epsilon(1e-4));
    for (int n = 1; n < 60; ++n) CHECK(mean_delay(double(n), 0.005, 10.0, 4.0).is_finite() == (n < th.a1));
    // a2 is where the delay crosses beta
    CHECK(mean_delay(th.a2, 0.005, 10.0, 4.0).value() == Approx(100.0).epsilon(1e-9));
    CHECK(mean_delay(std::floor(th.a2), 0.005, 10.0, 4.0).value() < 100.0);
    CHECK(mean_delay(std::ceil(th.a2), 0.005, 10.0, 4.0).value() > 100.0);
    CHECK(stability_thresholds(0.005, 10.0, 4.0, 1e12).a2 == Approx(th.a1).epsilon(1e-8));
    CHECK_THROWS_AS(stability_thresholds(0.0, 10.0, 4.0, 100.0), ParameterError);
    CHECK_THROWS_AS(stability_thresholds(0.005, 10.0, 4.0, 1.0), ParameterError);
}

TEST_CASE("scalar type is a template parameter") {
    const long double ql = solve_busy_probability(10.0L, 0.01L, 10.0L, 4.0L);
    CHECK(static_cast<double>(ql) == Approx(solve_busy_probability(10.0, 0.01, 10.0, 4.0)).epsilon(1e-14));
    const float qf = solve_busy_probability(10.0f, 0.01f, 10.0f, 4.0f);
    CHECK(static_cast<double>(qf) == Approx(0.198701).epsilon(1e-4));
}

TEST_CASE("Poisson user-count pmf") {
    CHECK(pmf_users_ppp(0, 1e-4, 1e5) == Approx(std::exp(-10.0)));
    double total = 0.0;
    for (int k = 0; k < 200; ++k) total += pmf_users_ppp<double>(k, 1e-4, 1e5);
    CHECK(total == Approx(1.0).epsilon(1e-12));
    CHECK(pmf_users_ppp(10, 1e-4, 1e5) > pmf_users_ppp(20, 1e-4, 1e5));
    CHECK(std::isfinite(pmf_users_ppp(5000, 1e-4, 1e5)));
    CHECK(pmf_users_ppp(0, 0.0, 1.0) == 1.0);
    CHECK_THROWS_AS(pmf_users_ppp(-1, 1e-4, 1e5), ParameterError);
}

TEST_CASE("clustered user-count pmf against a direct double sum") {
    const double s = 10.0;
    for (double lambda_u : {0.5, 1.0, 2.0}) {
        const PcpParams pcp{lambda_u / (1.1 * kPi), 1.1, 1.0};
        // P(N = 0) = exp(-lambda_p s (1 - exp(-m)))
        CHECK(pmf_users_pcp(0, pcp, s) ==
              Approx(std::exp(-pcp.lambda_p * s * (1 - std::exp(-pcp.mean_cluster_size())))).epsilon(1e-10));
        CHECK(pmf_users_pcp(0, pcp, s) >= pmf_users_ppp(0, lambda_u, s));
        const auto table = pmf_users_pcp_table(200, pcp, s);
        double total = 0.0;
        for (std::size_t k = 0; k < table.size(); ++k) {
            total += table[k];
            if (k <= 40) CHECK(table[k] == Approx(pcp_pmf_direct(int(k), pcp, s, 80)).epsilon(1e-9));
        }
        CHECK(total == Approx(1.0).epsilon(1e-9));
        CHECK(table[7] == pmf_users_pcp(7, pcp, s));
    }
    CHECK_THROWS_AS(pmf_users_pcp(-1, PcpParams{0.1, 1.0, 1.0}, 1.0), ParameterError);
}

TEST_CASE("Poisson truncation point bounds the tail") {
    for (double mean : {0.5, 3.0, 30.0, 300.0}) {
        const auto a = poisson_truncation_point(mean, 1e-10);
        const auto p = poisson_table(mean, int(a) + 400);
        double tail = 0.0;
        for (std::size_t k = std::size_t(a) + 1; k < p.size(); ++k) tail += p[k];
        CHECK(tail < 1e-10);
        CHECK(a >= std::int64_t(mean));
    }
    CHECK(poisson_truncation_point(0.0, 1e-10) == 0);
}

TEST_CASE("summed arrival-rate moments") {
    NetworkParameters p;
    p.lambda_b = 1e-5;
    p.lambda_u = 1e-4;
    const auto det = ArrivalRateDistribution::deterministic(1.5);
    const auto ppp = total_arrival_moments(det, p, PopulationModel::ppp);
    CHECK(ppp.mean == Approx(15.0));
    CHECK(ppp.variance == Approx(2.25 * (2.0 / 7.0 * 100.0 + 10.0)).epsilon(1e-12));
    CHECK(ppp.variance == Approx(86.79).epsilon(1e-3));
    p.pcp = PcpParams{p.lambda_u / (kPi * 400.0 * 0.0025), 0.0025, 20.0};
    const auto pcp = total_arrival_moments(det, p, PopulationModel::pcp);
    CHECK(pcp.mean == Approx(15.0));
    CHECK(pcp.variance - ppp.variance == Approx(2.25 * 10.0 * p.pcp->mean_cluster_size()).epsilon(1e-10));
    p.lambda_u = 1e-12;
    p.pcp.reset();
    CHECK(total_arrival_moments(det, p, PopulationModel::ppp).variance < 1e-6);
    p.pcp = PcpParams{1e-5, 1.0, 1.0};
    CHECK_THROWS_AS(total_arrival_moments(det, p, PopulationModel::pcp), ParameterError);
}

TEST_CASE("unstable probability against direct summation") {
    const double s = 10.0;
    const auto ex = ArrivalRateDistribution::exponential_mean(0.01);
    const auto un = ArrivalRateDistribution::uniform(0.02);
    for (double alpha : {2.5, 3.0, 4.0}) {
        for (double lambda_u : {0.01, 0.1, 1.0, 5.0}) {
            const NetworkParameters p = fig8_params(lambda_u, alpha);
            const auto pk = poisson_table(lambda_u * s, 600);
            // exponential: stable w.p. 1 - exp(-f(k)/mean) given k users
            double stable = pk[0];
            for (int k = 1; k <= 600; ++k)
                stable += (1 - std::exp(-stable_rate(k, 10.0, alpha) / 0.01)) * pk[std::size_t(k)];
            CHECK(unstable_probability(ex, PopulationModel::ppp, p, s) == Approx(1 - stable).epsilon(1e-8));
            // uniform: the first k with f(k) < b splits the sum
            double stable_u = 0.0;
            for (int k = 0; k <= 600; ++k) {
                const double ratio = k == 0 ? 1.0 : std::min(1.0, stable_rate(k, 10.0, alpha) / 0.02);
                stable_u += ratio * pk[std::size_t(k)];
            }
            CHECK(unstable_probability(un, PopulationModel::ppp, p, s) == Approx(1 - stable_u).epsilon(1e-8));
            // clustered, exponential
            double stable_c = 0.0;
            for (int k = 0; k <= 150; ++k) {
                const double f = k == 0 ? 1.0 : 1 - std::exp(-stable_rate(k, 10.0, alpha) / 0.01);
                stable_c += f * pcp_pmf_direct(k, *p.pcp, s, 60);
            }
            if (lambda_u <= 1.0)
                CHECK(unstable_probability(ex, PopulationModel::pcp, p, s) == Approx(1 - stable_c).epsilon(1e-7));
        }
    }
}

TEST_CASE("small unstable probabilities keep their relative accuracy") {
    // uniform(0, 0.02) at alpha = 4: only cells with 9 or more users can be unstable
    const auto un = ArrivalRateDistribution::uniform(0.02);
    for (double lambda_u : {0.01, 0.02, 0.05}) {
        const auto pk = poisson_table(lambda_u * 10.0, 60);
        double direct = 0.0;
        for (int k = 1; k <= 60; ++k)
            direct += (1 - std::min(1.0, stable_rate(k, 10.0, 4.0) / 0.02)) * pk[std::size_t(k)];
        const double pu = unstable_probability(un, PopulationModel::ppp, fig8_params(lambda_u, 4.0), 10.0);
        CHECK(direct > 0.0);
        CHECK(pu / direct == Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("unstable probability trends") {
    const auto ex = ArrivalRateDistribution::exponential_mean(0.01);
    for (auto model : {PopulationModel::ppp, PopulationModel::pcp}) {
        CHECK(unstable_probability(ex, model, fig8_params(1e-5, 4.0), 10.0) < 1e-5);
        double prev = 0.0;
        for (double lambda_u = 0.01; lambda_u <= 10.0; lambda_u *= 1.5) {
            const double pu = unstable_probability(ex, model, fig8_params(lambda_u, 4.0), 10.0);
            CHECK(pu >= prev - 1e-12);
            prev = pu;
            CHECK(unstable_probability(ex, model, fig8_params(lambda_u, 2.5), 10.0) >= pu);
        }
    }
    CHECK_THROWS_AS(unstable_probability(ArrivalRateDistribution::deterministic(0.01), PopulationModel::ppp,
                                         fig8_params(1.0, 4.0), 10.0),
                    ParameterError);
}

TEST_CASE("network parameter validation") {
    NetworkParameters p;
    CHECK_NOTHROW(p.validate());
    p.alpha = 2.0;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    p.alpha = 4.0;
    p.lambda_b = 0.0;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    p.lambda_b = 1e-5;
    CHECK_THROWS_AS(p.validate_for(PopulationModel::pcp), ParameterError);
    CHECK(db_to_linear(10.0) == Approx(10.0));
    CHECK(linear_to_db(100.0) == Approx(20.0));
}
