#include "sttraffic/analytics.hpp"

#include <algorithm>
#include <cmath>

namespace sttraffic {

void NetworkParameters::validate() const {
    detail::require(std::isfinite(lambda_b) && lambda_b > 0.0, "lambda_b must be positive");
    detail::require(std::isfinite(lambda_u) && lambda_u > 0.0, "lambda_u must be positive");
    detail::require_link_params(theta, alpha);
    detail::require(std::isfinite(p_b) && p_b > 0.0, "p_b must be positive");
    detail::require(std::isfinite(beta) && beta > 0.0, "beta must be positive");
    if (pcp) pcp->validate();
}

void NetworkParameters::validate_for(PopulationModel model) const {
    validate();
    if (model != PopulationModel::pcp) return;
    detail::require(pcp.has_value(), "PCP model requested without cluster parameters");
    const double implied = pcp->user_intensity();
    detail::require(std::abs(implied - lambda_u) <= 1e-9 * lambda_u,
                    "lambda_u must equal pi r_c^2 lambda_c lambda_p for the PCP model");
}

std::int64_t poisson_truncation_point(double mean, double tol) {
    detail::require(mean >= 0.0 && std::isfinite(mean), "poisson_truncation_point: bad mean");
    detail::require(tol > 0.0 && tol < 1.0, "poisson_truncation_point: tol must lie in (0, 1)");
    if (mean == 0.0) return 0;
    constexpr std::int64_t kGuard = 50'000'000;
    // For a >= mean the tail P(X > a) is bounded by pmf(a+1) (a+2)/(a+2-mean).
    std::int64_t a = static_cast<std::int64_t>(std::floor(mean));
    for (; a < kGuard; ++a) {
        const double next = static_cast<double>(a + 1);
        const double log_pmf = -mean + next * std::log(mean) - std::lgamma(next + 1.0);
        const double bound = std::exp(log_pmf) * (next + 1.0) / (next + 1.0 - mean);
        if (bound < tol) return a;
    }
    throw NumericError("Poisson truncation point exceeds guard; mean too large");
}

namespace {

double log_poisson(double k, double mean) {
    if (mean == 0.0) return k == 0.0 ? 0.0 : -INFINITY;
    return -mean + k * std::log(mean) - std::lgamma(k + 1.0);
}

struct ParentWeights {
    std::vector<double> log_weight;  // log P(N_p = a)
    double cluster_mean = 0.0;
};

ParentWeights parent_weights(const PcpParams& pcp, double s, double tol) {
    pcp.validate();
    detail::require(s > 0.0, "pmf_users_pcp: area must be positive");
    detail::require(tol > 0.0 && tol <= 1e-6, "pmf_users_pcp: tol must lie in (0, 1e-6]");
    const double parent_mean = pcp.lambda_p * s;
    const std::int64_t last = poisson_truncation_point(parent_mean, tol);
    ParentWeights w;
    w.cluster_mean = pcp.mean_cluster_size();
    w.log_weight.resize(static_cast<std::size_t>(last) + 1);
    for (std::int64_t a = 0; a <= last; ++a)
        w.log_weight[static_cast<std::size_t>(a)] = log_poisson(static_cast<double>(a), parent_mean);
    return w;
}

double pcp_term(const ParentWeights& w, std::int64_t k) {
    const double kk = static_cast<double>(k);
    double sum = 0.0;
    for (std::size_t a = 0; a < w.log_weight.size(); ++a) {
        const double log_term = w.log_weight[a] + log_poisson(kk, static_cast<double>(a) * w.cluster_mean);
        sum += std::exp(log_term);
    }
    if (!std::isfinite(sum)) throw NumericError("pmf_users_pcp: non-finite series value");
    return sum;
}

}  // namespace

double pmf_users_pcp(std::int64_t k, const PcpParams& pcp, double s, double tol) {
    detail::require(k >= 0, "pmf_users_pcp: k must be non-negative");
    return pcp_term(parent_weights(pcp, s, tol), k);
}

std::vector<double> pmf_users_pcp_table(std::int64_t max_k, const PcpParams& pcp, double s, double tol) {
    detail::require(max_k >= 0, "pmf_users_pcp_table: max_k must be non-negative");
    const ParentWeights w = parent_weights(pcp, s, tol);
    std::vector<double> out(static_cast<std::size_t>(max_k) + 1);
    for (std::int64_t k = 0; k <= max_k; ++k) out[static_cast<std::size_t>(k)] = pcp_term(w, k);
    return out;
}

ArrivalMoments total_arrival_moments(const ArrivalRateDistribution& dist, const NetworkParameters& params,
                                     PopulationModel model) {
    params.validate_for(model);
    const double m = rate_mean(dist);
    const double ratio = params.lambda_u / params.lambda_b;
    double count_term = ratio;
    if (model == PopulationModel::pcp) count_term *= params.pcp->mean_cluster_size() + 1.0;
    ArrivalMoments out;
    out.mean = m * ratio;
    out.variance = m * m * ((kCellAreaSecondMoment - 1.0) * ratio * ratio + count_term);
    return out;
}

namespace {

// Sums (1 - P(xi0 <= f(k))) P(N = k) over k >= 1. Summing the unstable mass
// directly keeps small probabilities accurate where the complement form
// 1 - sum(stable) cancels. The series stops once the remaining user-count
// mass is below tol and negligible against the running sum; that remainder,
// estimated geometrically from the last ratio, counts as unstable.
template <class Pmf, class Stable>
double sum_unstable_mass(const Pmf& pmf, double mean, double tol, const Stable& stable_given) {
    constexpr std::int64_t kGuard = 10'000'000;
    double covered = pmf(0);
    double prev = covered;
    double unstable = 0.0;
    for (std::int64_t k = 1; k < kGuard; ++k) {
        const double p = pmf(k);
        unstable += (1.0 - stable_given(k)) * p;
        covered += p;
        if (static_cast<double>(k) >= mean && p <= prev) {
            if (p == 0.0) return unstable;
            const double ratio = p / prev;
            const double tail = ratio < 1.0 ? p * ratio / (1.0 - ratio) : INFINITY;
            if (1.0 - covered < tol && tail < tol && tail <= 1e-12 * unstable) return unstable + tail;
        }
        prev = p;
    }
    throw NumericError("unstable_probability: user-count series did not converge");
}

}  // namespace

double unstable_probability(const ArrivalRateDistribution& dist, PopulationModel model,
                            const NetworkParameters& params, double s, double tol) {
    params.validate_for(model);
    detail::require(s > 0.0, "unstable_probability: area must be positive");
    detail::require(tol > 0.0 && tol <= 1e-6, "unstable_probability: tol must lie in (0, 1e-6]");
    if (std::holds_alternative<Deterministic>(dist.law()))
        throw ParameterError("unstable_probability: only exponential and uniform arrival laws are supported");

    const double sinc = sinc_delta(params.alpha);
    const double t = theta_power(params.theta, params.alpha);
    // a queue in a k-user cell is stable iff xi0 < f(k) = sinc / (k (sinc + theta^d))
    const auto stable_given = [&](std::int64_t k) {
        return rate_cdf(dist, sinc / (static_cast<double>(k) * (sinc + t)));
    };

    double unstable = 0.0;
    if (model == PopulationModel::ppp) {
        const auto pmf = [&](std::int64_t k) { return pmf_users_ppp<double>(k, params.lambda_u, s); };
        unstable = sum_unstable_mass(pmf, params.lambda_u * s, tol / 2.0, stable_given);
    } else {
        const ParentWeights w = parent_weights(*params.pcp, s, tol / 4.0);
        const auto pmf = [&](std::int64_t k) { return pcp_term(w, k); };
        unstable = sum_unstable_mass(pmf, params.pcp->user_intensity() * s, tol / 4.0, stable_given);
    }
    return std::clamp(unstable, 0.0, 1.0);
}

}  // namespace sttraffic
