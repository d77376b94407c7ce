#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sttraffic/error.hpp"
#include "sttraffic/geometry.hpp"
#include "sttraffic/traffic.hpp"

namespace sttraffic {

enum class PopulationModel { ppp, pcp };

/// Scalar model parameters shared by the analytic and simulated paths.
///
/// `p_b` is carried for completeness only: transmit power appears in both the
/// numerator and the denominator of the SIR and cancels everywhere.
struct NetworkParameters {
    double lambda_b = 1e-5;  ///< BSs per m^2
    double lambda_u = 1e-4;  ///< users per m^2
    std::optional<PcpParams> pcp;
    double theta = 10.0;  ///< linear SIR threshold
    double alpha = 4.0;   ///< path-loss exponent, > 2
    double p_b = 1.0;     ///< watts
    double beta = 100.0;  ///< mean delay requirement, slots

    double delta() const { return 2.0 / alpha; }
    void validate() const;
    void validate_for(PopulationModel model) const;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double linear) { return 10.0 * std::log10(linear); }

namespace detail {

template <typename Scalar>
void require_link_params(Scalar theta, Scalar alpha) {
    require(std::isfinite(static_cast<double>(alpha)) && alpha > Scalar(2), "alpha must be finite and > 2");
    require(std::isfinite(static_cast<double>(theta)) && theta > Scalar(0), "theta must be finite and positive");
}

template <typename Scalar>
void require_load(Scalar n, Scalar xi0) {
    require(n >= Scalar(1), "user count must be at least 1");
    require(xi0 >= Scalar(0) && xi0 <= Scalar(1), "arrival rate must lie in [0, 1]");
}

}  // namespace detail

/// sin(pi d)/(pi d) at d = 2/alpha.
template <typename Scalar>
Scalar sinc_delta(Scalar alpha) {
    using std::sin;
    const Scalar x = Scalar(std::numbers::pi) * Scalar(2) / alpha;
    return sin(x) / x;
}

/// theta^(2/alpha).
template <typename Scalar>
Scalar theta_power(Scalar theta, Scalar alpha) {
    using std::pow;
    return pow(theta, Scalar(2) / alpha);
}

/// Arrival rate at which the busy-probability fixed point saturates at one,
/// for a cell of `n` users.
template <typename Scalar>
Scalar saturation_rate(Scalar n, Scalar theta, Scalar alpha) {
    detail::require_link_params(theta, alpha);
    const Scalar s = sinc_delta(alpha);
    return s / (n * (s + theta_power(theta, alpha)));
}

/// Success probability of the typical link when each interferer is active
/// independently with probability q.
template <typename Scalar>
Scalar success_probability(Scalar q, Scalar theta, Scalar alpha) {
    detail::require_link_params(theta, alpha);
    detail::require(q >= Scalar(0) && q <= Scalar(1), "busy probability must lie in [0, 1]");
    const Scalar s = sinc_delta(alpha);
    return s / (s + q * theta_power(theta, alpha));
}

/// The map whose fixed point is the busy probability: min(n xi0 / P_s(q), 1).
template <typename Scalar>
Scalar busy_probability_map(Scalar q, Scalar n, Scalar xi0, Scalar theta, Scalar alpha) {
    using std::min;
    const Scalar s = sinc_delta(alpha);
    return min(n * xi0 * (s + q * theta_power(theta, alpha)) / s, Scalar(1));
}

/// Closed-form busy probability of an interfering BS.
template <typename Scalar>
Scalar solve_busy_probability(Scalar n, Scalar xi0, Scalar theta, Scalar alpha) {
    detail::require_link_params(theta, alpha);
    detail::require_load(n, xi0);
    if (xi0 >= saturation_rate(n, theta, alpha)) return Scalar(1);
    const Scalar s = sinc_delta(alpha);
    return n * xi0 * s / (s - n * xi0 * theta_power(theta, alpha));
}

template <typename Scalar>
struct FixedPointResult {
    Scalar q{};
    std::uint64_t iterations = 0;
};

/// Iterates busy_probability_map from q = 0.
///
/// The map is affine below the cap with slope c = n xi0 theta^d / sinc(d), so
/// the error after a step of size dq is bounded by dq c / (1 - c). Iteration
/// stops once that bound falls below `tolerance` or the iterate hits the cap.
template <typename Scalar>
FixedPointResult<Scalar> iterate_busy_probability(Scalar n, Scalar xi0, Scalar theta, Scalar alpha,
                                                  Scalar tolerance = Scalar(1e-12),
                                                  std::uint64_t max_iterations = 100'000'000) {
    using std::abs;
    detail::require_link_params(theta, alpha);
    detail::require_load(n, xi0);
    const Scalar slope = n * xi0 * theta_power(theta, alpha) / sinc_delta(alpha);
    FixedPointResult<Scalar> out;
    Scalar q = Scalar(0);
    for (; out.iterations < max_iterations; ++out.iterations) {
        const Scalar next = busy_probability_map(q, n, xi0, theta, alpha);
        const Scalar step = abs(next - q);
        q = next;
        if (step == Scalar(0) || q >= Scalar(1)) break;
        if (slope < Scalar(1) && step * slope / (Scalar(1) - slope) < tolerance) break;
    }
    if (out.iterations == max_iterations) throw NumericError("busy-probability iteration did not converge");
    out.q = q;
    return out;
}

/// Success probability with the busy probability at its fixed point.
template <typename Scalar>
Scalar approx_success_probability(Scalar n, Scalar xi0, Scalar theta, Scalar alpha) {
    detail::require_link_params(theta, alpha);
    detail::require_load(n, xi0);
    const Scalar s = sinc_delta(alpha);
    const Scalar t = theta_power(theta, alpha);
    if (xi0 >= saturation_rate(n, theta, alpha)) return s / (s + t);
    return Scalar(1) - n * xi0 * t / s;
}

/// Achievable rate in bits/slot/Hz with the packet size normalised to log2(1+theta).
template <typename Scalar>
Scalar achievable_rate(Scalar n, Scalar xi0, Scalar theta, Scalar alpha) {
    using std::log2;
    return approx_success_probability(n, xi0, theta, alpha) * log2(Scalar(1) + theta);
}

/// Per-slot success probability of one user under uniform random scheduling
/// among `n` users.
template <typename Scalar>
Scalar service_rate(Scalar n, Scalar xi0, Scalar theta, Scalar alpha) {
    return approx_success_probability(n, xi0, theta, alpha) / n;
}

/// Mean delay in slots, or an explicit unstable marker.
template <typename Scalar>
class BasicDelayResult {
public:
    static BasicDelayResult finite(Scalar slots) { return BasicDelayResult(slots); }
    static BasicDelayResult unstable() { return BasicDelayResult(); }

    bool is_finite() const { return value_.has_value(); }
    bool is_unstable() const { return !value_.has_value(); }

    /// Throws NumericError when unstable.
    Scalar value() const {
        if (!value_) throw NumericError("mean delay is unbounded (unstable queue)");
        return *value_;
    }
    std::optional<Scalar> as_optional() const { return value_; }

private:
    BasicDelayResult() = default;
    explicit BasicDelayResult(Scalar v) : value_(v) {}
    std::optional<Scalar> value_;
};

using DelayResult = BasicDelayResult<double>;

/// Geo/Geo/1 sojourn time with head-of-line retransmission: (1 - xi0)/(mu - xi0).
template <typename Scalar>
BasicDelayResult<Scalar> geo_queue_delay(Scalar xi0, Scalar mu) {
    if (!(mu > xi0)) return BasicDelayResult<Scalar>::unstable();
    return BasicDelayResult<Scalar>::finite((Scalar(1) - xi0) / (mu - xi0));
}

template <typename Scalar>
struct BasicStabilityThresholds {
    Scalar b0{};  ///< single-user saturation rate; divide by n for an n-user cell
    Scalar a1{};  ///< user count below which the mean delay is finite
    Scalar a2{};  ///< user count below which the mean delay meets beta
};

using StabilityThresholds = BasicStabilityThresholds<double>;

template <typename Scalar>
BasicStabilityThresholds<Scalar> stability_thresholds(Scalar xi0, Scalar theta, Scalar alpha, Scalar beta) {
    detail::require_link_params(theta, alpha);
    detail::require(beta > Scalar(1), "delay requirement beta must exceed one slot");
    detail::require(xi0 > Scalar(0) && xi0 < Scalar(1), "arrival rate must lie in (0, 1)");
    const Scalar s = sinc_delta(alpha);
    const Scalar t = theta_power(theta, alpha);
    BasicStabilityThresholds<Scalar> out;
    out.b0 = s / (s + t);
    out.a1 = s / (xi0 * t + xi0 * s);
    out.a2 = s / ((Scalar(1) - xi0) * s / beta + xi0 * t + xi0 * s);
    return out;
}

/// Mean delay of a user in an n-user cell.
template <typename Scalar>
BasicDelayResult<Scalar> mean_delay(Scalar n, Scalar xi0, Scalar theta, Scalar alpha) {
    detail::require_link_params(theta, alpha);
    detail::require_load(n, xi0);
    const Scalar s = sinc_delta(alpha);
    const Scalar t = theta_power(theta, alpha);
    // finite iff n < sinc / (xi0 (sinc + theta^d)); written without dividing by xi0
    if (!(n * xi0 * (s + t) < s)) return BasicDelayResult<Scalar>::unstable();
    return BasicDelayResult<Scalar>::finite((Scalar(1) - xi0) * n * s / (s - n * xi0 * t - n * xi0 * s));
}

/// Poisson user count in a cell of area s.
template <typename Scalar>
Scalar pmf_users_ppp(std::int64_t k, Scalar lambda_u, Scalar s) {
    using std::exp;
    using std::lgamma;
    using std::log;
    detail::require(k >= 0, "pmf_users_ppp: k must be non-negative");
    detail::require(lambda_u >= Scalar(0), "pmf_users_ppp: lambda_u must be non-negative");
    detail::require(s > Scalar(0), "pmf_users_ppp: area must be positive");
    const Scalar mean = lambda_u * s;
    if (mean == Scalar(0)) return k == 0 ? Scalar(1) : Scalar(0);
    const Scalar kk = Scalar(k);
    return exp(-mean + kk * log(mean) - lgamma(kk + Scalar(1)));
}

/// User count in a cell of area s when whole clusters share their parent's BS.
double pmf_users_pcp(std::int64_t k, const PcpParams& pcp, double s, double tol = 1e-10);

/// pmf_users_pcp for k = 0 .. max_k in one pass.
std::vector<double> pmf_users_pcp_table(std::int64_t max_k, const PcpParams& pcp, double s, double tol = 1e-10);

/// Smallest parent count A with P(Poisson(mean) > A) < tol.
std::int64_t poisson_truncation_point(double mean, double tol);

struct ArrivalMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Mean and variance of the summed arrival rate of one typical cell.
ArrivalMoments total_arrival_moments(const ArrivalRateDistribution& dist, const NetworkParameters& params,
                                     PopulationModel model);

/// Probability that the typical queue is unstable in a cell of area s.
double unstable_probability(const ArrivalRateDistribution& dist, PopulationModel model,
                            const NetworkParameters& params, double s, double tol = 1e-10);

/// Second moment of the normalised cell area under the gamma approximation, 9/7.
inline constexpr double kCellAreaSecondMoment = 9.0 / 7.0;

}  // namespace sttraffic
