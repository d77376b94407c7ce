#include "sttraffic/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "csv_util.hpp"
#include "sttraffic/error.hpp"

namespace sttraffic {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

ArrivalRateDistribution ArrivalRateDistribution::deterministic(double value) {
    // Values above one are accepted for aggregate-rate studies; they clamp
    // when used as a Bernoulli parameter.
    detail::require(std::isfinite(value) && value >= 0.0, "deterministic rate must be finite and non-negative");
    return ArrivalRateDistribution(Deterministic{value});
}

ArrivalRateDistribution ArrivalRateDistribution::uniform(double upper) {
    detail::require(std::isfinite(upper) && upper > 0.0, "uniform upper bound must be positive");
    return ArrivalRateDistribution(Uniform{upper});
}

ArrivalRateDistribution ArrivalRateDistribution::exponential_mean(double mean) {
    detail::require(std::isfinite(mean) && mean > 0.0, "exponential mean must be positive");
    return ArrivalRateDistribution(Exponential{mean});
}

ArrivalRateDistribution ArrivalRateDistribution::parse(std::string_view text) {
    const auto parts = csv::split(text, ':');
    try {
        if (parts.size() == 2 && parts[0] == "det") return deterministic(csv::parse_double(parts[1], "det"));
        if (parts.size() == 3 && parts[0] == "unif") {
            const double lo = csv::parse_double(parts[1], "unif lower bound");
            if (lo != 0.0) throw ConfigError("unif: lower bound must be 0");
            return uniform(csv::parse_double(parts[2], "unif upper bound"));
        }
        if (parts.size() == 2 && parts[0] == "exp-mean") return exponential_mean(csv::parse_double(parts[1], "exp-mean"));
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("rate distribution '") + std::string(text) + "': " + e.what());
    }
    throw ConfigError("unrecognised rate distribution '" + std::string(text) +
                      "' (expected det:X, unif:0:B or exp-mean:M)");
}

std::string ArrivalRateDistribution::to_string() const {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return "det:" + csv::format_double(d.value); },
                          [](const Uniform& u) { return "unif:0:" + csv::format_double(u.upper); },
                          [](const Exponential& e) { return "exp-mean:" + csv::format_double(e.mean); },
                      },
                      law_);
}

double rate_cdf(const ArrivalRateDistribution& dist, double x) {
    return std::visit(overloaded{
                          [x](const Deterministic& d) { return x >= d.value ? 1.0 : 0.0; },
                          [x](const Uniform& u) { return std::clamp(x / u.upper, 0.0, 1.0); },
                          [x](const Exponential& e) { return x >= 0.0 ? -std::expm1(-x / e.mean) : 0.0; },
                      },
                      dist.law());
}

double rate_mean(const ArrivalRateDistribution& dist) {
    return std::visit(overloaded{
                          [](const Deterministic& d) { return d.value; },
                          [](const Uniform& u) { return 0.5 * u.upper; },
                          [](const Exponential& e) { return e.mean; },
                      },
                      dist.law());
}

RateDraw sample_rate(const ArrivalRateDistribution& dist, Engine& engine) {
    const double raw = std::visit(overloaded{
                                      [](const Deterministic& d) { return d.value; },
                                      [&engine](const Uniform& u) {
                                          return std::uniform_real_distribution<double>(0.0, u.upper)(engine);
                                      },
                                      [&engine](const Exponential& e) {
                                          return std::exponential_distribution<double>(e.rate())(engine);
                                      },
                                  },
                                  dist.law());
    RateDraw draw;
    draw.raw = raw;
    draw.rate = std::clamp(raw, 0.0, 1.0);
    draw.clamped = draw.rate != raw;
    return draw;
}

RateDraw sample_rate(const ArrivalRateDistribution& dist, std::uint64_t seed) {
    Engine engine = make_engine(seed);
    return sample_rate(dist, engine);
}

ArrivalStream make_arrival_stream(double rate, std::uint64_t seed) {
    detail::require(rate >= 0.0 && rate <= 1.0, "arrival stream rate must lie in [0, 1]");
    return ArrivalStream{rate, seed};
}

}  // namespace sttraffic
