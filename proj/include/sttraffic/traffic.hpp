#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "sttraffic/random.hpp"

namespace sttraffic {

/// Every user carries the same per-slot arrival probability.
struct Deterministic {
    double value = 0.0;
};

/// Arrival rate uniform on (0, upper).
struct Uniform {
    double upper = 1.0;
};

/// Arrival rate exponential with the given mean. The law is unbounded; draws
/// above one are clamped when used as a Bernoulli parameter.
struct Exponential {
    double mean = 1.0;
    double rate() const { return 1.0 / mean; }
};

/// Law of the per-user arrival rate.
class ArrivalRateDistribution {
public:
    using Law = std::variant<Deterministic, Uniform, Exponential>;

    static ArrivalRateDistribution deterministic(double value);
    static ArrivalRateDistribution uniform(double upper);
    static ArrivalRateDistribution exponential_mean(double mean);

    /// Parses `det:0.3`, `unif:0:0.02` or `exp-mean:0.01`.
    static ArrivalRateDistribution parse(std::string_view text);

    const Law& law() const { return law_; }
    std::string to_string() const;

private:
    explicit ArrivalRateDistribution(Law law) : law_(law) {}
    Law law_;
};

double rate_cdf(const ArrivalRateDistribution& dist, double x);
double rate_mean(const ArrivalRateDistribution& dist);

struct RateDraw {
    double raw = 0.0;   ///< the unclamped draw
    double rate = 0.0;  ///< raw clamped into [0, 1]
    bool clamped = false;
};

RateDraw sample_rate(const ArrivalRateDistribution& dist, Engine& engine);
RateDraw sample_rate(const ArrivalRateDistribution& dist, std::uint64_t seed);

/// Bernoulli arrival process addressed by slot index.
struct ArrivalStream {
    double rate = 0.0;
    std::uint64_t seed = 0;
};

/// True when a packet arrives in `slot`. Pure in (stream.seed, slot).
inline bool next_arrival(const ArrivalStream& stream, std::uint64_t slot) {
    return counter_uniform(stream.seed, slot) < stream.rate;
}

ArrivalStream make_arrival_stream(double rate, std::uint64_t seed);

}  // namespace sttraffic
