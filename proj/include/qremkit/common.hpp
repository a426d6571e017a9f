#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qremkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// -------------------------------------------------------------------------
// Error types
// -------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct InvalidParameter : Error { using Error::Error; };
struct DegenerateSample : Error { using Error::Error; };
struct DegenerateDensity : Error { using Error::Error; };
struct EmptySide : Error { using Error::Error; };
struct SparseLevel : Error { using Error::Error; };
struct InvalidStrategyParams : Error { using Error::Error; };
struct Saturated : Error { using Error::Error; };
struct TooFewSuccessfulReps : Error { using Error::Error; };
struct InvalidScenario : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct MissingValue : Error { using Error::Error; };
struct EmptyData : Error { using Error::Error; };

// -------------------------------------------------------------------------
// Seeded, splittable random stream (xoshiro256++ seeded via splitmix64)
// -------------------------------------------------------------------------

class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Independent child stream; deterministic in (seed, stream_id, k).
    RngStream substream(std::uint64_t k) const;

    std::uint64_t next_u64();

    /// Uniform on [0,1) with 53 random bits.
    double next_double();

    double uniform(double a, double b);
    double normal(double mean, double sd);
    double lognormal(double log_mean, double log_sd);
    double exponential(double rate);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// -------------------------------------------------------------------------
// Empirical quantiles
// -------------------------------------------------------------------------

/// Linear-interpolation (type-7) quantile of an unsorted sample.
double quantile_type7(std::vector<double> x, double p);

/// Inverse-ECDF (type-1) quantile: the check-loss minimizing order statistic
/// when n*p is not an integer.
double quantile_type1(std::vector<double> x, double p);

double normal_cdf(double z);

/// Inverse standard normal CDF (Acklam's rational approximation with one
/// Halley refinement; accurate to ~1e-15).
double normal_quantile(double p);

// -------------------------------------------------------------------------
// Small parallel map: runs fn(0..count-1) on up to `jobs` threads.
// Results must be written to pre-sized slots indexed by the job id.
// -------------------------------------------------------------------------

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace qremkit
