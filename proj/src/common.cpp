#include "qremkit/common.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace qremkit {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += kGolden);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
    std::uint64_t s = seed ^ (rotl(stream_id, 32) + kGolden);
    for (auto& w : state_) w = splitmix64(s);
}

RngStream RngStream::substream(std::uint64_t k) const {
    std::uint64_t s = stream_id_ ^ (k + 1) * kGolden;
    std::uint64_t mixed = splitmix64(s);
    return RngStream(seed_, mixed);
}

std::uint64_t RngStream::next_u64() {
    // xoshiro256++
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double a, double b) {
    if (!(a < b)) throw InvalidParameter("uniform: requires a < b");
    return a + (b - a) * next_double();
}

double RngStream::normal(double mean, double sd) {
    if (!(sd > 0.0) || !std::isfinite(sd)) throw InvalidParameter("normal: sd must be positive");
    if (have_spare_) {
        have_spare_ = false;
        return mean + sd * spare_;
    }
    // Box-Muller; u clamped away from 0 so log stays finite
    double u = next_double();
    if (u <= 0.0) u = 0x1.0p-53;
    const double v = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u));
    const double angle = 2.0 * M_PI * v;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return mean + sd * radius * std::cos(angle);
}

double RngStream::lognormal(double log_mean, double log_sd) {
    return std::exp(normal(log_mean, log_sd));
}

double RngStream::exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidParameter("exponential: rate must be positive");
    double u = next_double();
    if (u >= 1.0) u = 1.0 - 0x1.0p-53;
    return -std::log1p(-u) / rate;
}

double quantile_type7(std::vector<double> x, double p) {
    if (x.empty()) throw InvalidParameter("quantile: empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("quantile: p outside [0,1]");
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

double quantile_type1(std::vector<double> x, double p) {
    if (x.empty()) throw InvalidParameter("quantile: empty sample");
    if (!(p > 0.0 && p <= 1.0)) throw InvalidParameter("quantile: p outside (0,1]");
    std::sort(x.begin(), x.end());
    const double np = static_cast<double>(x.size()) * p;
    auto k = static_cast<std::size_t>(std::ceil(np));
    if (k < 1) k = 1;
    if (k > x.size()) k = x.size();
    return x[k - 1];
}

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z * M_SQRT1_2);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidParameter("normal_quantile: p outside (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double u = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    } else if (p <= 1.0 - plow) {
        const double u = p - 0.5;
        const double t = u * u;
        x = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * u /
            (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0);
    } else {
        const double u = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
    }
    // one Halley step against the exact CDF
    const double e = normal_cdf(x) - p;
    const double g = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    const double h = e / g;
    x -= h / (1.0 + 0.5 * x * h);
    return x;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    if (jobs == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace qremkit
