#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mscs {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/**
 * Reproducible random stream keyed by (seed, stream_id).
 *
 * xoshiro256++ core with SplitMix64 state derivation; distinct key pairs get
 * unrelated initial states, so workers can each own a stream derived from a
 * single run seed and results stay independent of scheduling. Period 2^256-1.
 */
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) {
        std::uint64_t mix = seed;
        std::uint64_t h = detail::splitmix64(mix);
        mix = h ^ (0xA0761D6478BD642FULL + stream_id);
        detail::splitmix64(mix);
        mix ^= stream_id * 0xE7037ED1A0B428DBULL;
        for (auto& word : state_) word = detail::splitmix64(mix);
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result =
            detail::rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + uniform() * (b - a); }

    /// Standard normal via the Marsaglia polar method (spare value cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::uint64_t state_[4];
    bool has_spare_;
    double spare_;
};

/**
 * n i.i.d. rows from N(0, S) with S = (1-rho) I + rho 11', using the
 * closed-form square root a I + b 11' of the equicorrelation matrix.
 * Returned row-major, n x s. Requires rho in (-1/(s-1), 1).
 */
inline std::vector<double> sample_correlated_normal(RngStream& rng, int n, int s,
                                                    double rho) {
    if (n < 0 || s <= 0)
        throw std::invalid_argument("sample_correlated_normal: bad dimensions");
    const double lower = s > 1 ? -1.0 / (s - 1) : -1.0;
    if (!(rho < 1.0) || !(rho > lower))
        throw std::invalid_argument(
            "sample_correlated_normal: rho outside (-1/(s-1), 1), equicorrelation "
            "matrix not positive definite");

    const double a = std::sqrt(1.0 - rho);
    const double b = (std::sqrt(1.0 - rho + s * rho) - std::sqrt(1.0 - rho)) / s;

    std::vector<double> out(static_cast<std::size_t>(n) * s);
    std::vector<double> z(s);
    for (int i = 0; i < n; ++i) {
        double zsum = 0.0;
        for (int j = 0; j < s; ++j) {
            z[j] = rng.normal();
            zsum += z[j];
        }
        for (int j = 0; j < s; ++j)
            out[static_cast<std::size_t>(i) * s + j] = a * z[j] + b * zsum;
    }
    return out;
}

}  // namespace mscs
