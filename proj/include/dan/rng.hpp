#pragma once

// xoshiro256** seeded through splitmix64. The algorithm is part of the on-disk
// reproducibility contract: changing it requires bumping kRngFormatVersion.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "dan/numeric.hpp"

namespace dan {

inline constexpr std::uint16_t kRngFormatVersion = 1;

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& s : s_) s = splitmix64(sm);
    }

    /// Generator with an explicit xoshiro256** state (must not be all zero).
    static Rng from_state(const std::array<std::uint64_t, 4>& state) {
        if (state[0] == 0 && state[1] == 0 && state[2] == 0 && state[3] == 0) {
            throw ParameterError("Rng::from_state: all-zero state");
        }
        Rng r(0);
        for (std::size_t i = 0; i < 4; ++i) r.s_[i] = state[i];
        return r;
    }

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent stream keyed by (seed, salt); does not advance *this.
    Rng derive(std::uint64_t salt) const noexcept {
        std::uint64_t sm = seed_ ^ (salt * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
        return Rng(splitmix64(sm));
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    __extension__ using u128 = unsigned __int128;

    /// Uniform integer in [0, n), unbiased (Lemire's multiply-and-reject).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ParameterError("Rng::below: empty range");
        u128 m = static_cast<u128>(next()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<u128>(next()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Standard normal via Box-Muller; one uniform pair per draw, no cached state.
    double gaussian() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::uint64_t s_[4];
};

inline std::vector<double> rng_gaussian(Rng& rng, std::size_t n, double mean, double std_dev) {
    if (!(std_dev >= 0.0)) throw ParameterError("rng_gaussian: standard deviation must be >= 0");
    std::vector<double> out(n);
    for (auto& v : out) v = mean + std_dev * rng.gaussian();
    return out;
}

}  // namespace dan
