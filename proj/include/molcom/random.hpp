#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (key, counter), so results do not depend on thread scheduling and any
// molecule's noise can be regenerated independently of the others.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace molcom::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
inline Counter philox4x32(Counter ctr, Key key)
{
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Key for an independent stream identified by (seed, domain, index).
inline Key derive_key(std::uint64_t seed, std::uint64_t domain, std::uint64_t index)
{
    const std::uint64_t k = splitmix64(splitmix64(splitmix64(seed) ^ domain) ^ index);
    return {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

/// Uniform on (0, 1) with 53 random bits; never returns 0 or 1.
inline double uniform53(std::uint32_t hi, std::uint32_t lo)
{
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Uniform on (0, 1) with 32 random bits.
inline double uniform32(std::uint32_t x) { return (static_cast<double>(x) + 0.5) * 0x1.0p-32; }

/// Four standard normals from one Philox block (Box-Muller on 32-bit
/// uniforms, so |z| < 6.7).
inline std::array<double, 4> normals4(const Counter& block)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double r0 = std::sqrt(-2.0 * std::log(uniform32(block[0])));
    const double r1 = std::sqrt(-2.0 * std::log(uniform32(block[2])));
    const double a0 = two_pi * uniform32(block[1]);
    const double a1 = two_pi * uniform32(block[3]);
    return {r0 * std::cos(a0), r0 * std::sin(a0), r1 * std::cos(a1), r1 * std::sin(a1)};
}

/// Sequential generator over one key: counter words 2 and 3 select the
/// stream, words 0 and 1 count blocks.
class Stream {
public:
    Stream(Key key, std::uint32_t stream_hi = 0, std::uint32_t stream_lo = 0)
        : key_(key), hi_(stream_hi), lo_(stream_lo)
    {
    }

    Stream(std::uint64_t seed, std::uint64_t domain, std::uint64_t index)
        : Stream(derive_key(seed, domain, index))
    {
    }

    std::uint32_t next_u32()
    {
        if (pos_ == 4) refill();
        return block_[pos_++];
    }

    /// Uniform on (0, 1).
    double uniform()
    {
        const std::uint32_t hi = next_u32();
        return uniform53(hi, next_u32());
    }

    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    /// Uniform integer in [0, n), n > 0, without modulo bias.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        for (;;) {
            const std::uint64_t v = (static_cast<std::uint64_t>(next_u32()) << 32) | next_u32();
            if (v < limit) return v % n;
        }
    }

private:
    void refill()
    {
        block_ = philox4x32({static_cast<std::uint32_t>(count_), static_cast<std::uint32_t>(count_ >> 32), hi_, lo_},
                            key_);
        ++count_;
        pos_ = 0;
    }

    Key key_;
    std::uint32_t hi_, lo_;
    std::uint64_t count_ = 0;
    Counter block_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace molcom::rng
