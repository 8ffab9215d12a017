#pragma once

#include <cstdint>
#include <random>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <span>
#include <string_view>

namespace msde {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/// Gaussian stream keyed by (master seed, stream index, substream).
///
/// The engine state is a pure function of the key, so stream i produces the same
/// draws whether it is consumed first, last, or on another thread. Normals come from
/// Boost's ziggurat sampler, which is several times faster than the polar method.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_index, std::uint64_t substream = 0)
        : master_seed_(master_seed), stream_index_(stream_index), substream_(substream) {
        std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                          static_cast<std::uint32_t>(stream_index), static_cast<std::uint32_t>(stream_index >> 32),
                          static_cast<std::uint32_t>(substream), static_cast<std::uint32_t>(substream >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t master_seed() const noexcept { return master_seed_; }
    std::uint64_t stream_index() const noexcept { return stream_index_; }
    std::uint64_t substream() const noexcept { return substream_; }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

    /// Fills `out` with independent N(0, std_dev^2) draws.
    void normals(std::span<double> out, double std_dev = 1.0) {
        for (double& v : out) v = std_dev * normal_(engine_);
    }

    boost::random::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_index_;
    std::uint64_t substream_;
    boost::random::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_{0.0, 1.0};
    boost::random::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// A family of per-path streams sharing one master seed.
class StreamFamily {
public:
    explicit StreamFamily(std::uint64_t master_seed) : master_seed_(master_seed) {}

    std::uint64_t master_seed() const noexcept { return master_seed_; }

    RngStream stream(std::uint64_t index, std::uint64_t substream = 0) const {
        return RngStream(master_seed_, index, substream);
    }

    /// Independent family for a labelled sub-experiment (an epsilon cell, a node grid, ...).
    StreamFamily derive(std::string_view label, std::uint64_t index = 0) const {
        std::uint64_t s = detail::splitmix64(master_seed_ ^ detail::fnv1a(label));
        return StreamFamily(detail::splitmix64(s + index));
    }

private:
    std::uint64_t master_seed_;
};

} // namespace msde
