#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace bsee::rng {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so parallel consumers produce identical
// numbers regardless of scheduling.

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t counter) {
    std::uint64_t h = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    h = splitmix64(h ^ stream);
    return splitmix64(h ^ (counter * 0x9e3779b97f4a7c15ULL));
}

// uniform in (0,1), never exactly 0 or 1
inline double uniform01(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

struct GaussianPair {
    double first;
    double second;
};

inline GaussianPair gaussian_pair(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t counter) {
    const double u1 = uniform01(mix(seed, stream, 2 * counter));
    const double u2 = uniform01(mix(seed, stream, 2 * counter + 1));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

inline double gaussian(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t counter) {
    return gaussian_pair(seed, stream, counter).first;
}

// Sequential helper over a fixed (seed, stream).
class GaussianStream {
public:
    GaussianStream(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const auto pair = gaussian_pair(seed_, stream_, counter_++);
        spare_ = pair.second;
        have_spare_ = true;
        return pair.first;
    }

    double uniform() {
        return uniform01(mix(seed_, stream_ ^ 0x5bf03635ULL, ucounter_++));
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::uint64_t ucounter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace bsee::rng
