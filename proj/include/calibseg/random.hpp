#pragma once

// Portable random stream.
//
// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
// C++ standard. The standard distributions are not portable across library
// implementations, so the transforms below are written out:
//   uniform()  = (bits >> 11) * 2^-53              in [0, 1)
//   normal()   = Box-Muller on (1 - uniform(), uniform()), cosine branch only
//   index(n)   = floor(uniform() * n)

#include <cstddef>
#include <cstdint>
#include <random>

namespace calibseg {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal();

    std::size_t index(std::size_t n) {
        const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

}  // namespace calibseg
