#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nnreg {

/// Seeded generator used for every random draw in the library.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the standard.
/// Uniform variates are built from the top 53 bits of one engine output, so
/// streams are identical across standard libraries (unlike
/// std::uniform_real_distribution, whose algorithm is unspecified).
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64/53bit-uniform";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on [lo, hi].
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace nnreg
