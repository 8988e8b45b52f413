#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace droopgrid {

/// Seeded generator with a fully specified output sequence.
///
/// The engine is std::mt19937_64, whose sequence the C++ standard fixes. Uniform
/// doubles take the top 53 bits of one draw. Normal draws use the Box-Muller
/// cosine branch on two consecutive uniforms: u1 in (0, 1], u2 in [0, 1).
/// std::normal_distribution is avoided because its algorithm is not portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal(double mean, double stddev)
    {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
        return mean + stddev * z;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace droopgrid
