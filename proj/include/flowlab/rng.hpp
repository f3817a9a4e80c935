#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace flowlab {

/// Seedable, splittable pseudo-random generator.
///
/// A generator is identified by (seed, stream). `split(k)` derives an
/// independent child stream deterministically, so work can be partitioned
/// into fixed chunks whose output does not depend on thread scheduling.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    Rng split(std::uint64_t child) const;

    double uniform();                 // [0, 1)
    double uniform(double lo, double hi);
    double normal();                  // N(0, 1)
    std::size_t categorical(std::span<const double> weights);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace flowlab
