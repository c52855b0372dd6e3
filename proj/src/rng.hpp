#pragma once

#include <cstdint>
#include <initializer_list>

namespace delaylab {

/// SplitMix64 step. Used for seeding and for stable seed derivation.
std::uint64_t splitmix64(std::uint64_t &state);

/// Stable child seed from a master seed and a path of indices, e.g.
/// (master, condition, run). Independent of platform and call order.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// xoshiro256** stream with Box-Muller normals.
///
/// The algorithm is fixed so that other implementations (the browser task
/// runner) can reproduce a channel from its seed:
///   - state: four SplitMix64 outputs from `seed`
///   - uniform(): (next() >> 11) * 2^-53, in [0, 1)
///   - normal(): sqrt(-2 ln(1 - u1)) * cos(2 pi u2), two uniforms per call,
///     no caching of the paired value.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    double uniform();
    double normal();
    double normal(double mean, double variance);

  private:
    std::uint64_t s_[4];
};

} // namespace delaylab
