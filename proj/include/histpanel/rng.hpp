#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace hp {

/**
 * @brief Reproducible random source.
 *
 * The engine never uses the standard distribution classes, whose output is
 * implementation-defined. Every draw is derived from the raw 64-bit output of
 * std::mt19937_64 (whose sequence is fixed by the C++ standard):
 *
 * - uniform():  (x >> 11) * 2^-53, a double in [0, 1)
 * - normal():   Box-Muller, z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2); two
 *               uniforms consumed per draw, nothing cached
 * - below(n):   rejection sampling on x mod n with the standard threshold
 *
 * Sub-streams for bootstrap replicates, placebos and simulation seeds are
 * keyed by `derive_seed(base, index)` (splitmix64 mixing) so results do not
 * depend on how work is scheduled across threads.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    std::size_t below(std::size_t n);

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Runs fn(i) for i in [0, n) over at most `threads` workers. fn must only
/// touch state owned by index i.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace hp
