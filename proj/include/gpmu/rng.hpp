#pragma once

#include <cstdint>
#include <random>

namespace gpmu {

/// splitmix64 finalizer, used to decorrelate derived stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seeded, splittable random stream (mt19937_64 under the hood).
///
/// Every consumer of randomness takes one of these; there is no global
/// generator and no default seed. split(i) derives an independent child
/// stream, so per-stage / per-sample streams are reproducible regardless
/// of evaluation order.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

    SplitRng split(std::uint64_t stream) const {
        return SplitRng(mix64(seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

    std::uint64_t seed() const { return seed_; }

    double normal() { return normal_(engine_); }
    /// Uniform on [0, 1).
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace gpmu
