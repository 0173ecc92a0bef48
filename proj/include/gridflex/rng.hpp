#pragma once

#include <cstdint>
#include <random>

namespace gridflex {

// mt19937_64 with hand-rolled draw helpers. The standard pins down the
// engine output exactly but not the distributions, so uniform() derives
// doubles from raw 64-bit draws to keep generated artifacts bit-identical
// for a fixed seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t index(std::uint64_t n) {
        // modulo bias is irrelevant for the small n used here
        return engine_() % n;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace gridflex
