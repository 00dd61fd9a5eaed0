#pragma once

#include <cmath>
#include <cstdint>

namespace lsrf {

// splitmix64 finalizer; bijective on 64-bit words.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based splittable generator: the triple (seed, stream, counter) keys
// an independent draw sequence, so sampling is reproducible and
// order-independent — cell c of a mass grid or site j of a design can be
// drawn on any thread in any order and always gets the same values.
class counter_rng {
public:
    counter_rng(uint64_t seed, uint64_t stream, uint64_t counter)
        : state_(mix64(mix64(mix64(seed) ^ stream) ^ counter)), spare_valid_(false) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform on the open interval (0,1): (k + 1/2) / 2^53 for k in [0, 2^53).
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Standard normal via Box-Muller; the second variate of each pair is cached.
    double gaussian() {
        if (spare_valid_) {
            spare_valid_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        double rad = std::sqrt(-2.0 * std::log(u1));
        double ang = 6.283185307179586476925286766559 * u2;
        spare_ = rad * std::sin(ang);
        spare_valid_ = true;
        return rad * std::cos(ang);
    }

    // Poisson count by Knuth's product-of-uniforms method, split into chunks
    // so the accumulated product never underflows; cost O(lambda) uniforms.
    uint64_t poisson(double lambda) {
        uint64_t total = 0;
        while (lambda > 32.0) {
            total += poisson_small(32.0);
            lambda -= 32.0;
        }
        return total + poisson_small(lambda);
    }

private:
    uint64_t poisson_small(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        uint64_t k = 0;
        double prod = uniform01();
        while (prod > limit) {
            ++k;
            prod *= uniform01();
        }
        return k;
    }

    uint64_t state_;
    double spare_ = 0.0;
    bool spare_valid_;
};

} // namespace lsrf
