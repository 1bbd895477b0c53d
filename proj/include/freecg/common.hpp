#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace freecg {

// Error taxonomy. The CLI maps these onto its exit codes: ConfigError -> 2,
// IoError -> 3, everything else -> 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A violated call-site precondition (non-unit vector, non-scalar backward
// root, r outside (0, r_c], ...).
struct ContractViolation : Error {
    using Error::Error;
};

// Tensor shape disagreement; message names the op and both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Bad user-facing configuration (G does not divide C, unknown key, ...).
struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Deterministic RNG. mt19937_64 has a standard-mandated sequence; the
// distributions below are hand-rolled because the std::*_distribution
// algorithms are implementation-defined and we promise bit-identical
// datasets and parameter initialization for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t bits() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller, spare value cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    // uniform integer in [0, n)
    std::int64_t below(std::int64_t n) {
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i)
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(below(i + 1))]);
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Worker-thread cap: FREECG_THREADS if set, else hardware parallelism.
int effective_threads();

// Unit 3-vector drawn uniformly on the sphere.
inline std::array<double, 3> random_unit_vector(Rng& rng) {
    while (true) {
        const double x = rng.uniform(-1.0, 1.0);
        const double y = rng.uniform(-1.0, 1.0);
        const double z = rng.uniform(-1.0, 1.0);
        const double n2 = x * x + y * y + z * z;
        if (n2 > 1e-6 && n2 <= 1.0) {
            const double inv = 1.0 / std::sqrt(n2);
            return {x * inv, y * inv, z * inv};
        }
    }
}

}  // namespace freecg
