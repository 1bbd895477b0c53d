#pragma once

// Verification primitives and property suites. The oracles here are kept
// independent of the implementation paths they check:
//   - the CG table is built from Gauss-Legendre quadrature; the oracle
//     integrates with a 26-point Lebedev-style rule (exact to degree 7)
//   - forces are checked against central finite differences of the energy
//   - the grouped CG kernel is checked against the serial reference loop

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "freecg/common.hpp"
#include "freecg/irreps.hpp"

namespace freecg {

struct ModelConfig;

// 26-point octahedral rule, weights normalized to sum 1.
struct LebedevRule {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;
};
const LebedevRule& lebedev_rule();

// mean over the sphere of Y^{lo}_{mo} Y^{l1}_{m1} Y^{l2}_{m2}
double lebedev_triple_product(int lo, int mo, int l1, int m1, int l2, int m2);

// Largest relative deviation between the stored coefficients of one coupling
// and the Lebedev projection, after fitting the single free scale.
// Only meaningful for parity-allowed couplings (the projection of a
// parity-violating coupling vanishes identically).
double quadrature_match_error(const CgCoupling& coupling);

// max over 50 fresh directions of | Y^l(R u) - D Y^l(u) |
double wigner_residual(const WignerD& d, const std::array<std::array<double, 3>, 3>& rot,
                       Rng& rng);

// --- property suites (used by the check CLI and the acceptance runner) -------

struct SuiteResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

SuiteResult check_cg_oracle(std::uint64_t seed);
SuiteResult check_equivariance(std::uint64_t seed);
SuiteResult check_permutation(std::uint64_t seed);
SuiteResult check_gradient(std::uint64_t seed);

// names: subset of {"cg-oracle","equivariance","permutation","gradient"} or "all"
std::vector<SuiteResult> run_check_suites(const std::vector<std::string>& names,
                                          std::uint64_t seed);

}  // namespace freecg
