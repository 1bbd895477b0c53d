#pragma once

// O(3) irreps algebra over the fixed feature layout (l=1,p=-1) + (l=2,p=+1).
//
// Real-basis conventions (all blocks have unit L2 norm on the unit sphere):
//   l=1 block:  (x, y, z)                       -- the unit vector itself
//   l=2 block:  (s3*x*y, s3*y*z, (3z^2-1)/2, s3*x*z, s3/2*(x^2-y^2)),
//               s3 = sqrt(3)
//
// Clebsch-Gordan coefficients are generated numerically at startup:
// parity-allowed couplings (l1+l2+lo even) by spherical-quadrature
// projection of harmonic triple products, parity-violating couplings
// (needed only by the rotation-only full path set) from the closed-form
// pseudo-tensor realizations (cross product and symmetric-matrix
// commutators). Each coefficient block is scaled so its rows are
// orthonormal and signed so the lexicographically first entry is positive.

#include <array>
#include <cstdint>
#include <vector>

#include "freecg/common.hpp"

namespace freecg {

struct IrrepSpec {
    int degree;  // l >= 0
    int parity;  // +1 or -1

    int components() const { return 2 * degree + 1; }
};

// The model's fixed layout: 3 + 5 = 8 components.
inline constexpr int kLayoutComponents = 8;
inline constexpr std::array<IrrepSpec, 2> kLayout{IrrepSpec{1, -1}, IrrepSpec{2, +1}};

// offset of a degree block inside the 8-component layout
inline int layout_offset(int degree) { return degree == 1 ? 0 : 3; }

inline int natural_parity(int degree) { return degree % 2 == 0 ? +1 : -1; }

// Y^1(u), u unit within 1e-9. Throws ContractViolation otherwise.
std::array<double, 3> sh_l1(const std::array<double, 3>& u);

// Y^2(u), unit-norm convention above.
std::array<double, 5> sh_l2(const std::array<double, 3>& u);

// Y^1(u) ++ Y^2(u) in the fixed layout.
std::array<double, kLayoutComponents> spherical_harmonics(const std::array<double, 3>& u);

// degree-l block (l in {0,1,2}); l=0 is the constant 1.
std::vector<double> sh_block(int degree, const std::array<double, 3>& u);

struct CgEntry {
    int mo, m1, m2;
    double c;
};

// One (l1,l2)->lo coupling: the nonzero coefficients plus the add/mult
// bookkeeping the benchmarks use (mults = one per coefficient application,
// adds = accumulations onto an already-written output slot).
struct CgCoupling {
    int l1, l2, lo;
    bool parity_allowed;  // (-1)^(l1+l2) == (-1)^lo
    std::vector<CgEntry> entries;
    std::int64_t mult_per_pair = 0;  // == entries.size()
    std::int64_t add_per_pair = 0;   // == sum_mo max(0, nnz(mo)-1)
};

struct CgPath {
    int l1, p1, l2, p2, lo, po;
};

enum class PathMode { O3_sparse, SO3_full };

class CgTable {
public:
    // All nonzero couplings for l1,l2,lo in {0,1,2}.
    const std::vector<CgCoupling>& couplings() const { return couplings_; }

    const CgCoupling& coupling(int l1, int l2, int lo) const;
    bool has_coupling(int l1, int l2, int lo) const;

    // Admissible paths over the fixed (1,-1)+(2,+1) layout.
    // O3_sparse enforces po = p1*p2 (4 paths); SO3_full keeps every
    // triangle-rule combination (8 paths).
    std::vector<CgPath> enumerate_paths(PathMode mode) const;

private:
    friend const CgTable& cg_table();
    std::vector<CgCoupling> couplings_;
};

// Built once on first use, immutable afterwards; safe for concurrent reads.
const CgTable& cg_table();

struct WignerD {
    int degree;
    // (2l+1)x(2l+1) row-major orthogonal matrix with
    // Y^l(R u) = D * Y^l(u) for all unit u.
    std::vector<double> matrix;

    double at(int r, int c) const {
        const int n = 2 * degree + 1;
        return matrix[static_cast<std::size_t>(r * n + c)];
    }
};

// Build D^l for a proper rotation (R^T R = I within 1e-10, det R = +1) by
// least squares over random sample directions; retries with fresh samples
// if the system is ill-conditioned and verifies the residual below 1e-10.
WignerD wigner_d(int degree, const std::array<std::array<double, 3>, 3>& rot, Rng& rng);

// Uniformly random rotation matrix (for tests and verification suites).
std::array<std::array<double, 3>, 3> random_rotation(Rng& rng);

// Apply a blockwise O(3) transform to an 8-component layout value:
// rotation via Wigner-D per degree, optional reflection through the origin
// (sign flip on odd-degree blocks).
std::array<double, kLayoutComponents> transform_layout(
    const std::array<double, kLayoutComponents>& v,
    const WignerD& d1, const WignerD& d2, bool reflect);

}  // namespace freecg
