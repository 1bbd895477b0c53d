#pragma once

// Dataset ingestion and synthetic data generation.
//
// Text format (.xyz), one or more frames:
//   line 1: atom count
//   line 2: whitespace-separated key=value properties (energy=<float> for
//           labeled frames; unknown keys are ignored)
//   then one line per atom: symbol x y z [fx fy fz]
// Floats are written with 17 significant digits so a write/parse round
// trip is value-identical.

#include <cstdint>
#include <string>
#include <vector>

#include "freecg/frame.hpp"

namespace freecg {

std::vector<MoleculeFrame> parse_extxyz(const std::string& text);
std::string write_extxyz(const std::vector<MoleculeFrame>& frames);

std::vector<MoleculeFrame> load_xyz(const std::string& path);
void save_xyz(const std::string& path, const std::vector<MoleculeFrame>& frames);

// Pairwise Morse potential with parameters per unordered element pair;
// smooth labels with closed-form forces for desk-scale training sets.
struct MorseParams {
    double well_depth;    // kcal/mol
    double steepness;     // 1/A
    double equilibrium;   // A
};

class MorseOracle {
public:
    MorseParams pair_params(int z1, int z2) const;
    double energy(const MoleculeFrame& frame) const;
    std::vector<std::array<double, 3>> forces(const MoleculeFrame& frame) const;
    void label(MoleculeFrame& frame) const;
};

struct Dataset {
    std::vector<MoleculeFrame> frames;
    std::vector<int> split;  // 0 train, 1 val, 2 test; aligned with frames

    std::vector<std::size_t> indices_of(int which) const;
};

// Pure function of (seed, count): a seeded shuffle assigns floor(frac*n)
// validation and test frames, the remainder trains.
std::vector<int> assign_splits(std::size_t n, std::uint64_t seed, double val_frac = 0.1,
                               double test_frac = 0.1);

// Atoms placed by rejection sampling (minimum separation 0.8 A in a 6 A
// box, error after 1e4 attempts), species drawn from {H, C, O}, labels
// from the oracle. n_atoms in [2, 16].
Dataset generate_synthetic(int n_frames, int n_atoms, std::uint64_t seed,
                           const MorseOracle& oracle);

// unlabeled random frame for the verification suites
MoleculeFrame random_frame(Rng& rng, int n_atoms);

}  // namespace freecg
