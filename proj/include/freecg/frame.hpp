#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "freecg/common.hpp"

namespace freecg {

// One configuration: types, positions (Angstrom), optional labels
// (energy kcal/mol, forces kcal/mol/A) and per-atom masses (amu).
struct MoleculeFrame {
    std::vector<int> atomic_numbers;
    std::vector<std::array<double, 3>> positions;
    bool has_energy = false;
    double energy = 0.0;
    std::vector<std::array<double, 3>> forces;  // empty or size n()
    std::vector<double> masses;                 // empty or size n()

    int n() const { return static_cast<int>(atomic_numbers.size()); }
    bool has_forces() const { return !forces.empty(); }

    // N >= 1, atomic numbers in 1..118, finite coordinates
    void validate() const;
};

// Directed pairs within the cutoff, sorted by (center, neighbor).
// (i,j) is present iff (j,i) is; no self pairs; 0 < dist <= cutoff.
struct NeighborList {
    std::vector<std::int64_t> center;
    std::vector<std::int64_t> neighbor;
    std::vector<double> dist;
    std::vector<std::array<double, 3>> unit;  // (r_j - r_i)/dist
    double cutoff = 0.0;

    std::int64_t edges() const { return static_cast<std::int64_t>(center.size()); }
};

// O(N^2) scan; coincident atoms (dist < 1e-8 A) raise an Error naming the pair.
NeighborList build_neighbor_list(const MoleculeFrame& frame, double cutoff);

// element tables
int atomic_number(const std::string& symbol);  // throws Error on unknown symbol
const std::string& element_symbol(int z);
double standard_mass(int z);  // amu

// fills frame.masses from the standard table
void assign_standard_masses(MoleculeFrame& frame);

}  // namespace freecg
