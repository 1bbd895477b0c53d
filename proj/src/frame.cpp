#include "freecg/frame.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_map>

namespace freecg {

namespace {

const char* const kSymbols[119] = {
    "X",  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
    "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac",
    "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf",
    "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

// CIAAW-style standard atomic weights (conventional values where ranges
// apply; most-stable-isotope mass for the unstable elements)
const double kMasses[119] = {
    0.0,      1.008,    4.002602, 6.94,     9.0121831, 10.81,    12.011,   14.007,   15.999,
    18.998403, 20.1797, 22.989769, 24.305,  26.981538, 28.085,   30.973762, 32.06,   35.45,
    39.948,   39.0983,  40.078,   44.955908, 47.867,   50.9415,  51.9961,  54.938044, 55.845,
    58.933194, 58.6934, 63.546,   65.38,    69.723,    72.63,    74.921595, 78.971,  79.904,
    83.798,   85.4678,  87.62,    88.90584, 91.224,    92.90637, 95.95,    97.0,     101.07,
    102.9055, 106.42,   107.8682, 112.414,  114.818,   118.71,   121.76,   127.6,    126.90447,
    131.293,  132.90545, 137.327, 138.90547, 140.116,  140.90766, 144.242, 145.0,    150.36,
    151.964,  157.25,   158.92535, 162.5,   164.93033, 167.259,  168.93422, 173.045, 174.9668,
    178.49,   180.94788, 183.84,  186.207,  190.23,    192.217,  195.084,  196.96657, 200.592,
    204.38,   207.2,    208.9804, 209.0,    210.0,     222.0,    223.0,    226.0,    227.0,
    232.0377, 231.03588, 238.02891, 237.0,  244.0,     243.0,    247.0,    247.0,    251.0,
    252.0,    257.0,    258.0,    259.0,    262.0,     267.0,    268.0,    271.0,    272.0,
    270.0,    276.0,    281.0,    280.0,    285.0,     284.0,    289.0,    288.0,    293.0,
    294.0,    294.0};

}  // namespace

void MoleculeFrame::validate() const {
    if (atomic_numbers.empty()) throw ContractViolation("frame has no atoms");
    if (positions.size() != atomic_numbers.size())
        throw ContractViolation("frame: positions do not match atom count");
    for (int z : atomic_numbers)
        if (z < 1 || z > 118)
            throw ContractViolation("frame: atomic number " + std::to_string(z) +
                                    " outside 1..118");
    for (const auto& p : positions)
        for (double c : p)
            if (!std::isfinite(c)) throw ContractViolation("frame: non-finite coordinate");
    if (!forces.empty() && forces.size() != atomic_numbers.size())
        throw ContractViolation("frame: forces do not match atom count");
    if (!masses.empty() && masses.size() != atomic_numbers.size())
        throw ContractViolation("frame: masses do not match atom count");
}

NeighborList build_neighbor_list(const MoleculeFrame& frame, double cutoff) {
    if (cutoff <= 0.0) throw ContractViolation("neighbor list: cutoff must be positive");
    frame.validate();
    NeighborList nl;
    nl.cutoff = cutoff;
    const int n = frame.n();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const auto& a = frame.positions[static_cast<std::size_t>(i)];
            const auto& b = frame.positions[static_cast<std::size_t>(j)];
            const double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
            const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
            if (d < 1e-8) {
                char buf[96];
                std::snprintf(buf, sizeof(buf), "coincident atoms %d and %d (distance %.3g A)",
                              i, j, d);
                throw Error(buf);
            }
            if (d > cutoff) continue;
            nl.center.push_back(i);
            nl.neighbor.push_back(j);
            nl.dist.push_back(d);
            nl.unit.push_back({dx / d, dy / d, dz / d});
        }
    return nl;
}

int atomic_number(const std::string& symbol) {
    static const std::unordered_map<std::string, int> map = [] {
        std::unordered_map<std::string, int> m;
        for (int z = 1; z <= 118; ++z) m[kSymbols[z]] = z;
        return m;
    }();
    const auto it = map.find(symbol);
    if (it == map.end()) throw Error("unknown element symbol '" + symbol + "'");
    return it->second;
}

const std::string& element_symbol(int z) {
    static const std::vector<std::string> symbols = [] {
        std::vector<std::string> s;
        for (int i = 0; i <= 118; ++i) s.emplace_back(kSymbols[i]);
        return s;
    }();
    if (z < 1 || z > 118) throw Error("atomic number " + std::to_string(z) + " outside 1..118");
    return symbols[static_cast<std::size_t>(z)];
}

double standard_mass(int z) {
    if (z < 1 || z > 118) throw Error("atomic number " + std::to_string(z) + " outside 1..118");
    return kMasses[z];
}

void assign_standard_masses(MoleculeFrame& frame) {
    frame.masses.clear();
    frame.masses.reserve(frame.atomic_numbers.size());
    for (int z : frame.atomic_numbers) frame.masses.push_back(standard_mass(z));
}

}  // namespace freecg
