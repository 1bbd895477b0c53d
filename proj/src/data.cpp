#include "freecg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace freecg {

namespace {

struct LineReader {
    const std::string& text;
    std::size_t pos = 0;
    int line_no = 0;

    bool next(std::string& out) {
        if (pos >= text.size()) return false;
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            out = text.substr(pos);
            pos = text.size();
        } else {
            out = text.substr(pos, nl - pos);
            pos = nl + 1;
        }
        if (!out.empty() && out.back() == '\r') out.pop_back();
        ++line_no;
        return true;
    }
};

[[noreturn]] void parse_fail(int line, const std::string& what) {
    throw Error("xyz parse error at line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& tok, int line) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        parse_fail(line, "malformed float '" + tok + "'");
    return v;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

void append_g17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

std::vector<MoleculeFrame> parse_extxyz(const std::string& text) {
    std::vector<MoleculeFrame> frames;
    LineReader rd{text};
    std::string line;
    while (rd.next(line)) {
        if (split_ws(line).empty()) continue;  // tolerate blank separator lines
        const int count_line = rd.line_no;
        const auto head = split_ws(line);
        if (head.size() != 1) parse_fail(count_line, "expected a bare atom count");
        int n = 0;
        const auto res = std::from_chars(head[0].data(), head[0].data() + head[0].size(), n);
        if (res.ec != std::errc() || n < 1)
            parse_fail(count_line, "bad atom count '" + head[0] + "'");

        if (!rd.next(line)) parse_fail(rd.line_no + 1, "missing properties line");
        MoleculeFrame frame;
        for (const std::string& kv : split_ws(line)) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos)
                parse_fail(rd.line_no, "expected key=value, got '" + kv + "'");
            const std::string key = kv.substr(0, eq);
            if (key == "energy") {
                frame.energy = parse_double(kv.substr(eq + 1), rd.line_no);
                frame.has_energy = true;
            }
        }

        bool any_forces = false;
        for (int i = 0; i < n; ++i) {
            if (!rd.next(line))
                parse_fail(rd.line_no + 1, "frame truncated: expected " + std::to_string(n) +
                                               " atom lines, got " + std::to_string(i));
            const auto toks = split_ws(line);
            if (toks.size() != 4 && toks.size() != 7)
                parse_fail(rd.line_no, "expected 'symbol x y z [fx fy fz]'");
            int z = 0;
            try {
                z = atomic_number(toks[0]);
            } catch (const Error& e) {
                parse_fail(rd.line_no, e.what());
            }
            frame.atomic_numbers.push_back(z);
            frame.positions.push_back({parse_double(toks[1], rd.line_no),
                                       parse_double(toks[2], rd.line_no),
                                       parse_double(toks[3], rd.line_no)});
            if (toks.size() == 7) {
                any_forces = true;
                frame.forces.push_back({parse_double(toks[4], rd.line_no),
                                        parse_double(toks[5], rd.line_no),
                                        parse_double(toks[6], rd.line_no)});
            } else if (any_forces) {
                parse_fail(rd.line_no, "mixed atom lines with and without forces");
            }
        }
        frame.validate();
        frames.push_back(std::move(frame));
    }
    return frames;
}

std::string write_extxyz(const std::vector<MoleculeFrame>& frames) {
    std::string out;
    for (const MoleculeFrame& f : frames) {
        out += std::to_string(f.n());
        out += '\n';
        if (f.has_energy) {
            out += "energy=";
            append_g17(out, f.energy);
        } else {
            out += "unlabeled=1";
        }
        out += '\n';
        for (int i = 0; i < f.n(); ++i) {
            out += element_symbol(f.atomic_numbers[static_cast<std::size_t>(i)]);
            for (int c = 0; c < 3; ++c) {
                out += ' ';
                append_g17(out, f.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
            }
            if (f.has_forces())
                for (int c = 0; c < 3; ++c) {
                    out += ' ';
                    append_g17(out,
                               f.forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
                }
            out += '\n';
        }
    }
    return out;
}

std::vector<MoleculeFrame> load_xyz(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_extxyz(ss.str());
}

void save_xyz(const std::string& path, const std::vector<MoleculeFrame>& frames) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << write_extxyz(frames);
    if (!out) throw IoError("write to '" + path + "' failed");
}

// --- synthetic oracle ----------------------------------------------------------

MorseParams MorseOracle::pair_params(int z1, int z2) const {
    const int lo = std::min(z1, z2), hi = std::max(z1, z2);
    // deterministic spread of plausible desk-scale constants per pair
    MorseParams p;
    p.well_depth = 30.0 + 5.0 * ((lo + hi) % 7);
    p.steepness = 1.2 + 0.1 * ((lo * hi) % 5);
    p.equilibrium = 0.9 + 0.1 * ((lo + 2 * hi) % 6);
    return p;
}

double MorseOracle::energy(const MoleculeFrame& frame) const {
    double e = 0.0;
    for (int i = 0; i < frame.n(); ++i)
        for (int j = i + 1; j < frame.n(); ++j) {
            const auto& a = frame.positions[static_cast<std::size_t>(i)];
            const auto& b = frame.positions[static_cast<std::size_t>(j)];
            const double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
            const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
            const MorseParams p = pair_params(frame.atomic_numbers[static_cast<std::size_t>(i)],
                                              frame.atomic_numbers[static_cast<std::size_t>(j)]);
            const double q = 1.0 - std::exp(-p.steepness * (r - p.equilibrium));
            e += p.well_depth * (q * q - 1.0);
        }
    return e;
}

std::vector<std::array<double, 3>> MorseOracle::forces(const MoleculeFrame& frame) const {
    std::vector<std::array<double, 3>> f(static_cast<std::size_t>(frame.n()),
                                         {0.0, 0.0, 0.0});
    for (int i = 0; i < frame.n(); ++i)
        for (int j = i + 1; j < frame.n(); ++j) {
            const auto& a = frame.positions[static_cast<std::size_t>(i)];
            const auto& b = frame.positions[static_cast<std::size_t>(j)];
            const double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
            const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
            const MorseParams p = pair_params(frame.atomic_numbers[static_cast<std::size_t>(i)],
                                              frame.atomic_numbers[static_cast<std::size_t>(j)]);
            const double ex = std::exp(-p.steepness * (r - p.equilibrium));
            // dV/dr, V = De((1-e^-s(r-r0))^2 - 1)
            const double dv = 2.0 * p.well_depth * p.steepness * ex * (1.0 - ex);
            const double gx = dv * dx / r, gy = dv * dy / r, gz = dv * dz / r;
            // force on j is -dV/dr_j
            f[static_cast<std::size_t>(j)][0] -= gx;
            f[static_cast<std::size_t>(j)][1] -= gy;
            f[static_cast<std::size_t>(j)][2] -= gz;
            f[static_cast<std::size_t>(i)][0] += gx;
            f[static_cast<std::size_t>(i)][1] += gy;
            f[static_cast<std::size_t>(i)][2] += gz;
        }
    return f;
}

void MorseOracle::label(MoleculeFrame& frame) const {
    frame.energy = energy(frame);
    frame.has_energy = true;
    frame.forces = forces(frame);
}

// --- splits and generation -------------------------------------------------------

std::vector<std::size_t> Dataset::indices_of(int which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == which) out.push_back(i);
    return out;
}

std::vector<int> assign_splits(std::size_t n, std::uint64_t seed, double val_frac,
                               double test_frac) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t n_val = static_cast<std::size_t>(val_frac * static_cast<double>(n));
    const std::size_t n_test = static_cast<std::size_t>(test_frac * static_cast<double>(n));
    std::vector<int> split(n, 0);
    for (std::size_t k = 0; k < n_val; ++k) split[order[k]] = 1;
    for (std::size_t k = n_val; k < n_val + n_test; ++k) split[order[k]] = 2;
    return split;
}

namespace {

MoleculeFrame place_atoms(Rng& rng, int n_atoms, const std::vector<int>& species) {
    const double box = 6.0, min_sep = 0.8;
    MoleculeFrame frame;
    for (int i = 0; i < n_atoms; ++i)
        frame.atomic_numbers.push_back(species[static_cast<std::size_t>(rng.below(
            static_cast<std::int64_t>(species.size())))]);
    int attempts = 0;
    while (static_cast<int>(frame.positions.size()) < n_atoms) {
        if (++attempts > 10000)
            throw Error("atom placement failed after 10000 attempts");
        const std::array<double, 3> cand{rng.uniform(0.0, box), rng.uniform(0.0, box),
                                         rng.uniform(0.0, box)};
        bool ok = true;
        for (const auto& p : frame.positions) {
            const double dx = cand[0] - p[0], dy = cand[1] - p[1], dz = cand[2] - p[2];
            if (dx * dx + dy * dy + dz * dz < min_sep * min_sep) {
                ok = false;
                break;
            }
        }
        if (ok) frame.positions.push_back(cand);
    }
    return frame;
}

}  // namespace

Dataset generate_synthetic(int n_frames, int n_atoms, std::uint64_t seed,
                           const MorseOracle& oracle) {
    if (n_atoms < 2 || n_atoms > 16)
        throw ContractViolation("generate_synthetic: n_atoms must be in [2, 16]");
    Rng rng(seed);
    const std::vector<int> species{1, 6, 8};
    Dataset ds;
    for (int k = 0; k < n_frames; ++k) {
        MoleculeFrame frame = place_atoms(rng, n_atoms, species);
        oracle.label(frame);
        ds.frames.push_back(std::move(frame));
    }
    ds.split = assign_splits(static_cast<std::size_t>(n_frames), seed);
    return ds;
}

MoleculeFrame random_frame(Rng& rng, int n_atoms) {
    const std::vector<int> species{1, 6, 8};
    return place_atoms(rng, n_atoms, species);
}

}  // namespace freecg
