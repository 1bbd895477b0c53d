#include <algorithm>
#include <cmath>
#include <cstdio>

#include "freecg/data.hpp"
#include "freecg/model.hpp"
#include "freecg/verify.hpp"

namespace freecg {

namespace {

Model seeded_model(std::uint64_t seed) {
    ModelConfig cfg;  // desk-scale defaults
    Model model(cfg);
    model.init_params(seed);
    return model;
}

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), pattern, a, b);
    return buf;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

MoleculeFrame transform_frame(const MoleculeFrame& in, const Mat3& rot, bool reflect,
                              const std::array<double, 3>& shift) {
    MoleculeFrame out = in;
    const double s = reflect ? -1.0 : 1.0;
    for (auto& p : out.positions) {
        const std::array<double, 3> r{
            s * (rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2]) + shift[0],
            s * (rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2]) + shift[1],
            s * (rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2]) + shift[2]};
        p = r;
    }
    return out;
}

}  // namespace

SuiteResult check_cg_oracle(std::uint64_t seed) {
    SuiteResult res{"cg-oracle", true, ""};
    Rng rng(seed);
    const CgTable& table = cg_table();

    double max_quad = 0.0;
    for (const CgCoupling& c : table.couplings())
        if (c.parity_allowed) max_quad = std::max(max_quad, quadrature_match_error(c));
    if (max_quad >= 1e-8) res.pass = false;

    // orthogonality of coefficient rows across lo for fixed (l1, l2)
    double max_orth = 0.0;
    for (const CgCoupling& ca : table.couplings())
        for (const CgCoupling& cb : table.couplings()) {
            if (ca.l1 != cb.l1 || ca.l2 != cb.l2) continue;
            for (int moa = 0; moa < 2 * ca.lo + 1; ++moa)
                for (int mob = 0; mob < 2 * cb.lo + 1; ++mob) {
                    double acc = 0.0;
                    for (const CgEntry& ea : ca.entries) {
                        if (ea.mo != moa) continue;
                        for (const CgEntry& eb : cb.entries)
                            if (eb.mo == mob && ea.m1 == eb.m1 && ea.m2 == eb.m2)
                                acc += ea.c * eb.c;
                    }
                    const bool same = (&ca == &cb) && (moa == mob);
                    max_orth = std::max(max_orth, std::abs(acc - (same ? 1.0 : 0.0)));
                }
        }
    if (max_orth >= 1e-12) res.pass = false;

    // equivariance under 50 random rotations, every coupling
    double max_equiv = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const Mat3 rot = random_rotation(rng);
        const WignerD d0{0, {1.0}};
        const WignerD d1 = wigner_d(1, rot, rng);
        const WignerD d2 = wigner_d(2, rot, rng);
        const WignerD* ds[3] = {&d0, &d1, &d2};
        for (const CgCoupling& c : table.couplings()) {
            const int n1 = 2 * c.l1 + 1, n2 = 2 * c.l2 + 1, no = 2 * c.lo + 1;
            std::vector<double> a(static_cast<std::size_t>(n1)), b(static_cast<std::size_t>(n2));
            for (double& v : a) v = rng.uniform(-1.0, 1.0);
            for (double& v : b) v = rng.uniform(-1.0, 1.0);
            auto apply = [&](const std::vector<double>& x, const std::vector<double>& y) {
                std::vector<double> out(static_cast<std::size_t>(no), 0.0);
                for (const CgEntry& e : c.entries)
                    out[static_cast<std::size_t>(e.mo)] += e.c * x[static_cast<std::size_t>(e.m1)] *
                                                           y[static_cast<std::size_t>(e.m2)];
                return out;
            };
            auto rot_block = [&](const std::vector<double>& x, int l) {
                const int n = 2 * l + 1;
                std::vector<double> out(static_cast<std::size_t>(n), 0.0);
                for (int r = 0; r < n; ++r)
                    for (int k = 0; k < n; ++k)
                        out[static_cast<std::size_t>(r)] +=
                            ds[l]->at(r, k) * x[static_cast<std::size_t>(k)];
                return out;
            };
            const auto lhs = rot_block(apply(a, b), c.lo);
            const auto rhs = apply(rot_block(a, c.l1), rot_block(b, c.l2));
            for (int m = 0; m < no; ++m)
                max_equiv = std::max(max_equiv, std::abs(lhs[static_cast<std::size_t>(m)] -
                                                         rhs[static_cast<std::size_t>(m)]));
        }
    }
    if (max_equiv >= 1e-10) res.pass = false;

    res.detail = fmt("quadrature %.3g, orthogonality %.3g", max_quad, max_orth) +
                 fmt(", equivariance %.3g", max_equiv);
    return res;
}

SuiteResult check_equivariance(std::uint64_t seed) {
    SuiteResult res{"equivariance", true, ""};
    const Model model = seeded_model(seed);
    Rng rng(seed + 1);
    double max_de = 0.0, max_df = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 3 + static_cast<int>(rng.below(10));
        const MoleculeFrame frame = random_frame(rng, n);
        const auto base = model.evaluate(frame, true);

        const Mat3 rot = random_rotation(rng);
        const bool reflect = rng.uniform() < 0.5;
        const std::array<double, 3> shift{rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0),
                                          rng.uniform(-20.0, 20.0)};
        const MoleculeFrame moved = transform_frame(frame, rot, reflect, shift);
        const auto out = model.evaluate(moved, true);

        max_de = std::max(max_de, std::abs(out.energy - base.energy));
        const double s = reflect ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) {
            const auto& f = base.forces[static_cast<std::size_t>(i)];
            for (int c = 0; c < 3; ++c) {
                const double expect =
                    s * (rot[static_cast<std::size_t>(c)][0] * f[0] +
                         rot[static_cast<std::size_t>(c)][1] * f[1] +
                         rot[static_cast<std::size_t>(c)][2] * f[2]);
                max_df = std::max(
                    max_df,
                    std::abs(out.forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -
                             expect));
            }
        }
    }
    res.pass = max_de <= 1e-9 && max_df <= 1e-8;
    res.detail = fmt("max |dE| %.3g kcal/mol, max |dF| %.3g kcal/mol/A", max_de, max_df);
    return res;
}

SuiteResult check_permutation(std::uint64_t seed) {
    SuiteResult res{"permutation", true, ""};
    const Model model = seeded_model(seed);
    const int C = model.config.channels;
    Rng rng(seed + 2);
    double max_de = 0.0, max_dedge = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 3 + static_cast<int>(rng.below(10));
        const MoleculeFrame frame = random_frame(rng, n);
        std::vector<std::size_t> perm(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        rng.shuffle(perm);
        MoleculeFrame shuffled;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            shuffled.atomic_numbers.push_back(frame.atomic_numbers[perm[i]]);
            shuffled.positions.push_back(frame.positions[perm[i]]);
        }
        const auto base = model.evaluate(frame, false);
        const auto out = model.evaluate(shuffled, false);
        max_de = std::max(max_de, std::abs(out.energy - base.energy));
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (int k = 0; k < C * 8; ++k)
                max_dedge = std::max(
                    max_dedge,
                    std::abs(out.abstract_edges[i * static_cast<std::size_t>(C * 8) +
                                                static_cast<std::size_t>(k)] -
                             base.abstract_edges[perm[i] * static_cast<std::size_t>(C * 8) +
                                                 static_cast<std::size_t>(k)]));
    }
    res.pass = max_de <= 1e-10 && max_dedge <= 1e-10;
    res.detail = fmt("max |dE| %.3g, max abstract-edge dev %.3g", max_de, max_dedge);
    return res;
}

SuiteResult check_gradient(std::uint64_t seed) {
    SuiteResult res{"gradient", true, ""};
    const Model model = seeded_model(seed);
    Rng rng(seed + 3);
    const double step = 1e-4;
    double max_rel = 0.0, max_net = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        MoleculeFrame frame = random_frame(rng, 5);
        const auto base = model.evaluate(frame, true);
        double fd_inf = 0.0, diff_inf = 0.0;
        std::array<double, 3> net{0.0, 0.0, 0.0};
        for (int i = 0; i < frame.n(); ++i)
            for (int c = 0; c < 3; ++c) {
                auto& coord =
                    frame.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                const double orig = coord;
                coord = orig + step;
                const double up = model.evaluate(frame, false).energy;
                coord = orig - step;
                const double dn = model.evaluate(frame, false).energy;
                coord = orig;
                const double fd = -(up - dn) / (2.0 * step);
                fd_inf = std::max(fd_inf, std::abs(fd));
                diff_inf = std::max(
                    diff_inf,
                    std::abs(base.forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -
                             fd));
                net[static_cast<std::size_t>(c)] +=
                    base.forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            }
        max_rel = std::max(max_rel, diff_inf / std::max(fd_inf, 1e-12));
        for (double v : net) max_net = std::max(max_net, std::abs(v));
    }
    res.pass = max_rel < 1e-6 && max_net <= 1e-8;
    res.detail = fmt("max relative force error %.3g, max net force %.3g", max_rel, max_net);
    return res;
}

std::vector<SuiteResult> run_check_suites(const std::vector<std::string>& names,
                                          std::uint64_t seed) {
    std::vector<std::string> expanded;
    for (const std::string& n : names) {
        if (n == "all") {
            expanded.insert(expanded.end(),
                            {"cg-oracle", "equivariance", "permutation", "gradient"});
        } else {
            expanded.push_back(n);
        }
    }
    std::vector<SuiteResult> out;
    for (const std::string& n : expanded) {
        if (n == "cg-oracle")
            out.push_back(check_cg_oracle(seed));
        else if (n == "equivariance")
            out.push_back(check_equivariance(seed));
        else if (n == "permutation")
            out.push_back(check_permutation(seed));
        else if (n == "gradient")
            out.push_back(check_gradient(seed));
        else
            throw ConfigError("unknown check suite '" + n + "'");
    }
    return out;
}

}  // namespace freecg
