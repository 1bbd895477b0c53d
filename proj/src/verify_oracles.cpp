#include <algorithm>
#include <cmath>

#include "freecg/verify.hpp"

namespace freecg {

namespace {

LebedevRule build_lebedev() {
    LebedevRule r;
    const double a = 1.0 / 21.0;
    const double b = 4.0 / 105.0;
    const double c = 27.0 / 840.0;
    auto add = [&](double x, double y, double z, double w) {
        r.points.push_back({x, y, z});
        r.weights.push_back(w);
    };
    for (int s = -1; s <= 1; s += 2) {
        add(s, 0, 0, a);
        add(0, s, 0, a);
        add(0, 0, s, a);
    }
    const double h = 1.0 / std::sqrt(2.0);
    for (int s1 = -1; s1 <= 1; s1 += 2)
        for (int s2 = -1; s2 <= 1; s2 += 2) {
            add(s1 * h, s2 * h, 0, b);
            add(s1 * h, 0, s2 * h, b);
            add(0, s1 * h, s2 * h, b);
        }
    const double t = 1.0 / std::sqrt(3.0);
    for (int s1 = -1; s1 <= 1; s1 += 2)
        for (int s2 = -1; s2 <= 1; s2 += 2)
            for (int s3 = -1; s3 <= 1; s3 += 2) add(s1 * t, s2 * t, s3 * t, c);
    return r;
}

}  // namespace

const LebedevRule& lebedev_rule() {
    static const LebedevRule rule = build_lebedev();
    return rule;
}

double lebedev_triple_product(int lo, int mo, int l1, int m1, int l2, int m2) {
    const LebedevRule& rule = lebedev_rule();
    double acc = 0.0;
    for (std::size_t k = 0; k < rule.points.size(); ++k) {
        const auto yo = sh_block(lo, rule.points[k]);
        const auto y1 = sh_block(l1, rule.points[k]);
        const auto y2 = sh_block(l2, rule.points[k]);
        acc += rule.weights[k] * yo[static_cast<std::size_t>(mo)] *
               y1[static_cast<std::size_t>(m1)] * y2[static_cast<std::size_t>(m2)];
    }
    return acc;
}

double quadrature_match_error(const CgCoupling& coupling) {
    // fit the single scale on the largest stored coefficient, then compare all
    const int n1 = 2 * coupling.l1 + 1, n2 = 2 * coupling.l2 + 1, no = 2 * coupling.lo + 1;
    std::vector<double> proj(static_cast<std::size_t>(no * n1 * n2), 0.0);
    for (int mo = 0; mo < no; ++mo)
        for (int m1 = 0; m1 < n1; ++m1)
            for (int m2 = 0; m2 < n2; ++m2)
                proj[static_cast<std::size_t>((mo * n1 + m1) * n2 + m2)] =
                    lebedev_triple_product(coupling.lo, mo, coupling.l1, m1, coupling.l2, m2);

    const CgEntry* anchor = nullptr;
    for (const CgEntry& e : coupling.entries)
        if (!anchor || std::abs(e.c) > std::abs(anchor->c)) anchor = &e;
    if (!anchor) return 0.0;
    const double p_anchor =
        proj[static_cast<std::size_t>((anchor->mo * n1 + anchor->m1) * n2 + anchor->m2)];
    if (std::abs(p_anchor) < 1e-14) return 1.0;  // projection vanished: no fit possible
    const double scale = anchor->c / p_anchor;

    double max_rel = 0.0;
    std::vector<char> seen(proj.size(), 0);
    for (const CgEntry& e : coupling.entries) {
        const std::size_t k = static_cast<std::size_t>((e.mo * n1 + e.m1) * n2 + e.m2);
        seen[k] = 1;
        max_rel = std::max(max_rel, std::abs(proj[k] * scale - e.c) / std::abs(e.c));
    }
    // entries the table dropped must integrate to (near) zero
    for (std::size_t k = 0; k < proj.size(); ++k)
        if (!seen[k]) max_rel = std::max(max_rel, std::abs(proj[k] * scale));
    return max_rel;
}

double wigner_residual(const WignerD& d, const std::array<std::array<double, 3>, 3>& rot,
                       Rng& rng) {
    const int n = 2 * d.degree + 1;
    double resid = 0.0;
    for (int s = 0; s < 50; ++s) {
        const auto u = random_unit_vector(rng);
        const std::array<double, 3> ru{
            rot[0][0] * u[0] + rot[0][1] * u[1] + rot[0][2] * u[2],
            rot[1][0] * u[0] + rot[1][1] * u[1] + rot[1][2] * u[2],
            rot[2][0] * u[0] + rot[2][1] * u[1] + rot[2][2] * u[2]};
        const auto yu = sh_block(d.degree, u);
        const auto yr = sh_block(d.degree, ru);
        for (int r = 0; r < n; ++r) {
            double acc = 0.0;
            for (int c = 0; c < n; ++c) acc += d.at(r, c) * yu[static_cast<std::size_t>(c)];
            resid = std::max(resid, std::abs(acc - yr[static_cast<std::size_t>(r)]));
        }
    }
    return resid;
}

}  // namespace freecg
