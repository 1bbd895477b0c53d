#include "freecg/irreps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

namespace freecg {

namespace {

constexpr double kSqrt3 = 1.7320508075688772935274463415059;

double norm3(const std::array<double, 3>& u) {
    return std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
}

void require_unit(const std::array<double, 3>& u) {
    const double n = norm3(u);
    if (std::abs(n - 1.0) > 1e-9) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "spherical_harmonics: non-unit input, |u| = %.12g", n);
        throw ContractViolation(buf);
    }
}

}  // namespace

std::array<double, 3> sh_l1(const std::array<double, 3>& u) {
    require_unit(u);
    return u;
}

std::array<double, 5> sh_l2(const std::array<double, 3>& u) {
    require_unit(u);
    const double x = u[0], y = u[1], z = u[2];
    return {kSqrt3 * x * y, kSqrt3 * y * z, 0.5 * (3.0 * z * z - 1.0), kSqrt3 * x * z,
            0.5 * kSqrt3 * (x * x - y * y)};
}

std::array<double, kLayoutComponents> spherical_harmonics(const std::array<double, 3>& u) {
    const auto a = sh_l1(u);
    const auto b = sh_l2(u);
    return {a[0], a[1], a[2], b[0], b[1], b[2], b[3], b[4]};
}

std::vector<double> sh_block(int degree, const std::array<double, 3>& u) {
    switch (degree) {
        case 0:
            return {1.0};
        case 1: {
            const auto a = sh_l1(u);
            return {a.begin(), a.end()};
        }
        case 2: {
            const auto b = sh_l2(u);
            return {b.begin(), b.end()};
        }
        default:
            throw ContractViolation("sh_block: degree outside {0,1,2}");
    }
}

namespace {

// ---------------------------------------------------------------------------
// Gauss-Legendre x uniform-phi spherical quadrature. The triple products of
// harmonics with l <= 2 are spherical polynomials of degree <= 6, exact for
// 8 Legendre nodes and 16 azimuthal points.
// ---------------------------------------------------------------------------

struct SphereRule {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;  // normalized: sum = 1
};

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    const double pi = 3.14159265358979323846264338327950288;
    for (int i = 0; i < n; ++i) {
        // Newton iteration from the Chebyshev estimate
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[static_cast<std::size_t>(i)] = x;
        weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
}

SphereRule product_rule(int n_theta, int n_phi) {
    std::vector<double> t, w;
    gauss_legendre(n_theta, t, w);
    SphereRule rule;
    const double pi = 3.14159265358979323846264338327950288;
    for (int i = 0; i < n_theta; ++i) {
        const double ct = t[static_cast<std::size_t>(i)];
        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        for (int j = 0; j < n_phi; ++j) {
            const double phi = 2.0 * pi * j / n_phi;
            rule.points.push_back({st * std::cos(phi), st * std::sin(phi), ct});
            // w sums to 2 over nodes; /2 and /n_phi normalize the measure
            rule.weights.push_back(w[static_cast<std::size_t>(i)] * 0.5 / n_phi);
        }
    }
    return rule;
}

// ---------------------------------------------------------------------------
// Coefficient-tensor construction
// ---------------------------------------------------------------------------

struct RawCoupling {
    int l1, l2, lo;
    std::vector<double> c;  // [mo][m1][m2] row-major, (2lo+1)x(2l1+1)x(2l2+1)
};

// Parity-allowed couplings: project the product Y^{l1}_{m1} Y^{l2}_{m2}
// onto Y^{lo}_{mo} over the sphere.
RawCoupling project_coupling(int l1, int l2, int lo, const SphereRule& rule) {
    const int n1 = 2 * l1 + 1, n2 = 2 * l2 + 1, no = 2 * lo + 1;
    RawCoupling rc{l1, l2, lo, std::vector<double>(static_cast<std::size_t>(no * n1 * n2), 0.0)};
    for (std::size_t k = 0; k < rule.points.size(); ++k) {
        const auto yo = sh_block(lo, rule.points[k]);
        const auto y1 = sh_block(l1, rule.points[k]);
        const auto y2 = sh_block(l2, rule.points[k]);
        const double w = rule.weights[k];
        for (int mo = 0; mo < no; ++mo)
            for (int m1 = 0; m1 < n1; ++m1)
                for (int m2 = 0; m2 < n2; ++m2)
                    rc.c[static_cast<std::size_t>((mo * n1 + m1) * n2 + m2)] +=
                        w * yo[static_cast<std::size_t>(mo)] * y1[static_cast<std::size_t>(m1)] *
                        y2[static_cast<std::size_t>(m2)];
    }
    return rc;
}

// l=2 components <-> symmetric traceless 3x3 matrix, consistent with the
// sh_l2 convention: S(u) = u u^T - I/3 maps to Y^2(u).
std::array<std::array<double, 3>, 3> l2_to_mat(const double* c) {
    const double inv_s3 = 1.0 / kSqrt3;
    std::array<std::array<double, 3>, 3> s{};
    s[0][1] = s[1][0] = c[0] * inv_s3;
    s[1][2] = s[2][1] = c[1] * inv_s3;
    s[0][2] = s[2][0] = c[3] * inv_s3;
    s[2][2] = 2.0 * c[2] / 3.0;
    s[0][0] = -c[2] / 3.0 + c[4] * inv_s3;
    s[1][1] = -c[2] / 3.0 - c[4] * inv_s3;
    return s;
}

std::array<double, 5> mat_to_l2(const std::array<std::array<double, 3>, 3>& s) {
    return {kSqrt3 * s[0][1], kSqrt3 * s[1][2], 1.5 * s[2][2], kSqrt3 * s[0][2],
            0.5 * kSqrt3 * (s[0][0] - s[1][1])};
}

std::array<std::array<double, 3>, 3> cross_mat(const double* v) {
    return {{{0.0, -v[2], v[1]}, {v[2], 0.0, -v[0]}, {-v[1], v[0], 0.0}}};
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul3(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    return r;
}

Mat3 commutator(const Mat3& a, const Mat3& b) {
    const Mat3 ab = matmul3(a, b);
    const Mat3 ba = matmul3(b, a);
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = ab[i][j] - ba[i][j];
    return r;
}

// Parity-violating couplings: the unique rotation intertwiners realized as
// cross products / matrix commutators, evaluated on basis elements.
RawCoupling pseudo_coupling(int l1, int l2, int lo) {
    const int n1 = 2 * l1 + 1, n2 = 2 * l2 + 1, no = 2 * lo + 1;
    RawCoupling rc{l1, l2, lo, std::vector<double>(static_cast<std::size_t>(no * n1 * n2), 0.0)};
    auto put = [&](int mo, int m1, int m2, double v) {
        rc.c[static_cast<std::size_t>((mo * n1 + m1) * n2 + m2)] = v;
    };
    for (int m1 = 0; m1 < n1; ++m1) {
        std::vector<double> e1(static_cast<std::size_t>(n1), 0.0);
        e1[static_cast<std::size_t>(m1)] = 1.0;
        for (int m2 = 0; m2 < n2; ++m2) {
            std::vector<double> e2(static_cast<std::size_t>(n2), 0.0);
            e2[static_cast<std::size_t>(m2)] = 1.0;
            if (l1 == 1 && l2 == 1 && lo == 1) {
                put(0, m1, m2, e1[1] * e2[2] - e1[2] * e2[1]);
                put(1, m1, m2, e1[2] * e2[0] - e1[0] * e2[2]);
                put(2, m1, m2, e1[0] * e2[1] - e1[1] * e2[0]);
            } else if (l1 == 1 && l2 == 2 && lo == 2) {
                const auto out = mat_to_l2(commutator(cross_mat(e1.data()), l2_to_mat(e2.data())));
                for (int mo = 0; mo < no; ++mo) put(mo, m1, m2, out[static_cast<std::size_t>(mo)]);
            } else if (l1 == 2 && l2 == 1 && lo == 2) {
                const auto out = mat_to_l2(commutator(cross_mat(e2.data()), l2_to_mat(e1.data())));
                for (int mo = 0; mo < no; ++mo) put(mo, m1, m2, out[static_cast<std::size_t>(mo)]);
            } else if (l1 == 2 && l2 == 2 && lo == 1) {
                const Mat3 a = commutator(l2_to_mat(e1.data()), l2_to_mat(e2.data()));
                put(0, m1, m2, a[2][1]);
                put(1, m1, m2, a[0][2]);
                put(2, m1, m2, a[1][0]);
            } else {
                throw Error("pseudo_coupling: unsupported triple");
            }
        }
    }
    return rc;
}

// Scale so rows are orthonormal (sum_{m1,m2} C[mo] C[mo] = 1), flip sign so
// the lexicographically first surviving entry is positive, drop structural
// zeros below 1e-12.
CgCoupling finalize(const RawCoupling& rc, bool parity_allowed) {
    const int n1 = 2 * rc.l1 + 1, n2 = 2 * rc.l2 + 1, no = 2 * rc.lo + 1;
    double sq = 0.0;
    for (double v : rc.c) sq += v * v;
    const double row_norm = std::sqrt(sq / no);
    if (row_norm < 1e-14) throw Error("cg coupling vanished during construction");
    double scale = 1.0 / row_norm;

    // sign convention
    for (int mo = 0; mo < no && scale > 0.0; ++mo)
        for (int m1 = 0; m1 < n1; ++m1)
            for (int m2 = 0; m2 < n2; ++m2) {
                const double v = rc.c[static_cast<std::size_t>((mo * n1 + m1) * n2 + m2)] * scale;
                if (std::abs(v) >= 1e-12) {
                    if (v < 0.0) scale = -scale;
                    mo = no;
                    m1 = n1;
                    break;
                }
            }

    CgCoupling out;
    out.l1 = rc.l1;
    out.l2 = rc.l2;
    out.lo = rc.lo;
    out.parity_allowed = parity_allowed;
    std::vector<int> per_mo(static_cast<std::size_t>(no), 0);
    for (int mo = 0; mo < no; ++mo)
        for (int m1 = 0; m1 < n1; ++m1)
            for (int m2 = 0; m2 < n2; ++m2) {
                const double v = rc.c[static_cast<std::size_t>((mo * n1 + m1) * n2 + m2)] * scale;
                if (std::abs(v) >= 1e-12) {
                    out.entries.push_back({mo, m1, m2, v});
                    ++per_mo[static_cast<std::size_t>(mo)];
                }
            }
    out.mult_per_pair = static_cast<std::int64_t>(out.entries.size());
    for (int k : per_mo) out.add_per_pair += std::max(0, k - 1);
    return out;
}

std::vector<CgCoupling> build_couplings() {
    const SphereRule rule = product_rule(8, 16);
    std::vector<CgCoupling> couplings;
    for (int l1 = 0; l1 <= 2; ++l1)
        for (int l2 = 0; l2 <= 2; ++l2)
            for (int lo = 0; lo <= 2; ++lo) {
                if (lo < std::abs(l1 - l2) || lo > l1 + l2) continue;
                const bool even = (l1 + l2 + lo) % 2 == 0;
                const RawCoupling raw =
                    even ? project_coupling(l1, l2, lo, rule) : pseudo_coupling(l1, l2, lo);
                couplings.push_back(finalize(raw, even));
            }
    return couplings;
}

}  // namespace

const CgTable& cg_table() {
    static const CgTable table = [] {
        CgTable t;
        t.couplings_ = build_couplings();
        return t;
    }();
    return table;
}

const CgCoupling& CgTable::coupling(int l1, int l2, int lo) const {
    for (const auto& c : couplings_)
        if (c.l1 == l1 && c.l2 == l2 && c.lo == lo) return c;
    char buf[80];
    std::snprintf(buf, sizeof(buf), "cg coupling (%d,%d->%d) not in table", l1, l2, lo);
    throw Error(buf);
}

bool CgTable::has_coupling(int l1, int l2, int lo) const {
    for (const auto& c : couplings_)
        if (c.l1 == l1 && c.l2 == l2 && c.lo == lo) return true;
    return false;
}

std::vector<CgPath> CgTable::enumerate_paths(PathMode mode) const {
    std::vector<CgPath> paths;
    auto push = [&](int l1, int l2, int lo) {
        paths.push_back({l1, natural_parity(l1), l2, natural_parity(l2), lo, natural_parity(lo)});
    };
    if (mode == PathMode::O3_sparse) {
        push(1, 1, 2);
        push(1, 2, 1);
        push(2, 1, 1);
        push(2, 2, 2);
        return paths;
    }
    for (int l1 = 1; l1 <= 2; ++l1)
        for (int l2 = 1; l2 <= 2; ++l2)
            for (int lo = 1; lo <= 2; ++lo) {
                if (lo < std::abs(l1 - l2) || lo > l1 + l2) continue;
                push(l1, l2, lo);
            }
    return paths;
}

// ---------------------------------------------------------------------------
// Wigner-D
// ---------------------------------------------------------------------------

namespace {

// solve A x = b for symmetric positive definite-ish A (n <= 5), partial pivot;
// returns false when a pivot collapses
bool solve_inplace(std::vector<double>& a, std::vector<double>& b, int n, int nrhs) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<std::size_t>(r * n + col)]) >
                std::abs(a[static_cast<std::size_t>(piv * n + col)]))
                piv = r;
        if (std::abs(a[static_cast<std::size_t>(piv * n + col)]) < 1e-10) return false;
        if (piv != col) {
            for (int c = 0; c < n; ++c)
                std::swap(a[static_cast<std::size_t>(col * n + c)],
                          a[static_cast<std::size_t>(piv * n + c)]);
            for (int c = 0; c < nrhs; ++c)
                std::swap(b[static_cast<std::size_t>(col * nrhs + c)],
                          b[static_cast<std::size_t>(piv * nrhs + c)]);
        }
        const double inv = 1.0 / a[static_cast<std::size_t>(col * n + col)];
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[static_cast<std::size_t>(r * n + col)] * inv;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c)
                a[static_cast<std::size_t>(r * n + c)] -= f * a[static_cast<std::size_t>(col * n + c)];
            for (int c = 0; c < nrhs; ++c)
                b[static_cast<std::size_t>(r * nrhs + c)] -= f * b[static_cast<std::size_t>(col * nrhs + c)];
        }
    }
    for (int r = 0; r < n; ++r) {
        const double inv = 1.0 / a[static_cast<std::size_t>(r * n + r)];
        for (int c = 0; c < nrhs; ++c) b[static_cast<std::size_t>(r * nrhs + c)] *= inv;
    }
    return true;
}

std::array<double, 3> apply_rot(const Mat3& r, const std::array<double, 3>& u) {
    return {r[0][0] * u[0] + r[0][1] * u[1] + r[0][2] * u[2],
            r[1][0] * u[0] + r[1][1] * u[1] + r[1][2] * u[2],
            r[2][0] * u[0] + r[2][1] * u[1] + r[2][2] * u[2]};
}

void require_rotation(const Mat3& r) {
    double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                 r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                 r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    double max_dev = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += r[k][i] * r[k][j];
            max_dev = std::max(max_dev, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    if (max_dev > 1e-10 || std::abs(det - 1.0) > 1e-8)
        throw ContractViolation("wigner_d: input is not a proper rotation");
}

}  // namespace

WignerD wigner_d(int degree, const Mat3& rot, Rng& rng) {
    require_rotation(rot);
    const int n = 2 * degree + 1;
    for (int attempt = 0; attempt < 32; ++attempt) {
        const int k = 2 * n + 2;
        // M: n x k sample matrix, N: n x k rotated targets
        std::vector<double> m(static_cast<std::size_t>(n * k));
        std::vector<double> t(static_cast<std::size_t>(n * k));
        for (int s = 0; s < k; ++s) {
            const auto u = random_unit_vector(rng);
            const auto yu = sh_block(degree, u);
            const auto yr = sh_block(degree, apply_rot(rot, u));
            for (int r = 0; r < n; ++r) {
                m[static_cast<std::size_t>(r * k + s)] = yu[static_cast<std::size_t>(r)];
                t[static_cast<std::size_t>(r * k + s)] = yr[static_cast<std::size_t>(r)];
            }
        }
        // normal equations: D (M M^T) = T M^T  =>  (M M^T) D^T = M T^T
        std::vector<double> gram(static_cast<std::size_t>(n * n), 0.0);
        std::vector<double> rhs(static_cast<std::size_t>(n * n), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double g = 0.0, h = 0.0;
                for (int s = 0; s < k; ++s) {
                    g += m[static_cast<std::size_t>(i * k + s)] * m[static_cast<std::size_t>(j * k + s)];
                    h += m[static_cast<std::size_t>(i * k + s)] * t[static_cast<std::size_t>(j * k + s)];
                }
                gram[static_cast<std::size_t>(i * n + j)] = g;
                rhs[static_cast<std::size_t>(i * n + j)] = h;  // (M T^T)_{ij}
            }
        if (!solve_inplace(gram, rhs, n, n)) continue;  // ill-conditioned, fresh samples

        WignerD d;
        d.degree = degree;
        d.matrix.assign(static_cast<std::size_t>(n * n), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                d.matrix[static_cast<std::size_t>(j * n + i)] = rhs[static_cast<std::size_t>(i * n + j)];

        double resid = 0.0;
        for (int s = 0; s < 50; ++s) {
            const auto u = random_unit_vector(rng);
            const auto yu = sh_block(degree, u);
            const auto yr = sh_block(degree, apply_rot(rot, u));
            for (int r = 0; r < n; ++r) {
                double acc = 0.0;
                for (int c = 0; c < n; ++c) acc += d.at(r, c) * yu[static_cast<std::size_t>(c)];
                resid = std::max(resid, std::abs(acc - yr[static_cast<std::size_t>(r)]));
            }
        }
        if (resid < 1e-10) return d;
    }
    throw Error("wigner_d: failed to obtain a well-conditioned sample set");
}

Mat3 random_rotation(Rng& rng) {
    // uniform quaternion
    double q[4];
    double n2 = 0.0;
    do {
        n2 = 0.0;
        for (double& c : q) {
            c = rng.normal();
            n2 += c * c;
        }
    } while (n2 < 1e-12);
    const double inv = 1.0 / std::sqrt(n2);
    const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

std::array<double, kLayoutComponents> transform_layout(
    const std::array<double, kLayoutComponents>& v, const WignerD& d1, const WignerD& d2,
    bool reflect) {
    std::array<double, kLayoutComponents> out{};
    const double s1 = reflect ? -1.0 : 1.0;  // l=1 has parity -1
    for (int r = 0; r < 3; ++r) {
        double acc = 0.0;
        for (int c = 0; c < 3; ++c) acc += d1.at(r, c) * v[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] = s1 * acc;
    }
    for (int r = 0; r < 5; ++r) {
        double acc = 0.0;
        for (int c = 0; c < 5; ++c) acc += d2.at(r, c) * v[static_cast<std::size_t>(3 + c)];
        out[static_cast<std::size_t>(3 + r)] = acc;
    }
    return out;
}

}  // namespace freecg
