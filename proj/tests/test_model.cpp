#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "freecg/data.hpp"
#include "freecg/model.hpp"
#include "freecg/verify.hpp"
#include "reference_layer.hpp"

using namespace freecg;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.channels = 16;
    cfg.heads = 4;
    cfg.groups = 4;
    cfg.layers = 2;
    return cfg;
}

Model small_model(std::uint64_t seed, ModelConfig cfg = small_config()) {
    Model m(cfg);
    m.init_params(seed);
    return m;
}

// positions on a dyadic grid make exact translation arithmetic possible
MoleculeFrame dyadic_frame() {
    MoleculeFrame f;
    f.atomic_numbers = {8, 1, 1, 6};
    f.positions = {{1.0, 1.25, 0.5}, {1.75, 2.0, 0.25}, {0.25, 2.5, 1.5}, {2.5, 0.75, 2.0}};
    return f;
}

}  // namespace

TEST_CASE("neighbor list basics") {
    MoleculeFrame one;
    one.atomic_numbers = {1};
    one.positions = {{0, 0, 0}};
    CHECK(build_neighbor_list(one, 5.0).edges() == 0);

    MoleculeFrame two;
    two.atomic_numbers = {1, 1};
    two.positions = {{0, 0, 0}, {0, 0, 5.0 + 1e-9}};
    CHECK(build_neighbor_list(two, 5.0).edges() == 0);
    two.positions[1][2] = 5.0;  // exactly at the cutoff: included
    CHECK(build_neighbor_list(two, 5.0).edges() == 2);

    MoleculeFrame co;
    co.atomic_numbers = {1, 1};
    co.positions = {{0, 0, 0}, {0, 0, 1e-9}};
    CHECK_THROWS_AS(build_neighbor_list(co, 5.0), Error);
}

TEST_CASE("neighbor list matches a brute-force double loop") {
    Rng rng(51);
    for (int rep = 0; rep < 5; ++rep) {
        const MoleculeFrame f = random_frame(rng, 5);
        const NeighborList nl = build_neighbor_list(f, 4.0);
        std::int64_t expect = 0;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                if (i == j) continue;
                double d2 = 0;
                for (int c = 0; c < 3; ++c) {
                    const double d = f.positions[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] -
                                     f.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                    d2 += d * d;
                }
                if (d2 <= 16.0) ++expect;
            }
        CHECK(nl.edges() == expect);
        // pair symmetry
        for (std::int64_t e = 0; e < nl.edges(); ++e) {
            bool found = false;
            for (std::int64_t e2 = 0; e2 < nl.edges(); ++e2)
                found |= nl.center[static_cast<std::size_t>(e2)] ==
                             nl.neighbor[static_cast<std::size_t>(e)] &&
                         nl.neighbor[static_cast<std::size_t>(e2)] ==
                             nl.center[static_cast<std::size_t>(e)];
            CHECK(found);
        }
    }
}

TEST_CASE("radial features: boundary and monotonicity") {
    std::vector<double> means{0.2, 0.5, 0.9};
    std::vector<double> betas{10.0, 10.0, 10.0};
    const double rc = 5.0;
    auto [at_rc, cw_rc] = radial_features(rc, rc, means, betas);
    CHECK(cw_rc == 0.0);
    for (double v : at_rc) CHECK(v == 0.0);

    auto [near0, cw0] = radial_features(1e-12, rc, means, betas);
    CHECK(cw0 == doctest::Approx(1.0).epsilon(1e-12));
    (void)near0;

    double prev = 2.0;
    for (double r = 0.1; r < rc; r += 0.1) {
        const double cw = cosine_cutoff(r, rc);
        CHECK(cw < prev);
        CHECK(cw >= 0.0);
        prev = cw;
    }
    CHECK_THROWS_AS(radial_features(0.0, rc, means, betas), ContractViolation);
    CHECK_THROWS_AS(radial_features(rc + 0.1, rc, means, betas), ContractViolation);
}

TEST_CASE("attention enhancer helper") {
    // zero abstract edges -> 0
    std::vector<double> zero(3 * 8, 0.0);
    std::array<double, 8> e{1, 0, 0, 0, 0, 0, 0, 0};
    CHECK(attention_enhancer(zero, e) == 0.0);

    // single channel reduces to the plain dot product
    Rng rng(52);
    std::vector<double> one(8);
    double dot = 0.0;
    for (int m = 0; m < 8; ++m) {
        one[static_cast<std::size_t>(m)] = rng.uniform(-1, 1);
        e[static_cast<std::size_t>(m)] = rng.uniform(-1, 1);
        dot += one[static_cast<std::size_t>(m)] * e[static_cast<std::size_t>(m)];
    }
    CHECK(attention_enhancer(one, e) == doctest::Approx(dot).epsilon(1e-15));

    // invariant under a joint blockwise rotation (orthogonal per block)
    const auto rot = random_rotation(rng);
    const WignerD d1 = wigner_d(1, rot, rng);
    const WignerD d2 = wigner_d(2, rot, rng);
    std::vector<double> chans(4 * 8);
    std::array<double, 8> edge{};
    for (auto& v : chans) v = rng.uniform(-1, 1);
    for (auto& v : edge) v = rng.uniform(-1, 1);
    const double base = attention_enhancer(chans, edge);
    std::vector<double> chans_r(4 * 8);
    for (int t = 0; t < 4; ++t) {
        std::array<double, 8> row{};
        for (int m = 0; m < 8; ++m)
            row[static_cast<std::size_t>(m)] = chans[static_cast<std::size_t>(t * 8 + m)];
        const auto rr = transform_layout(row, d1, d2, false);
        for (int m = 0; m < 8; ++m)
            chans_r[static_cast<std::size_t>(t * 8 + m)] = rr[static_cast<std::size_t>(m)];
    }
    const auto er = transform_layout(edge, d1, d2, false);
    CHECK(std::abs(attention_enhancer(chans_r, er) - base) < 1e-10);
}

TEST_CASE("model matches the straightforward-loop reference implementation") {
    const Model m = small_model(99);
    Rng rng(53);
    const MoleculeFrame frame = random_frame(rng, 4);
    const auto ref = freecg::testing::reference_forward(m, frame);
    const auto out = m.evaluate(frame, false);

    CHECK(std::abs(out.energy - ref.energy) < 1e-10);
    REQUIRE(out.node_scalars.size() == ref.h.size());
    for (std::size_t i = 0; i < ref.h.size(); ++i)
        CHECK(std::abs(out.node_scalars[i] - ref.h[i]) < 1e-11);
    REQUIRE(out.abstract_edges.size() == ref.ebar.size());
    for (std::size_t i = 0; i < ref.ebar.size(); ++i)
        CHECK(std::abs(out.abstract_edges[i] - ref.ebar[i]) < 1e-11);
}

TEST_CASE("attention scores: hand computation on a 3-atom fixture") {
    const Model m = small_model(42);
    MoleculeFrame f;
    f.atomic_numbers = {8, 1, 1};
    f.positions = {{0, 0, 0}, {1.1, 0, 0}, {0, 1.3, 0.2}};
    const auto ref = freecg::testing::reference_forward(m, f);

    // hand-compute a_{0->?} for the first listed edge, first head, layer 0
    const ModelConfig& cfg = m.config;
    const NeighborList nl = build_neighbor_list(f, cfg.cutoff);
    REQUIRE(nl.edges() > 0);
    const int C = cfg.channels, dh = C / cfg.heads, R = cfg.num_rbf;
    const std::int64_t i = nl.center[0], j = nl.neighbor[0];
    const auto& ps = m.params;
    auto mat = [&](const std::string& n) { return ps.at(n).values; };
    auto affine = [&](const std::string& base, const std::vector<double>& x) {
        std::vector<double> y(static_cast<std::size_t>(C));
        const auto& w = mat(base + ".w");
        const auto& b = mat(base + ".b");
        for (int o = 0; o < C; ++o) {
            double acc = b[static_cast<std::size_t>(o)];
            for (int k = 0; k < C; ++k)
                acc += w[static_cast<std::size_t>(o * C + k)] * x[static_cast<std::size_t>(k)];
            y[static_cast<std::size_t>(o)] = acc;
        }
        return y;
    };
    auto embed_row = [&](std::int64_t atom) {
        std::vector<double> h(static_cast<std::size_t>(C));
        for (int c = 0; c < C; ++c)
            h[static_cast<std::size_t>(c)] = mat("embedding")[static_cast<std::size_t>(
                f.atomic_numbers[static_cast<std::size_t>(atom)] * C + c)];
        return h;
    };
    const auto [rbf, cw] =
        radial_features(nl.dist[0], cfg.cutoff, mat("rbf.means"), mat("rbf.betas"));
    std::vector<double> fe(static_cast<std::size_t>(C));
    for (int o = 0; o < C; ++o) {
        double acc = mat("edge_embed.b")[static_cast<std::size_t>(o)];
        for (int k = 0; k < R; ++k)
            acc += mat("edge_embed.w")[static_cast<std::size_t>(o * R + k)] *
                   rbf[static_cast<std::size_t>(k)];
        fe[static_cast<std::size_t>(o)] = acc;
    }
    const auto q = affine("layers.0.q", embed_row(i));
    const auto k = affine("layers.0.k", embed_row(j));
    const auto dk = affine("layers.0.dk", fe);
    double acc = 0.0;
    for (int d = 0; d < dh; ++d)
        acc += q[static_cast<std::size_t>(d)] * k[static_cast<std::size_t>(d)] *
               dk[static_cast<std::size_t>(d)];
    const double logits = cw * acc;  // enhancer is 0: zero-initialized abstract edges
    const double expect = logits / (1.0 + std::exp(-logits));
    CHECK(std::abs(ref.attention[0][0] - expect) < 1e-12);
}

TEST_CASE("attention at exactly r_c with zero abstract edges is SiLU(0) = 0") {
    const Model m = small_model(43);
    MoleculeFrame f;
    f.atomic_numbers = {6, 8};
    f.positions = {{0, 0, 0}, {0, 0, m.config.cutoff}};
    const auto ref = freecg::testing::reference_forward(m, f);
    for (double a : ref.attention[0]) CHECK(a == 0.0);
}

TEST_CASE("permuting atoms leaves the layer-0 attention multiset bitwise unchanged") {
    const Model m = small_model(44);
    Rng rng(54);
    const MoleculeFrame f = random_frame(rng, 5);
    MoleculeFrame g;
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    for (std::size_t p : perm) {
        g.atomic_numbers.push_back(f.atomic_numbers[p]);
        g.positions.push_back(f.positions[p]);
    }
    auto ra = freecg::testing::reference_forward(m, f).attention[0];
    auto rb = freecg::testing::reference_forward(m, g).attention[0];
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    CHECK(ra == rb);
}

TEST_CASE("zero-initialized abstract edges: layer 1 leaves Ebar equal to Ehat") {
    ModelConfig cfg = small_config();
    cfg.layers = 1;
    const Model m = small_model(45, cfg);
    Rng rng(55);
    const MoleculeFrame f = random_frame(rng, 4);
    const auto ref = freecg::testing::reference_forward(m, f);
    const auto out = m.evaluate(f, false);
    REQUIRE(out.abstract_edges.size() == ref.ehat_layer0.size());
    for (std::size_t i = 0; i < ref.ehat_layer0.size(); ++i)
        CHECK(std::abs(out.abstract_edges[i] - ref.ehat_layer0[i]) < 1e-12);
}

TEST_CASE("isolated atom: empty aggregation, abstract edges stay zero") {
    const Model m = small_model(46);
    MoleculeFrame f;
    f.atomic_numbers = {8};
    f.positions = {{1.0, 2.0, 3.0}};
    const auto out = m.evaluate(f, true);
    CHECK(std::isfinite(out.energy));
    for (double v : out.abstract_edges) CHECK(v == 0.0);
    for (const auto& fr : out.forces)
        for (double v : fr) CHECK(v == 0.0);
}

TEST_CASE("energy is bitwise invariant under dyadic translations") {
    const Model m = small_model(47);
    const MoleculeFrame f = dyadic_frame();
    const double base = m.evaluate(f, false).energy;
    MoleculeFrame g = f;
    for (auto& p : g.positions) {
        p[0] += 2.5;
        p[1] -= 0.75;
        p[2] += 1.25;
    }
    CHECK(m.evaluate(g, false).energy == base);
}

TEST_CASE("rotation/reflection equivariance of energy, forces and abstract edges") {
    const Model m = small_model(48);
    Rng rng(56);
    const int C = m.config.channels;
    for (int rep = 0; rep < 5; ++rep) {
        const MoleculeFrame f = random_frame(rng, 6);
        const auto base = m.evaluate(f, true);
        const auto rot = random_rotation(rng);
        const bool reflect = rep % 2 == 1;
        const double s = reflect ? -1.0 : 1.0;
        MoleculeFrame g = f;
        for (auto& p : g.positions) {
            const std::array<double, 3> r{
                s * (rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2]),
                s * (rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2]),
                s * (rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2])};
            p = r;
        }
        const auto out = m.evaluate(g, true);
        CHECK(std::abs(out.energy - base.energy) < 1e-9);
        for (int i = 0; i < f.n(); ++i)
            for (int c = 0; c < 3; ++c) {
                const auto& bf = base.forces[static_cast<std::size_t>(i)];
                const double expect = s * (rot[static_cast<std::size_t>(c)][0] * bf[0] +
                                           rot[static_cast<std::size_t>(c)][1] * bf[1] +
                                           rot[static_cast<std::size_t>(c)][2] * bf[2]);
                CHECK(std::abs(out.forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -
                               expect) < 1e-8);
            }
        // abstract edges transform blockwise (Wigner-D with parity signs)
        const WignerD d1 = wigner_d(1, rot, rng);
        const WignerD d2 = wigner_d(2, rot, rng);
        for (int i = 0; i < f.n(); ++i)
            for (int t = 0; t < C; ++t) {
                std::array<double, 8> row{};
                for (int mm = 0; mm < 8; ++mm)
                    row[static_cast<std::size_t>(mm)] =
                        base.abstract_edges[static_cast<std::size_t>((i * C + t) * 8 + mm)];
                const auto expect = transform_layout(row, d1, d2, reflect);
                for (int mm = 0; mm < 8; ++mm)
                    CHECK(std::abs(out.abstract_edges[static_cast<std::size_t>((i * C + t) * 8 +
                                                                               mm)] -
                                   expect[static_cast<std::size_t>(mm)]) < 1e-9);
            }
    }
}

TEST_CASE("net force vanishes (translation invariance + exact gradients)") {
    const Model m = small_model(49);
    Rng rng(57);
    for (int rep = 0; rep < 5; ++rep) {
        const MoleculeFrame f = random_frame(rng, 7);
        const auto out = m.evaluate(f, true);
        for (int c = 0; c < 3; ++c) {
            double net = 0.0;
            for (const auto& fr : out.forces) net += fr[static_cast<std::size_t>(c)];
            CHECK(std::abs(net) < 1e-8);
        }
    }
}

TEST_CASE("forces match central finite differences of the energy") {
    const Model m = small_model(50);
    Rng rng(58);
    MoleculeFrame f = random_frame(rng, 5);
    const auto base = m.evaluate(f, true);
    const double step = 1e-4;
    double fd_inf = 0.0, diff_inf = 0.0;
    for (int i = 0; i < f.n(); ++i)
        for (int c = 0; c < 3; ++c) {
            auto& coord = f.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            const double orig = coord;
            coord = orig + step;
            const double up = m.evaluate(f, false).energy;
            coord = orig - step;
            const double dn = m.evaluate(f, false).energy;
            coord = orig;
            const double fd = -(up - dn) / (2.0 * step);
            fd_inf = std::max(fd_inf, std::abs(fd));
            diff_inf = std::max(
                diff_inf,
                std::abs(base.forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] - fd));
        }
    CHECK(diff_inf / std::max(fd_inf, 1e-12) < 1e-6);
}

TEST_CASE("locality: perturbing an atom beyond 2 L r_c leaves h_i bitwise unchanged") {
    const Model m = small_model(60);
    const int C = m.config.channels;
    MoleculeFrame f = dyadic_frame();
    f.atomic_numbers.push_back(6);
    f.positions.push_back({40.0, 0.0, 0.0});  // far beyond 2*2*5 A
    const auto base = m.evaluate(f, false);
    f.positions.back()[1] += 0.375;
    const auto out = m.evaluate(f, false);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < C; ++c)
            CHECK(out.node_scalars[static_cast<std::size_t>(i * C + c)] ==
                  base.node_scalars[static_cast<std::size_t>(i * C + c)]);
}

TEST_CASE("disabling the enhancer is exact when abstract edges are zero") {
    ModelConfig cfg = small_config();
    cfg.layers = 1;  // the layer-0 enhancer input is identically zero
    Model on(cfg);
    on.init_params(61);
    ModelConfig off_cfg = cfg;
    off_cfg.enhancer = false;
    Model off(off_cfg);
    off.params = on.params;
    Rng rng(62);
    const MoleculeFrame f = random_frame(rng, 5);
    CHECK(on.evaluate(f, false).energy == off.evaluate(f, false).energy);

    // with two layers the enhancer sees nonzero abstract edges and matters
    ModelConfig two = small_config();
    Model on2(two);
    on2.init_params(61);
    ModelConfig two_off = two;
    two_off.enhancer = false;
    Model off2(two_off);
    off2.params = on2.params;
    CHECK(on2.evaluate(f, false).energy != off2.evaluate(f, false).energy);
}

TEST_CASE("permutation invariance of energy and per-atom abstract edges") {
    const Model m = small_model(63);
    const int C = m.config.channels;
    Rng rng(64);
    for (int rep = 0; rep < 5; ++rep) {
        const MoleculeFrame f = random_frame(rng, 6);
        std::vector<std::size_t> perm(6);
        for (std::size_t i = 0; i < 6; ++i) perm[i] = i;
        rng.shuffle(perm);
        MoleculeFrame g;
        for (std::size_t p : perm) {
            g.atomic_numbers.push_back(f.atomic_numbers[p]);
            g.positions.push_back(f.positions[p]);
        }
        const auto base = m.evaluate(f, false);
        const auto out = m.evaluate(g, false);
        CHECK(std::abs(out.energy - base.energy) < 1e-10);
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (int k = 0; k < C * 8; ++k)
                CHECK(std::abs(out.abstract_edges[i * static_cast<std::size_t>(C * 8) +
                                                  static_cast<std::size_t>(k)] -
                               base.abstract_edges[perm[i] * static_cast<std::size_t>(C * 8) +
                                                   static_cast<std::size_t>(k)]) < 1e-10);
    }
}

TEST_CASE("dipole and spatial extent") {
    const Model m = small_model(65);

    MoleculeFrame one;
    one.atomic_numbers = {8};
    one.positions = {{0, 0, 0}};
    CHECK_THROWS_AS(m.dipole_and_extent(one), ContractViolation);  // masses missing
    assign_standard_masses(one);
    const auto [mu1, r2] = m.dipole_and_extent(one);
    CHECK(r2 == 0.0);
    (void)mu1;

    Rng rng(66);
    MoleculeFrame f = random_frame(rng, 5);
    assign_standard_masses(f);
    const auto [mu, ext] = m.dipole_and_extent(f);

    // translation invariance (centered coordinates)
    MoleculeFrame g = f;
    for (auto& p : g.positions)
        for (int c = 0; c < 3; ++c) p[static_cast<std::size_t>(c)] += 7.5 - c;
    const auto [mu_t, ext_t] = m.dipole_and_extent(g);
    CHECK(std::abs(mu_t - mu) < 1e-9);
    CHECK(std::abs(ext_t - ext) < 1e-9);

    // rotation invariance of the norm-valued outputs
    const auto rot = random_rotation(rng);
    MoleculeFrame h = f;
    for (auto& p : h.positions) {
        const std::array<double, 3> r{rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2],
                                      rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2],
                                      rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2]};
        p = r;
    }
    const auto [mu_r, ext_r] = m.dipole_and_extent(h);
    CHECK(std::abs(mu_r - mu) < 1e-9);
    CHECK(std::abs(ext_r - ext) < 1e-9);

    ModelConfig sc = small_config();
    sc.head = ModelConfig::Head::scalar;
    Model scalar_model(sc);
    scalar_model.init_params(67);
    CHECK_THROWS_AS(scalar_model.dipole_and_extent(f), ConfigError);
}

TEST_CASE("scalar head runs and differs from the gated head") {
    ModelConfig cfg = small_config();
    cfg.head = ModelConfig::Head::scalar;
    Model m(cfg);
    m.init_params(68);
    Rng rng(69);
    const MoleculeFrame f = random_frame(rng, 4);
    const auto out = m.evaluate(f, true);
    CHECK(std::isfinite(out.energy));
    const auto ref = freecg::testing::reference_forward(m, f);
    CHECK(std::abs(out.energy - ref.energy) < 1e-10);
}

TEST_CASE("f32 precision mode runs and differs from f64 in the last bits") {
    ModelConfig cfg = small_config();
    Model m64(cfg);
    m64.init_params(70);
    ModelConfig cfg32 = cfg;
    cfg32.precision = Precision::f32;
    Model m32(cfg32);
    m32.params = m64.params;
    Rng rng(71);
    const MoleculeFrame f = random_frame(rng, 4);
    const double e64 = m64.evaluate(f, false).energy;
    const double e32 = m32.evaluate(f, false).energy;
    CHECK(std::isfinite(e32));
    CHECK(e64 != e32);
    CHECK(std::abs(e64 - e32) < 1e-3 * std::max(1.0, std::abs(e64)));
}

TEST_CASE("config validation") {
    ModelConfig bad = small_config();
    bad.groups = 3;  // does not divide 16
    CHECK_THROWS_AS(Model{bad}, ConfigError);
    ModelConfig bad2 = small_config();
    bad2.heads = 5;
    CHECK_THROWS_AS(Model{bad2}, ConfigError);
    ModelConfig bad3 = small_config();
    bad3.shuffle_multiplier = 0.75;
    CHECK_THROWS_AS(Model{bad3}, ConfigError);
}
