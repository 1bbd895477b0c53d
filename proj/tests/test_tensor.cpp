#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "freecg/tensor.hpp"
#include "support.hpp"

using namespace freecg;
using freecg::testing::fd_check;
using freecg::testing::random_values;

namespace {

// scalar root: fixed pseudorandom projection of an arbitrary-shaped output
// (seeded from the value count so repeated builds see identical weights)
Tensor project(Tape& t, Tensor x, std::uint64_t seed) {
    Rng rng(seed);
    auto w = random_values(rng, numel(t.shape_of(x.id)));
    Tensor flat = t.reshape(x, {static_cast<std::int64_t>(w.size())});
    return t.sum(t.mul(flat, t.constant({static_cast<std::int64_t>(w.size())}, w)), 0);
}

}  // namespace

TEST_CASE("gradients of every op match central finite differences") {
    Rng seeder(101);
    auto run = [&](const std::string& name, const std::vector<Shape>& shapes,
                   const freecg::testing::Builder& b, double lo = -1.0, double hi = 1.0) {
        Rng rng(seeder.bits());
        std::vector<std::vector<double>> vals;
        for (const Shape& s : shapes) vals.push_back(random_values(rng, numel(s), lo, hi));
        const auto rep = fd_check(b, shapes, vals);
        INFO(name);
        CHECK(rep.max_rel < 1e-6);
    };

    run("add", {{3, 4}, {3, 4}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.add(xs[0], xs[1]), 7177);
    });
    run("sub", {{3, 4}, {3, 4}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.sub(xs[0], xs[1]), 7177);
    });
    run("mul", {{2, 3, 4}, {2, 3, 4}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.mul(xs[0], xs[1]), 7177);
    });
    run("scalar_mul+add_const", {{5}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.add_const(t.scalar_mul(xs[0], -1.7), 0.3), 7177);
    });
    run("sigmoid", {{7}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.sigmoid(xs[0]), 7177);
    });
    run("silu", {{7}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.silu(xs[0]), 7177);
    });
    run("sin/cos", {{6}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.mul(t.sin_(xs[0]), t.cos_(xs[0])), 7177);
    });
    run("exp", {{6}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.exp_(xs[0]), 7177);
    });
    run("sqrt", {{6}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.sqrt_(xs[0]), 7177);
    }, 0.5, 2.0);
    run("pow_safe(-1)", {{6}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.pow_safe(xs[0], -1.0), 7177);
    }, 0.5, 2.0);
    run("norm", {{4, 3}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.norm(xs[0], 1), 7177);
    });
    run("dot", {{4, 3}, {4, 3}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.dot(xs[0], xs[1], 1), 7177);
    });
    run("sum axis0", {{3, 4}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.sum(xs[0], 0), 7177);
    });
    run("sum axis1 rank3", {{2, 3, 4}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.sum(xs[0], 1), 7177);
    });
    run("expand", {{2, 4}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.expand(xs[0], 1, 3), 7177);
    });
    run("reshape", {{2, 6}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.reshape(xs[0], {3, 2, 2}), 7177);
    });
    run("slice+pad+concat", {{3, 5}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        Tensor a = t.slice(xs[0], 1, 0, 2);
        Tensor b = t.slice(xs[0], 1, 2, 3);
        return project(t, t.concat({b, a}, 1), 7177);
    });
    run("linear", {{4, 3}, {5, 3}, {5}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.linear(xs[0], xs[1], 1, false, xs[2]), 7177);
    });
    run("linear transposed rank3", {{2, 4, 3}, {4, 5}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.linear(xs[0], xs[1], 1, true), 7177);
    });
    run("outer", {{4, 3, 2}, {4, 5, 2}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.outer(xs[0], xs[1], 1), 7177);
    });
    run("gather/segment", {{5, 3}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        auto idx = std::make_shared<const std::vector<std::int64_t>>(
            std::vector<std::int64_t>{4, 0, 0, 2, 3, 1});
        auto seg = std::make_shared<const std::vector<std::int64_t>>(
            std::vector<std::int64_t>{0, 1, 1, 3, 0, 2});
        return project(t, t.segment_sum(t.gather_rows(xs[0], idx), seg, 4), 7177);
    });
    run("max_over_axis", {{4, 6}}, [&](Tape& t, const std::vector<Tensor>& xs) {
        return project(t, t.max_over_axis(xs[0], 1).first, 7177);
    });
}

TEST_CASE("second-order gradients flow through recorded backward") {
    // psi(x, w) = sum_i (d phi / d x_i)^2 with phi = sum(silu(linear(x, w)))
    Rng rng(202);
    const std::vector<Shape> shapes{{3, 4}, {4, 4}};
    std::vector<std::vector<double>> vals{random_values(rng, 12), random_values(rng, 16)};
    auto build = [](Tape& t, const std::vector<Tensor>& xs) {
        Tensor phi = t.sum(t.sum(t.silu(t.linear(xs[0], xs[1], 1, false)), 1), 0);
        auto gm = t.backward(phi);
        Tensor gx = gm.at(xs[0]);
        return t.sum(t.sum(t.mul(gx, gx), 1), 0);
    };
    const auto rep = fd_check(build, shapes, vals);
    CHECK(rep.max_rel < 1e-6);
}

TEST_CASE("silu value and derivative at 0") {
    Tape t;
    Tensor x = t.leaf({1}, {0.0}, true);
    Tensor y = t.silu(x);
    CHECK(y.scalar() == 0.0);
    auto gm = t.backward(y);
    CHECK(gm.at(x).scalar() == 0.5);
}

TEST_CASE("segment_sum over an empty segment yields a zero row") {
    Tape t;
    Tensor x = t.leaf({2, 3}, {1, 2, 3, 4, 5, 6}, false);
    auto seg = std::make_shared<const std::vector<std::int64_t>>(std::vector<std::int64_t>{0, 0});
    Tensor s = t.segment_sum(x, seg, 3);
    const auto& v = s.values();
    CHECK(v[0] == 5.0);
    CHECK(v[3] == 0.0);
    CHECK(v[4] == 0.0);
    CHECK(v[5] == 0.0);
    CHECK(v[6] == 0.0);
}

TEST_CASE("backward of sum gives ones; backward of dot(x,x) gives 2x") {
    Tape t;
    Tensor x = t.leaf({4}, {1.0, -2.0, 0.5, 3.0}, true);
    auto gm = t.backward(t.sum(x, 0));
    for (double g : gm.at(x).values()) CHECK(g == 1.0);

    Tape t2;
    Tensor y = t2.leaf({4}, {1.0, -2.0, 0.5, 3.0}, true);
    auto gm2 = t2.backward(t2.dot(y, y, 0));
    const auto& gy = gm2.at(y).values();
    const auto& yv = y.values();
    for (std::size_t i = 0; i < 4; ++i) CHECK(gy[i] == 2.0 * yv[i]);
}

TEST_CASE("non-scalar backward root is a contract violation") {
    Tape t;
    Tensor x = t.leaf({3}, {1, 2, 3}, true);
    CHECK_THROWS_AS(t.backward(x), ContractViolation);
}

TEST_CASE("a tensor without requires_grad receives no gradient") {
    Tape t;
    Tensor x = t.leaf({2}, {1.0, 2.0}, true);
    Tensor c = t.constant({2}, {3.0, 4.0});
    auto gm = t.backward(t.sum(t.mul(x, c), 0));
    CHECK(gm.has(x));
    CHECK_FALSE(gm.has(c));
    // at() still answers with zeros
    for (double g : gm.at(c).values()) CHECK(g == 0.0);
}

TEST_CASE("max ties break to the smallest index") {
    Tape t;
    Tensor x = t.leaf({1, 4}, {2.0, 7.0, 7.0, 1.0}, true);
    auto [m, idx] = t.max_over_axis(x, 1);
    CHECK(m.values()[0] == 7.0);
    CHECK((*idx)[0] == 1);
    auto gm = t.backward(t.sum(m, 0));
    const auto& g = gm.at(x).values();
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 1.0);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == 0.0);
}

TEST_CASE("shape mismatches raise structured errors naming the op") {
    Tape t;
    Rng rng(7);
    Tensor a = t.leaf({2, 3}, random_values(rng, 6), false);
    Tensor b = t.leaf({3, 2}, {1, 2, 3, 4, 5, 6}, false);
    try {
        t.add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[3,2]") != std::string::npos);
    }
}

TEST_CASE("identical forward passes are bit-identical") {
    auto run = [] {
        Tape t;
        Rng rng(99);
        Tensor x = t.leaf({6, 8}, random_values(rng, 48), true);
        Tensor w = t.leaf({8, 8}, random_values(rng, 64), true);
        Tensor y = t.silu(t.linear(x, w, 1, false));
        auto seg = std::make_shared<const std::vector<std::int64_t>>(
            std::vector<std::int64_t>{0, 1, 0, 2, 1, 0});
        return t.sum(t.sum(t.segment_sum(y, seg, 3), 1), 0).scalar();
    };
    const double a = run();
    const double b = run();
    CHECK(a == b);
}

TEST_CASE("f32 precision rounds stored values through float") {
    Tape t64(Precision::f64);
    Tape t32(Precision::f32);
    const double v = 1.0 + 1e-12;
    CHECK(t64.leaf({1}, {v}, false).scalar() == v);
    CHECK(t32.leaf({1}, {v}, false).scalar() == static_cast<double>(static_cast<float>(v)));
}
