#pragma once

// shared test helpers: finite-difference oracles over tape programs

#include <cmath>
#include <functional>
#include <vector>

#include "freecg/tensor.hpp"

namespace freecg::testing {

using Builder =
    std::function<Tensor(Tape&, const std::vector<Tensor>&)>;  // returns a scalar root

struct FdReport {
    double max_rel = 0.0;
    double max_abs = 0.0;
};

inline std::vector<double> random_values(Rng& rng, std::int64_t n, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Central finite differences of the builder's scalar output w.r.t. every
// input, against the tape gradients. Relative error is measured against
// max(|fd|, scale_floor) so near-zero components do not blow up the ratio.
inline FdReport fd_check(const Builder& build, const std::vector<Shape>& shapes,
                         std::vector<std::vector<double>> values, double step = 1e-4) {
    FdReport rep;
    std::vector<double> analytic;
    {
        Tape tape;
        std::vector<Tensor> leaves;
        for (std::size_t i = 0; i < shapes.size(); ++i)
            leaves.push_back(tape.leaf(shapes[i], values[i], true));
        Tensor root = build(tape, leaves);
        auto gm = tape.backward(root);
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            const auto& g = gm.at(leaves[i]).values();
            analytic.insert(analytic.end(), g.begin(), g.end());
        }
    }
    auto eval = [&](const std::vector<std::vector<double>>& vals) {
        Tape tape;
        std::vector<Tensor> leaves;
        // requires_grad stays on: builders may run an inner backward
        for (std::size_t i = 0; i < shapes.size(); ++i)
            leaves.push_back(tape.leaf(shapes[i], vals[i], true));
        return build(tape, leaves).scalar();
    };
    double fd_scale = 0.0;
    std::vector<double> fd;
    for (std::size_t i = 0; i < shapes.size(); ++i)
        for (std::size_t j = 0; j < values[i].size(); ++j) {
            const double orig = values[i][j];
            values[i][j] = orig + step;
            const double up = eval(values);
            values[i][j] = orig - step;
            const double dn = eval(values);
            values[i][j] = orig;
            const double d = (up - dn) / (2.0 * step);
            fd.push_back(d);
            fd_scale = std::max(fd_scale, std::abs(d));
        }
    const double floor = std::max(1e-8, 1e-6 * fd_scale);
    for (std::size_t k = 0; k < fd.size(); ++k) {
        const double err = std::abs(analytic[k] - fd[k]);
        rep.max_abs = std::max(rep.max_abs, err);
        rep.max_rel = std::max(rep.max_rel, err / std::max(std::abs(fd[k]), floor));
    }
    return rep;
}

}  // namespace freecg::testing
