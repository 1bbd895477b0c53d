#pragma once

// Dense-tensor engine with reverse-mode differentiation.
//
// Design notes:
//  - Eager evaluation: every op computes its value when recorded.
//  - backward() is graph-building: each vector-Jacobian product is expressed
//    through the same op set and lands on the tape, so gradients are
//    themselves differentiable (force-matching losses need d/dparams of
//    d energy/d positions).
//  - Node ids grow monotonically, so descending-id traversal is a reverse
//    topological order. Fan-out gradients accumulate additively.
//  - Determinism: identical op sequences produce bit-identical values;
//    segment sums accumulate in ascending row order.
//  - Subgradient conventions: max_over_axis routes everything to the argmax,
//    ties to the smallest index; pow_safe (and therefore sqrt/norm) uses 0
//    at x = 0.
//  - Precision::f32 rounds every freshly computed buffer through float,
//    emulating 32-bit storage on the single 64-bit code path.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "freecg/common.hpp"

namespace freecg {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Precision { f64, f32 };

class Tape;

struct Tensor {
    Tape* tape = nullptr;
    int id = -1;

    bool defined() const { return tape != nullptr && id >= 0; }
    const Shape& shape() const;
    const std::vector<double>& values() const;
    std::int64_t numel() const;
    double scalar() const;  // single-element tensors only
};

class Tape {
public:
    explicit Tape(Precision p = Precision::f64) : precision_(p) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Precision precision() const { return precision_; }

    // --- creation -----------------------------------------------------------
    Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);
    Tensor constant(Shape shape, std::vector<double> values);
    Tensor zeros(Shape shape);
    Tensor scalar_const(double v) { return constant({1}, {v}); }

    // --- elementwise --------------------------------------------------------
    Tensor add(Tensor a, Tensor b);
    Tensor sub(Tensor a, Tensor b);
    Tensor mul(Tensor a, Tensor b);
    Tensor scalar_mul(Tensor a, double c);
    Tensor add_const(Tensor a, double c);
    Tensor sigmoid(Tensor a);
    Tensor sin_(Tensor a);
    Tensor cos_(Tensor a);
    Tensor exp_(Tensor a);
    // x > 0 -> x^p, x == 0 -> 0 (domain x >= 0)
    Tensor pow_safe(Tensor a, double p);

    // --- shape --------------------------------------------------------------
    Tensor reshape(Tensor a, Shape shape);
    Tensor expand(Tensor a, int axis, std::int64_t n);  // broadcast: insert axis
    Tensor sum(Tensor a, int axis);
    Tensor slice(Tensor a, int axis, std::int64_t start, std::int64_t len);
    Tensor pad_axis(Tensor a, int axis, std::int64_t start, std::int64_t total);
    Tensor concat(const std::vector<Tensor>& xs, int axis);

    // --- indexed ------------------------------------------------------------
    Tensor gather_rows(Tensor a, std::shared_ptr<const std::vector<std::int64_t>> idx);
    // out[seg[r]] += a[r], ascending r; empty segments give zero rows
    Tensor segment_sum(Tensor a, std::shared_ptr<const std::vector<std::int64_t>> seg,
                       std::int64_t n_segments);
    // per (outer,inner) slot pick index idx_slot along axis
    Tensor select_gather(Tensor a, int axis, std::shared_ptr<const std::vector<std::int64_t>> idx);
    Tensor select_scatter(Tensor a, int axis, std::shared_ptr<const std::vector<std::int64_t>> idx,
                          std::int64_t n);

    // --- linear algebra -----------------------------------------------------
    // W is [out,in]; maps x's `axis` (in -> out). transpose_w applies W^T.
    Tensor linear(Tensor x, Tensor w, int axis, bool transpose_w = false, Tensor bias = {});
    // out[i,j] = sum over all positions with axis-values i (from a) and j
    // (from b) of a*b; the weight-gradient pairing of `linear`
    Tensor outer(Tensor a, Tensor b, int axis);

    // --- compositions -------------------------------------------------------
    Tensor neg(Tensor a) { return scalar_mul(a, -1.0); }
    Tensor silu(Tensor a) { return mul(a, sigmoid(a)); }
    Tensor sqrt_(Tensor a) { return pow_safe(a, 0.5); }
    Tensor dot(Tensor a, Tensor b, int axis) { return sum(mul(a, b), axis); }
    Tensor norm(Tensor a, int axis) { return pow_safe(sum(mul(a, a), axis), 0.5); }
    std::vector<Tensor> split(Tensor a, int axis, const std::vector<std::int64_t>& sizes);
    // value and argmax (ties: smallest index); gradient flows to the argmax
    std::pair<Tensor, std::shared_ptr<const std::vector<std::int64_t>>> max_over_axis(Tensor a,
                                                                                      int axis);

    // --- custom nodes (CG kernels register through this) ---------------------
    // vjp(tape, parents, self, grad, accumulate(parent_slot, contribution))
    using Vjp = std::function<void(
        Tape&, const std::vector<Tensor>&, Tensor, Tensor,
        const std::function<void(std::size_t, Tensor)>&)>;
    Tensor custom(Shape shape, std::vector<double> values, std::vector<Tensor> parents, Vjp vjp);

    // --- autodiff -----------------------------------------------------------
    class GradMap {
    public:
        // gradient of the root w.r.t. `t`; zeros when no path exists
        Tensor at(Tensor t) const;
        bool has(Tensor t) const;

    private:
        friend class Tape;
        Tape* tape_ = nullptr;
        std::vector<int> grad_ids_;  // -1: none
    };

    // root must be a single-element tensor recorded on this tape
    GradMap backward(Tensor root);

    std::size_t size() const { return nodes_.size(); }
    const Shape& shape_of(int id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
    const std::vector<double>& values_of(int id) const {
        return nodes_[static_cast<std::size_t>(id)].values;
    }
    bool requires_grad(int id) const {
        return nodes_[static_cast<std::size_t>(id)].requires_grad;
    }

private:
    struct Node {
        Shape shape;
        std::vector<double> values;
        std::vector<Tensor> parents;
        bool requires_grad = false;
        Vjp vjp;  // empty for leaves/constants
    };

    Tensor push(Shape shape, std::vector<double> values, std::vector<Tensor> parents, Vjp vjp,
                bool force_requires_grad = false);
    void round_if_f32(std::vector<double>& v) const;
    const Node& node(Tensor t) const;

    Precision precision_;
    // deque: node references stay valid while a node's own vjp is executing
    std::deque<Node> nodes_;
};

// (outer, n, inner) decomposition of `shape` around `axis`
struct AxisSplit {
    std::int64_t outer, n, inner;
};
AxisSplit axis_split(const Shape& shape, int axis);

}  // namespace freecg
