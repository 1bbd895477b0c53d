#include "freecg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace freecg {

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

AxisSplit axis_split(const Shape& shape, int axis) {
    AxisSplit sp{1, 1, 1};
    const int rank = static_cast<int>(shape.size());
    if (axis < 0 || axis >= rank) throw ShapeError("axis out of range for shape " + shape_str(shape));
    for (int i = 0; i < axis; ++i) sp.outer *= shape[static_cast<std::size_t>(i)];
    sp.n = shape[static_cast<std::size_t>(axis)];
    for (int i = axis + 1; i < rank; ++i) sp.inner *= shape[static_cast<std::size_t>(i)];
    return sp;
}

namespace {

void check_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
}

}  // namespace

const Shape& Tensor::shape() const { return tape->shape_of(id); }
const std::vector<double>& Tensor::values() const { return tape->values_of(id); }
std::int64_t Tensor::numel() const { return freecg::numel(shape()); }

double Tensor::scalar() const {
    const auto& v = values();
    if (v.size() != 1) throw ShapeError("scalar(): tensor has " + shape_str(shape()));
    return v[0];
}

void Tape::round_if_f32(std::vector<double>& v) const {
    if (precision_ == Precision::f32)
        for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

Tensor Tape::push(Shape shape, std::vector<double> values, std::vector<Tensor> parents, Vjp vjp,
                  bool force_requires_grad) {
    if (freecg::numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("tensor value count does not match shape " + shape_str(shape));
    round_if_f32(values);
    bool rg = force_requires_grad;
    for (const Tensor& p : parents) {
        if (p.tape != this) throw Error("op mixes tensors from different tapes");
        rg = rg || nodes_[static_cast<std::size_t>(p.id)].requires_grad;
    }
    nodes_.push_back(Node{std::move(shape), std::move(values), std::move(parents), rg,
                          std::move(vjp)});
    return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Tensor t) const {
    if (t.tape != this || t.id < 0 || t.id >= static_cast<int>(nodes_.size()))
        throw Error("tensor does not belong to this tape");
    return nodes_[static_cast<std::size_t>(t.id)];
}

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    return push(std::move(shape), std::move(values), {}, {}, requires_grad);
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
    return push(std::move(shape), std::move(values), {}, {}, false);
}

Tensor Tape::zeros(Shape shape) {
    const auto n = static_cast<std::size_t>(freecg::numel(shape));
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

// --- elementwise -------------------------------------------------------------

Tensor Tape::add(Tensor a, Tensor b) {
    check_same_shape("add", node(a).shape, node(b).shape);
    std::vector<double> v(node(a).values);
    const auto& bv = node(b).values;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
    return push(node(a).shape, std::move(v), {a, b},
                [](Tape&, const std::vector<Tensor>&, Tensor, Tensor g,
                   const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, g);
                    accum(1, g);
                });
}

Tensor Tape::sub(Tensor a, Tensor b) {
    check_same_shape("sub", node(a).shape, node(b).shape);
    std::vector<double> v(node(a).values);
    const auto& bv = node(b).values;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
    return push(node(a).shape, std::move(v), {a, b},
                [](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
                   const std::function<void(std::size_t, Tensor)>& accum) {
                    if (t.requires_grad(ps[0].id)) accum(0, g);
                    if (t.requires_grad(ps[1].id)) accum(1, t.scalar_mul(g, -1.0));
                });
}

Tensor Tape::mul(Tensor a, Tensor b) {
    check_same_shape("mul", node(a).shape, node(b).shape);
    std::vector<double> v(node(a).values);
    const auto& bv = node(b).values;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
    return push(node(a).shape, std::move(v), {a, b},
                [](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
                   const std::function<void(std::size_t, Tensor)>& accum) {
                    if (t.requires_grad(ps[0].id)) accum(0, t.mul(g, ps[1]));
                    if (t.requires_grad(ps[1].id)) accum(1, t.mul(g, ps[0]));
                });
}

Tensor Tape::scalar_mul(Tensor a, double c) {
    std::vector<double> v(node(a).values);
    for (double& x : v) x *= c;
    return push(node(a).shape, std::move(v), {a},
                [c](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                    const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.scalar_mul(g, c));
                });
}

Tensor Tape::add_const(Tensor a, double c) {
    std::vector<double> v(node(a).values);
    for (double& x : v) x += c;
    return push(node(a).shape, std::move(v), {a},
                [](Tape&, const std::vector<Tensor>&, Tensor, Tensor g,
                   const std::function<void(std::size_t, Tensor)>& accum) { accum(0, g); });
}

Tensor Tape::sigmoid(Tensor a) {
    std::vector<double> v(node(a).values);
    for (double& x : v) x = 1.0 / (1.0 + std::exp(-x));
    return push(node(a).shape, std::move(v), {a},
                [](Tape& t, const std::vector<Tensor>&, Tensor self, Tensor g,
                   const std::function<void(std::size_t, Tensor)>& accum) {
                    // g * s * (1 - s)
                    Tensor one_minus = t.add_const(t.scalar_mul(self, -1.0), 1.0);
                    accum(0, t.mul(g, t.mul(self, one_minus)));
                });
}

Tensor Tape::sin_(Tensor a) {
    std::vector<double> v(node(a).values);
    for (double& x : v) x = std::sin(x);
    return push(node(a).shape, std::move(v), {a},
                [](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
                   const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.mul(g, t.cos_(ps[0])));
                });
}

Tensor Tape::cos_(Tensor a) {
    std::vector<double> v(node(a).values);
    for (double& x : v) x = std::cos(x);
    return push(node(a).shape, std::move(v), {a},
                [](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
                   const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.scalar_mul(t.mul(g, t.sin_(ps[0])), -1.0));
                });
}

Tensor Tape::exp_(Tensor a) {
    std::vector<double> v(node(a).values);
    for (double& x : v) x = std::exp(x);
    return push(node(a).shape, std::move(v), {a},
                [](Tape& t, const std::vector<Tensor>&, Tensor self, Tensor g,
                   const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.mul(g, self));
                });
}

Tensor Tape::pow_safe(Tensor a, double p) {
    std::vector<double> v(node(a).values);
    for (double& x : v) {
        if (x < 0.0) throw ContractViolation("pow_safe: negative input");
        x = x == 0.0 ? 0.0 : std::pow(x, p);
    }
    return push(node(a).shape, std::move(v), {a},
                [p](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
                    const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.mul(g, t.scalar_mul(t.pow_safe(ps[0], p - 1.0), p)));
                });
}

// --- shape ---------------------------------------------------------------------

Tensor Tape::reshape(Tensor a, Shape shape) {
    if (freecg::numel(shape) != freecg::numel(node(a).shape))
        throw ShapeError("reshape: " + shape_str(node(a).shape) + " to " + shape_str(shape) +
                         " changes element count");
    Shape back = node(a).shape;
    return push(std::move(shape), node(a).values, {a},
                [back](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                       const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.reshape(g, back));
                });
}

Tensor Tape::expand(Tensor a, int axis, std::int64_t n) {
    Shape out = node(a).shape;
    if (axis < 0 || axis > static_cast<int>(out.size()))
        throw ShapeError("expand: axis out of range for " + shape_str(out));
    out.insert(out.begin() + axis, n);
    const AxisSplit sp = axis_split(out, axis);
    const auto& av = node(a).values;
    std::vector<double> v(static_cast<std::size_t>(sp.outer * sp.n * sp.inner));
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t k = 0; k < sp.n; ++k)
            for (std::int64_t i = 0; i < sp.inner; ++i)
                v[static_cast<std::size_t>((o * sp.n + k) * sp.inner + i)] =
                    av[static_cast<std::size_t>(o * sp.inner + i)];
    return push(std::move(out), std::move(v), {a},
                [axis](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                       const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.sum(g, axis));
                });
}

Tensor Tape::sum(Tensor a, int axis) {
    const AxisSplit sp = axis_split(node(a).shape, axis);
    Shape out = node(a).shape;
    const std::int64_t n = out[static_cast<std::size_t>(axis)];
    out.erase(out.begin() + axis);
    const auto& av = node(a).values;
    std::vector<double> v(static_cast<std::size_t>(sp.outer * sp.inner), 0.0);
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t k = 0; k < sp.n; ++k)
            for (std::int64_t i = 0; i < sp.inner; ++i)
                v[static_cast<std::size_t>(o * sp.inner + i)] +=
                    av[static_cast<std::size_t>((o * sp.n + k) * sp.inner + i)];
    return push(std::move(out), std::move(v), {a},
                [axis, n](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                          const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.expand(g, axis, n));
                });
}

Tensor Tape::slice(Tensor a, int axis, std::int64_t start, std::int64_t len) {
    const AxisSplit sp = axis_split(node(a).shape, axis);
    if (start < 0 || len < 0 || start + len > sp.n)
        throw ShapeError("slice: range out of bounds for " + shape_str(node(a).shape));
    Shape out = node(a).shape;
    out[static_cast<std::size_t>(axis)] = len;
    const auto& av = node(a).values;
    std::vector<double> v(static_cast<std::size_t>(sp.outer * len * sp.inner));
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t k = 0; k < len; ++k)
            for (std::int64_t i = 0; i < sp.inner; ++i)
                v[static_cast<std::size_t>((o * len + k) * sp.inner + i)] =
                    av[static_cast<std::size_t>((o * sp.n + start + k) * sp.inner + i)];
    const std::int64_t total = sp.n;
    return push(std::move(out), std::move(v), {a},
                [axis, start, total](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                                     const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.pad_axis(g, axis, start, total));
                });
}

Tensor Tape::pad_axis(Tensor a, int axis, std::int64_t start, std::int64_t total) {
    const AxisSplit sp = axis_split(node(a).shape, axis);
    if (start < 0 || start + sp.n > total)
        throw ShapeError("pad_axis: range out of bounds for " + shape_str(node(a).shape));
    Shape out = node(a).shape;
    out[static_cast<std::size_t>(axis)] = total;
    const auto& av = node(a).values;
    std::vector<double> v(static_cast<std::size_t>(sp.outer * total * sp.inner), 0.0);
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t k = 0; k < sp.n; ++k)
            for (std::int64_t i = 0; i < sp.inner; ++i)
                v[static_cast<std::size_t>((o * total + start + k) * sp.inner + i)] =
                    av[static_cast<std::size_t>((o * sp.n + k) * sp.inner + i)];
    const std::int64_t len = sp.n;
    return push(std::move(out), std::move(v), {a},
                [axis, start, len](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                                   const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.slice(g, axis, start, len));
                });
}

Tensor Tape::concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    Shape out = node(xs[0]).shape;
    std::int64_t total = 0;
    std::vector<std::int64_t> sizes;
    for (const Tensor& x : xs) {
        Shape s = node(x).shape;
        const std::int64_t len = s[static_cast<std::size_t>(axis)];
        s[static_cast<std::size_t>(axis)] = out[static_cast<std::size_t>(axis)];
        check_same_shape("concat", out, s);
        sizes.push_back(len);
        total += len;
    }
    out[static_cast<std::size_t>(axis)] = total;
    const AxisSplit sp = axis_split(out, axis);
    std::vector<double> v(static_cast<std::size_t>(sp.outer * total * sp.inner));
    std::int64_t off = 0;
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
        const auto& av = node(xs[xi]).values;
        const std::int64_t n = sizes[xi];
        for (std::int64_t o = 0; o < sp.outer; ++o)
            for (std::int64_t k = 0; k < n; ++k)
                for (std::int64_t i = 0; i < sp.inner; ++i)
                    v[static_cast<std::size_t>((o * total + off + k) * sp.inner + i)] =
                        av[static_cast<std::size_t>((o * n + k) * sp.inner + i)];
        off += n;
    }
    return push(std::move(out), std::move(v), xs,
                [axis, sizes](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
                              const std::function<void(std::size_t, Tensor)>& accum) {
                    std::int64_t start = 0;
                    for (std::size_t i = 0; i < sizes.size(); ++i) {
                        if (t.requires_grad(ps[i].id)) accum(i, t.slice(g, axis, start, sizes[i]));
                        start += sizes[i];
                    }
                });
}

std::vector<Tensor> Tape::split(Tensor a, int axis, const std::vector<std::int64_t>& sizes) {
    std::vector<Tensor> out;
    std::int64_t start = 0;
    for (std::int64_t len : sizes) {
        out.push_back(slice(a, axis, start, len));
        start += len;
    }
    if (start != node(a).shape[static_cast<std::size_t>(axis)])
        throw ShapeError("split: sizes do not cover axis of " + shape_str(node(a).shape));
    return out;
}

// --- indexed -------------------------------------------------------------------

Tensor Tape::gather_rows(Tensor a, std::shared_ptr<const std::vector<std::int64_t>> idx) {
    const Shape& as = node(a).shape;
    if (as.empty()) throw ShapeError("gather_rows: input has rank 0");
    const std::int64_t rows = as[0];
    std::int64_t width = 1;
    for (std::size_t k = 1; k < as.size(); ++k) width *= as[k];
    Shape out = as;
    out[0] = static_cast<std::int64_t>(idx->size());
    const auto& av = node(a).values;
    std::vector<double> v(static_cast<std::size_t>(out[0] * width));
    for (std::size_t r = 0; r < idx->size(); ++r) {
        const std::int64_t src = (*idx)[r];
        if (src < 0 || src >= rows) throw ShapeError("gather_rows: index out of range");
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(src * width), width,
                    v.begin() + static_cast<std::ptrdiff_t>(static_cast<std::int64_t>(r) * width));
    }
    return push(std::move(out), std::move(v), {a},
                [idx, rows](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                            const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.segment_sum(g, idx, rows));
                });
}

Tensor Tape::segment_sum(Tensor a, std::shared_ptr<const std::vector<std::int64_t>> seg,
                         std::int64_t n_segments) {
    const Shape& as = node(a).shape;
    if (as.empty()) throw ShapeError("segment_sum: input has rank 0");
    const std::int64_t rows = as[0];
    if (static_cast<std::int64_t>(seg->size()) != rows)
        throw ShapeError("segment_sum: segment ids do not match rows of " + shape_str(as));
    std::int64_t width = 1;
    for (std::size_t k = 1; k < as.size(); ++k) width *= as[k];
    Shape out = as;
    out[0] = n_segments;
    const auto& av = node(a).values;
    std::vector<double> v(static_cast<std::size_t>(n_segments * width), 0.0);
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t s = (*seg)[static_cast<std::size_t>(r)];
        if (s < 0 || s >= n_segments) throw ShapeError("segment_sum: segment id out of range");
        for (std::int64_t c = 0; c < width; ++c)
            v[static_cast<std::size_t>(s * width + c)] += av[static_cast<std::size_t>(r * width + c)];
    }
    return push(std::move(out), std::move(v), {a},
                [seg](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                      const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.gather_rows(g, seg));
                });
}

Tensor Tape::select_gather(Tensor a, int axis,
                           std::shared_ptr<const std::vector<std::int64_t>> idx) {
    const AxisSplit sp = axis_split(node(a).shape, axis);
    if (static_cast<std::int64_t>(idx->size()) != sp.outer * sp.inner)
        throw ShapeError("select_gather: index count does not match slots of " +
                         shape_str(node(a).shape));
    Shape out = node(a).shape;
    out.erase(out.begin() + axis);
    const auto& av = node(a).values;
    std::vector<double> v(static_cast<std::size_t>(sp.outer * sp.inner));
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t i = 0; i < sp.inner; ++i) {
            const std::int64_t k = (*idx)[static_cast<std::size_t>(o * sp.inner + i)];
            if (k < 0 || k >= sp.n) throw ShapeError("select_gather: index out of range");
            v[static_cast<std::size_t>(o * sp.inner + i)] =
                av[static_cast<std::size_t>((o * sp.n + k) * sp.inner + i)];
        }
    const std::int64_t n = sp.n;
    return push(std::move(out), std::move(v), {a},
                [axis, idx, n](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                               const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.select_scatter(g, axis, idx, n));
                });
}

Tensor Tape::select_scatter(Tensor a, int axis,
                            std::shared_ptr<const std::vector<std::int64_t>> idx, std::int64_t n) {
    Shape out = node(a).shape;
    if (axis < 0 || axis > static_cast<int>(out.size()))
        throw ShapeError("select_scatter: axis out of range for " + shape_str(out));
    out.insert(out.begin() + axis, n);
    const AxisSplit sp = axis_split(out, axis);
    if (static_cast<std::int64_t>(idx->size()) != sp.outer * sp.inner)
        throw ShapeError("select_scatter: index count does not match slots");
    const auto& av = node(a).values;
    std::vector<double> v(static_cast<std::size_t>(sp.outer * n * sp.inner), 0.0);
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t i = 0; i < sp.inner; ++i) {
            const std::int64_t k = (*idx)[static_cast<std::size_t>(o * sp.inner + i)];
            if (k < 0 || k >= n) throw ShapeError("select_scatter: index out of range");
            v[static_cast<std::size_t>((o * n + k) * sp.inner + i)] =
                av[static_cast<std::size_t>(o * sp.inner + i)];
        }
    return push(std::move(out), std::move(v), {a},
                [axis, idx](Tape& t, const std::vector<Tensor>&, Tensor, Tensor g,
                            const std::function<void(std::size_t, Tensor)>& accum) {
                    accum(0, t.select_gather(g, axis, idx));
                });
}

std::pair<Tensor, std::shared_ptr<const std::vector<std::int64_t>>> Tape::max_over_axis(Tensor a,
                                                                                        int axis) {
    const AxisSplit sp = axis_split(node(a).shape, axis);
    const auto& av = node(a).values;
    auto idx = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(sp.outer * sp.inner), 0);
    for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t i = 0; i < sp.inner; ++i) {
            std::int64_t best = 0;
            double best_v = av[static_cast<std::size_t>((o * sp.n + 0) * sp.inner + i)];
            for (std::int64_t k = 1; k < sp.n; ++k) {
                const double v = av[static_cast<std::size_t>((o * sp.n + k) * sp.inner + i)];
                if (v > best_v) {  // strict: ties keep the smallest index
                    best_v = v;
                    best = k;
                }
            }
            (*idx)[static_cast<std::size_t>(o * sp.inner + i)] = best;
        }
    return {select_gather(a, axis, idx), idx};
}

// --- linear algebra ---------------------------------------------------------------

Tensor Tape::linear(Tensor x, Tensor w, int axis, bool transpose_w, Tensor bias) {
    const Shape& ws = node(w).shape;
    if (ws.size() != 2) throw ShapeError("linear: weight must be rank 2, got " + shape_str(ws));
    const std::int64_t rows = ws[0], cols = ws[1];
    const std::int64_t in_dim = transpose_w ? rows : cols;
    const std::int64_t out_dim = transpose_w ? cols : rows;
    const AxisSplit sp = axis_split(node(x).shape, axis);
    if (sp.n != in_dim)
        throw ShapeError("linear: weight " + shape_str(ws) + (transpose_w ? " (transposed)" : "") +
                         " does not match axis " + std::to_string(axis) + " of " +
                         shape_str(node(x).shape));
    if (bias.defined()) {
        check_same_shape("linear bias", node(bias).shape, Shape{out_dim});
    }
    Shape out = node(x).shape;
    out[static_cast<std::size_t>(axis)] = out_dim;
    const auto& xv = node(x).values;
    const auto& wv = node(w).values;
    const double* bp = bias.defined() ? node(bias).values.data() : nullptr;
    std::vector<double> v(static_cast<std::size_t>(sp.outer * out_dim * sp.inner), 0.0);
    if (sp.inner == 1 && !transpose_w) {
        // row-major dot products
        for (std::int64_t o = 0; o < sp.outer; ++o) {
            const double* xr = xv.data() + o * in_dim;
            double* ov = v.data() + o * out_dim;
            for (std::int64_t r = 0; r < out_dim; ++r) {
                const double* wr = wv.data() + r * cols;
                double acc = bp ? bp[r] : 0.0;
                for (std::int64_t k = 0; k < in_dim; ++k) acc += wr[k] * xr[k];
                ov[r] = acc;
            }
        }
    } else if (sp.inner == 1) {
        // transposed: accumulate rank-1 updates so W is read contiguously
        for (std::int64_t o = 0; o < sp.outer; ++o) {
            const double* xr = xv.data() + o * in_dim;
            double* ov = v.data() + o * out_dim;
            if (bp)
                for (std::int64_t r = 0; r < out_dim; ++r) ov[r] = bp[r];
            for (std::int64_t k = 0; k < in_dim; ++k) {
                const double xk = xr[k];
                if (xk == 0.0) continue;
                const double* wr = wv.data() + k * cols;
                for (std::int64_t r = 0; r < out_dim; ++r) ov[r] += xk * wr[r];
            }
        }
    } else {
        for (std::int64_t o = 0; o < sp.outer; ++o)
            for (std::int64_t r = 0; r < out_dim; ++r) {
                const double init = bp ? bp[r] : 0.0;
                double* ov = v.data() + (o * out_dim + r) * sp.inner;
                for (std::int64_t i = 0; i < sp.inner; ++i) ov[i] = init;
                for (std::int64_t k = 0; k < in_dim; ++k) {
                    const double wv_rk = transpose_w ? wv[static_cast<std::size_t>(k * cols + r)]
                                                     : wv[static_cast<std::size_t>(r * cols + k)];
                    if (wv_rk == 0.0) continue;
                    const double* xr = xv.data() + (o * in_dim + k) * sp.inner;
                    for (std::int64_t i = 0; i < sp.inner; ++i) ov[i] += wv_rk * xr[i];
                }
            }
    }
    std::vector<Tensor> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    const bool has_bias = bias.defined();
    return push(std::move(out), std::move(v), std::move(parents),
                [axis, transpose_w, has_bias](Tape& t, const std::vector<Tensor>& ps, Tensor,
                                              Tensor g,
                                              const std::function<void(std::size_t, Tensor)>& accum) {
                    if (t.requires_grad(ps[0].id)) accum(0, t.linear(g, ps[1], axis, !transpose_w));
                    if (t.requires_grad(ps[1].id)) {
                        if (transpose_w)
                            accum(1, t.outer(ps[0], g, axis));
                        else
                            accum(1, t.outer(g, ps[0], axis));
                    }
                    if (has_bias && t.requires_grad(ps[2].id)) {
                        // drop every axis except `axis`, highest first so the
                        // remaining positions stay valid
                        Tensor s = g;
                        for (int ax = static_cast<int>(t.shape_of(g.id).size()) - 1; ax >= 0; --ax)
                            if (ax != axis) s = t.sum(s, ax);
                        accum(2, s);
                    }
                });
}

Tensor Tape::outer(Tensor a, Tensor b, int axis) {
    Shape sa = node(a).shape, sb = node(b).shape;
    const AxisSplit pa = axis_split(sa, axis);
    const AxisSplit pb = axis_split(sb, axis);
    Shape sa_cmp = sa, sb_cmp = sb;
    sa_cmp[static_cast<std::size_t>(axis)] = 0;
    sb_cmp[static_cast<std::size_t>(axis)] = 0;
    check_same_shape("outer", sa_cmp, sb_cmp);
    const auto& avv = node(a).values;
    const auto& bvv = node(b).values;
    std::vector<double> v(static_cast<std::size_t>(pa.n * pb.n), 0.0);
    if (pa.inner == 1) {
        // sum of rank-1 updates, contiguous in the trailing index
        for (std::int64_t o = 0; o < pa.outer; ++o) {
            const double* ar = avv.data() + o * pa.n;
            const double* br = bvv.data() + o * pb.n;
            for (std::int64_t r = 0; r < pa.n; ++r) {
                const double av = ar[r];
                if (av == 0.0) continue;
                double* vr = v.data() + r * pb.n;
                for (std::int64_t c = 0; c < pb.n; ++c) vr[c] += av * br[c];
            }
        }
    } else {
        for (std::int64_t o = 0; o < pa.outer; ++o)
            for (std::int64_t r = 0; r < pa.n; ++r)
                for (std::int64_t c = 0; c < pb.n; ++c) {
                    double acc = 0.0;
                    const double* ar = avv.data() + (o * pa.n + r) * pa.inner;
                    const double* br = bvv.data() + (o * pb.n + c) * pb.inner;
                    for (std::int64_t i = 0; i < pa.inner; ++i) acc += ar[i] * br[i];
                    v[static_cast<std::size_t>(r * pb.n + c)] += acc;
                }
    }
    return push({pa.n, pb.n}, std::move(v), {a, b},
                [axis](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
                       const std::function<void(std::size_t, Tensor)>& accum) {
                    // d a = g . b, d b = g^T . a (g acts as the weight)
                    if (t.requires_grad(ps[0].id)) accum(0, t.linear(ps[1], g, axis, false));
                    if (t.requires_grad(ps[1].id)) accum(1, t.linear(ps[0], g, axis, true));
                });
}

// --- custom -------------------------------------------------------------------

Tensor Tape::custom(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                    Vjp vjp) {
    return push(std::move(shape), std::move(values), std::move(parents), std::move(vjp));
}

// --- backward -----------------------------------------------------------------

Tape::GradMap Tape::backward(Tensor root) {
    if (root.tape != this) throw Error("backward: root is not on this tape");
    if (freecg::numel(node(root).shape) != 1)
        throw ContractViolation("backward: root must be scalar, got " +
                                shape_str(node(root).shape));
    GradMap gm;
    gm.tape_ = this;
    gm.grad_ids_.assign(static_cast<std::size_t>(root.id) + 1, -1);
    {
        const Shape& rs = node(root).shape;
        gm.grad_ids_[static_cast<std::size_t>(root.id)] =
            constant(rs, std::vector<double>(1, 1.0)).id;
    }
    for (int id = root.id; id >= 0; --id) {
        const int gid = gm.grad_ids_[static_cast<std::size_t>(id)];
        if (gid < 0) continue;
        const Node& nd = nodes_[static_cast<std::size_t>(id)];
        if (!nd.requires_grad || !nd.vjp) continue;
        Tensor self{this, id};
        Tensor grad{this, gid};
        auto accum = [&](std::size_t slot, Tensor contrib) {
            const Tensor& parent = nodes_[static_cast<std::size_t>(id)].parents[slot];
            if (!nodes_[static_cast<std::size_t>(parent.id)].requires_grad) return;
            check_same_shape("vjp accumulate", node(contrib).shape, node(parent).shape);
            int& cell = gm.grad_ids_[static_cast<std::size_t>(parent.id)];
            cell = cell < 0 ? contrib.id : add(Tensor{this, cell}, contrib).id;
        };
        nd.vjp(*this, nd.parents, self, grad, accum);
    }
    return gm;
}

Tensor Tape::GradMap::at(Tensor t) const {
    if (t.tape != tape_) throw Error("GradMap: tensor is not on the tape");
    if (has(t)) return Tensor{tape_, grad_ids_[static_cast<std::size_t>(t.id)]};
    return tape_->zeros(tape_->shape_of(t.id));
}

bool Tape::GradMap::has(Tensor t) const {
    return t.id >= 0 && t.id < static_cast<int>(grad_ids_.size()) &&
           grad_ids_[static_cast<std::size_t>(t.id)] >= 0;
}

}  // namespace freecg
