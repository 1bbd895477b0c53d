#include "freecg/cg_ops.hpp"

#include <algorithm>
#include <type_traits>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace freecg {

namespace {

std::shared_ptr<GroupCgPlan> build_plan(int channels, int groups, PathMode mode,
                                        const std::vector<CgPath>& paths) {
    auto plan = std::make_shared<GroupCgPlan>();
    plan->channels = channels;
    plan->groups = groups;
    plan->block = channels / groups;
    plan->mode = mode;
    plan->paths = paths;
    const CgTable& table = cg_table();
    for (const CgPath& p : paths) plan->couplings.push_back(&table.coupling(p.l1, p.l2, p.lo));
    if (paths.size() > 1) {
        for (const CgPath& p : paths) plan->single.push_back(build_plan(channels, groups, mode, {p}));
    }
    return plan;
}

}  // namespace

std::shared_ptr<const GroupCgPlan> make_group_cg_plan(int channels, int groups, PathMode mode) {
    if (groups < 1 || channels < 1 || channels % groups != 0)
        throw ConfigError("group CG: groups (" + std::to_string(groups) +
                          ") must divide channels (" + std::to_string(channels) + ")");
    return build_plan(channels, groups, mode, cg_table().enumerate_paths(mode));
}

OpCount count_basic_ops(PathMode mode, int channels, int groups) {
    const auto plan = make_group_cg_plan(channels, groups, mode);
    const std::int64_t pairs =
        static_cast<std::int64_t>(plan->groups) * plan->block * plan->block;  // T^2/G
    OpCount c;
    for (const CgCoupling* cp : plan->couplings) {
        c.mults += cp->mult_per_pair * pairs;
        c.adds += cp->add_per_pair * pairs;
    }
    return c;
}

namespace {

struct SlotInfo {
    int off_x, n_x;  // component block of the x input
    int off_y, n_y;
    int off_o, n_o;  // component block of the output slot
};

// per-role slot resolution for a path (l1, l2, lo)
SlotInfo slots_for(CgRole role, const CgPath& p) {
    const int o1 = layout_offset(p.l1), n1 = 2 * p.l1 + 1;
    const int o2 = layout_offset(p.l2), n2 = 2 * p.l2 + 1;
    const int oo = layout_offset(p.lo), no = 2 * p.lo + 1;
    switch (role) {
        case CgRole::Out:
            return {o1, n1, o2, n2, oo, no};
        case CgRole::GradA:
            return {oo, no, o2, n2, o1, n1};
        default:
            return {oo, no, o1, n1, o2, n2};
    }
}

// coefficient entry reordered for a role: out gets `w_m`, x gets `x_m`, y gets `y_m`
struct RoleEntry {
    int x_m, y_m, o_m;
    double c;
};

std::vector<RoleEntry> role_entries(CgRole role, const CgCoupling& cpl) {
    std::vector<RoleEntry> es;
    es.reserve(cpl.entries.size());
    for (const CgEntry& e : cpl.entries) {
        switch (role) {
            case CgRole::Out:
                es.push_back({e.m1, e.m2, e.mo, e.c});
                break;
            case CgRole::GradA:
                es.push_back({e.mo, e.m2, e.m1, e.c});
                break;
            default:
                es.push_back({e.mo, e.m1, e.m2, e.c});
        }
    }
    return es;
}

}  // namespace

void cg_apply(const GroupCgPlan& plan, CgRole role, const double* x, const double* y,
              const double* const* w, double* out, std::int64_t rows, int n_threads,
              OpCounter* counter) {
    const int bs = plan.block;
    const std::int64_t tasks = rows * plan.groups;
    const std::int64_t bs2 = static_cast<std::int64_t>(bs) * bs;

    // per-path slot layout and reordered entries, shared across tasks
    std::vector<SlotInfo> slots;
    std::vector<std::vector<RoleEntry>> entries_by_path;
    for (std::size_t pi = 0; pi < plan.paths.size(); ++pi) {
        slots.push_back(slots_for(role, plan.paths[pi]));
        entries_by_path.push_back(role_entries(role, *plan.couplings[pi]));
    }

    OpCounter local{};

#ifdef _OPENMP
#pragma omp parallel num_threads(n_threads) if (n_threads > 1 && tasks > 1)
#endif
    {
        std::vector<double> pair;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (std::int64_t task = 0; task < tasks; ++task) {
        const std::int64_t row = task / plan.groups;
        const int g = static_cast<int>(task % plan.groups);
        const std::int64_t base = (row * plan.channels + static_cast<std::int64_t>(g) * bs) * 8;
        const double* xg = x + base;
        const double* yg = y + base;
        double* og = out + base;
        for (std::size_t pi = 0; pi < plan.paths.size(); ++pi) {
            const SlotInfo s = slots[pi];
            const auto& entries = entries_by_path[pi];
            // stage 1: coefficient applications per channel pair
            pair.assign(static_cast<std::size_t>(bs2 * s.n_o), 0.0);
            for (int tx = 0; tx < bs; ++tx) {
                const double* xr = xg + static_cast<std::int64_t>(tx) * 8 + s.off_x;
                for (int ty = 0; ty < bs; ++ty) {
                    const double* yr = yg + static_cast<std::int64_t>(ty) * 8 + s.off_y;
                    double* pr = pair.data() + (static_cast<std::int64_t>(tx) * bs + ty) * s.n_o;
                    for (const RoleEntry& e : entries) pr[e.o_m] += e.c * xr[e.x_m] * yr[e.y_m];
                }
            }
            // stage 2: per-group weight mixing
            const double* wp = w[pi] + static_cast<std::int64_t>(g) * bs2 * bs;
            switch (role) {
                case CgRole::Out:
                    // out[to] += W[to,t1,t2] pair[t1,t2]; the component loop is
                    // dispatched on its (3 or 5) width so accumulators stay in
                    // registers across the pair sweep
                    for (int to = 0; to < bs; ++to) {
                        double* od = og + static_cast<std::int64_t>(to) * 8 + s.off_o;
                        const double* wr = wp + static_cast<std::int64_t>(to) * bs2;
                        const double* pd = pair.data();
                        auto mix = [&](auto width) {
                            constexpr int kW = decltype(width)::value;
                            double acc[kW] = {};
                            for (std::int64_t p2 = 0; p2 < bs2; ++p2) {
                                const double wv = wr[p2];
                                const double* pr = pd + p2 * kW;
                                for (int m = 0; m < kW; ++m) acc[m] += wv * pr[m];
                            }
                            for (int m = 0; m < kW; ++m) od[m] += acc[m];
                        };
                        if (s.n_o == 3)
                            mix(std::integral_constant<int, 3>{});
                        else
                            mix(std::integral_constant<int, 5>{});
                    }
                    break;
                case CgRole::GradA:
                    // out[t1] += W[to,t1,t2] pair[to,t2]
                    for (int t1 = 0; t1 < bs; ++t1) {
                        double* od = og + static_cast<std::int64_t>(t1) * 8 + s.off_o;
                        for (int to = 0; to < bs; ++to) {
                            const double* wr = wp + (static_cast<std::int64_t>(to) * bs + t1) * bs;
                            const double* pr = pair.data() + static_cast<std::int64_t>(to) * bs * s.n_o;
                            for (int t2 = 0; t2 < bs; ++t2) {
                                const double wv = wr[t2];
                                if (wv == 0.0) continue;
                                const double* pv = pr + static_cast<std::int64_t>(t2) * s.n_o;
                                for (int m = 0; m < s.n_o; ++m) od[m] += wv * pv[m];
                            }
                        }
                    }
                    break;
                case CgRole::GradB:
                    // out[t2] += W[to,t1,t2] pair[to,t1]
                    for (int to = 0; to < bs; ++to)
                        for (int t1 = 0; t1 < bs; ++t1) {
                            const double* wr = wp + (static_cast<std::int64_t>(to) * bs + t1) * bs;
                            const double* pv =
                                pair.data() + (static_cast<std::int64_t>(to) * bs + t1) * s.n_o;
                            for (int t2 = 0; t2 < bs; ++t2) {
                                const double wv = wr[t2];
                                if (wv == 0.0) continue;
                                double* od = og + static_cast<std::int64_t>(t2) * 8 + s.off_o;
                                for (int m = 0; m < s.n_o; ++m) od[m] += wv * pv[m];
                            }
                        }
                    break;
            }
        }
        if (counter && role == CgRole::Out) {
            std::int64_t m = 0, a = 0;
            for (const CgCoupling* cp : plan.couplings) {
                m += cp->mult_per_pair * bs2;
                a += cp->add_per_pair * bs2;
            }
#ifdef _OPENMP
#pragma omp critical(freecg_counter)
#endif
            {
                local.mults += m;
                local.adds += a;
            }
        }
    }
    }
    if (counter && role == CgRole::Out) {
        counter->mults += local.mults;
        counter->adds += local.adds;
    }
}

void cg_weight_grad(const GroupCgPlan& plan, int path_idx, const double* d_out, const double* a,
                    const double* b, double* dw, std::int64_t rows, int n_threads) {
    const int bs = plan.block;
    const std::int64_t bs2 = static_cast<std::int64_t>(bs) * bs;
    const CgPath& p = plan.paths[static_cast<std::size_t>(path_idx)];
    const CgCoupling& cpl = *plan.couplings[static_cast<std::size_t>(path_idx)];
    const SlotInfo s = slots_for(CgRole::Out, p);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(n_threads) if (n_threads > 1 && plan.groups > 1)
#endif
    for (int g = 0; g < plan.groups; ++g) {
        std::vector<double> pair(static_cast<std::size_t>(bs2 * s.n_o));
        double* dwg = dw + static_cast<std::int64_t>(g) * bs2 * bs;
        for (std::int64_t row = 0; row < rows; ++row) {
            const std::int64_t base =
                (row * plan.channels + static_cast<std::int64_t>(g) * bs) * 8;
            const double* ag = a + base;
            const double* bg = b + base;
            const double* og = d_out + base;
            std::fill(pair.begin(), pair.end(), 0.0);
            for (int t1 = 0; t1 < bs; ++t1) {
                const double* ar = ag + static_cast<std::int64_t>(t1) * 8 + s.off_x;
                for (int t2 = 0; t2 < bs; ++t2) {
                    const double* br = bg + static_cast<std::int64_t>(t2) * 8 + s.off_y;
                    double* pr = pair.data() + (static_cast<std::int64_t>(t1) * bs + t2) * s.n_o;
                    for (const CgEntry& e : cpl.entries) pr[e.mo] += e.c * ar[e.m1] * br[e.m2];
                }
            }
            for (int to = 0; to < bs; ++to) {
                const double* od = og + static_cast<std::int64_t>(to) * 8 + s.off_o;
                double* dwr = dwg + static_cast<std::int64_t>(to) * bs2;
                for (std::int64_t p2 = 0; p2 < bs2; ++p2) {
                    const double* pr = pair.data() + p2 * s.n_o;
                    double acc = 0.0;
                    for (int m = 0; m < s.n_o; ++m) acc += od[m] * pr[m];
                    dwr[p2] += acc;
                }
            }
        }
    }
}

void group_cg_reference(const GroupCgPlan& plan, const double* a, const double* b,
                        const double* const* w, double* out, std::int64_t rows) {
    const int bs = plan.block;
    const std::int64_t bs2 = static_cast<std::int64_t>(bs) * bs;
    for (std::int64_t row = 0; row < rows; ++row)
        for (int g = 0; g < plan.groups; ++g) {
            const std::int64_t base = (row * plan.channels + static_cast<std::int64_t>(g) * bs) * 8;
            for (std::size_t pi = 0; pi < plan.paths.size(); ++pi) {
                const CgPath& p = plan.paths[pi];
                const CgCoupling& cpl = *plan.couplings[pi];
                const int o1 = layout_offset(p.l1), o2 = layout_offset(p.l2),
                          oo = layout_offset(p.lo);
                const double* wp = w[pi] + static_cast<std::int64_t>(g) * bs2 * bs;
                for (int to = 0; to < bs; ++to)
                    for (int t1 = 0; t1 < bs; ++t1)
                        for (int t2 = 0; t2 < bs; ++t2) {
                            const double wv =
                                wp[(static_cast<std::int64_t>(to) * bs + t1) * bs + t2];
                            for (const CgEntry& e : cpl.entries)
                                out[base + static_cast<std::int64_t>(to) * 8 + oo + e.mo] +=
                                    wv * e.c *
                                    a[base + static_cast<std::int64_t>(t1) * 8 + o1 + e.m1] *
                                    b[base + static_cast<std::int64_t>(t2) * 8 + o2 + e.m2];
                        }
            }
        }
}

std::vector<double> cg_transform(const CgPath& path, const std::vector<double>& a,
                                 const std::vector<double>& b, std::int64_t channels) {
    if (!cg_table().has_coupling(path.l1, path.l2, path.lo))
        throw Error("cg_transform: path (" + std::to_string(path.l1) + "," +
                    std::to_string(path.l2) + "->" + std::to_string(path.lo) +
                    ") is not in the table");
    const CgCoupling& cpl = cg_table().coupling(path.l1, path.l2, path.lo);
    const int o1 = layout_offset(path.l1), o2 = layout_offset(path.l2),
              oo = layout_offset(path.lo);
    std::vector<double> out(static_cast<std::size_t>(channels) * 8, 0.0);
    for (std::int64_t t = 0; t < channels; ++t)
        for (const CgEntry& e : cpl.entries)
            out[static_cast<std::size_t>(t * 8 + oo + e.mo)] +=
                e.c * a[static_cast<std::size_t>(t * 8 + o1 + e.m1)] *
                b[static_cast<std::size_t>(t * 8 + o2 + e.m2)];
    return out;
}

// --- tape bindings -------------------------------------------------------------

namespace {

Shape cg_io_shape(const GroupCgPlan& plan, std::int64_t rows) {
    return Shape{rows, plan.channels, 8};
}

void check_cg_shapes(const GroupCgPlan& plan, const Shape& a, const Shape& b) {
    const bool ok_a = a.size() == 3 && a[1] == plan.channels && a[2] == 8;
    const bool ok_b = b == a;
    if (!ok_a || !ok_b)
        throw ShapeError("group_cg: inputs " + shape_str(a) + ", " + shape_str(b) +
                         " (want [rows," + std::to_string(plan.channels) + ",8])");
}

Shape weight_shape(const GroupCgPlan& plan) {
    return Shape{plan.groups, plan.block, plan.block, plan.block};
}

std::vector<const double*> weight_ptrs(Tape& tape, const std::vector<Tensor>& w) {
    std::vector<const double*> p;
    p.reserve(w.size());
    for (const Tensor& t : w) p.push_back(tape.values_of(t.id).data());
    return p;
}

Tensor make_cg_node(Tape& tape, std::shared_ptr<const GroupCgPlan> plan, CgRole role, Tensor x,
                    Tensor y, const std::vector<Tensor>& w, OpCounter* counter);

Tensor make_weight_grad_node(Tape& tape, std::shared_ptr<const GroupCgPlan> plan, int path_idx,
                             Tensor d_out, Tensor a, Tensor b) {
    const std::int64_t rows = tape.shape_of(d_out.id)[0];
    std::vector<double> dw(static_cast<std::size_t>(numel(weight_shape(*plan))), 0.0);
    cg_weight_grad(*plan, path_idx, tape.values_of(d_out.id).data(), tape.values_of(a.id).data(),
                   tape.values_of(b.id).data(), dw.data(), rows, effective_threads());
    auto sub = plan->single.empty() ? plan : plan->single[static_cast<std::size_t>(path_idx)];
    return tape.custom(
        weight_shape(*plan), std::move(dw), {d_out, a, b},
        [sub](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
              const std::function<void(std::size_t, Tensor)>& accum) {
            // d(dw)/d(d_out) etc: single-path contractions weighted by g
            if (t.requires_grad(ps[0].id))
                accum(0, make_cg_node(t, sub, CgRole::Out, ps[1], ps[2], {g}, nullptr));
            if (t.requires_grad(ps[1].id))
                accum(1, make_cg_node(t, sub, CgRole::GradA, ps[0], ps[2], {g}, nullptr));
            if (t.requires_grad(ps[2].id))
                accum(2, make_cg_node(t, sub, CgRole::GradB, ps[0], ps[1], {g}, nullptr));
        });
}

Tensor make_cg_node(Tape& tape, std::shared_ptr<const GroupCgPlan> plan, CgRole role, Tensor x,
                    Tensor y, const std::vector<Tensor>& w, OpCounter* counter) {
    check_cg_shapes(*plan, tape.shape_of(x.id), tape.shape_of(y.id));
    if (w.size() != plan->paths.size())
        throw ShapeError("group_cg: expected " + std::to_string(plan->paths.size()) +
                         " weight tensors, got " + std::to_string(w.size()));
    for (const Tensor& t : w)
        if (tape.shape_of(t.id) != weight_shape(*plan))
            throw ShapeError("group_cg: weight shape " + shape_str(tape.shape_of(t.id)) +
                             " (want " + shape_str(weight_shape(*plan)) + ")");
    const std::int64_t rows = tape.shape_of(x.id)[0];
    std::vector<double> out(static_cast<std::size_t>(rows * plan->channels * 8), 0.0);
    cg_apply(*plan, role, tape.values_of(x.id).data(), tape.values_of(y.id).data(),
             weight_ptrs(tape, w).data(), out.data(), rows, effective_threads(), counter);

    std::vector<Tensor> parents{x, y};
    parents.insert(parents.end(), w.begin(), w.end());
    return tape.custom(
        cg_io_shape(*plan, rows), std::move(out), std::move(parents),
        [plan, role](Tape& t, const std::vector<Tensor>& ps, Tensor, Tensor g,
                     const std::function<void(std::size_t, Tensor)>& accum) {
            const std::vector<Tensor> ws(ps.begin() + 2, ps.end());
            const bool need_x = t.requires_grad(ps[0].id);
            const bool need_y = t.requires_grad(ps[1].id);
            auto need_w = [&](std::size_t p) { return t.requires_grad(ws[p].id); };
            switch (role) {
                case CgRole::Out:
                    if (need_x) accum(0, make_cg_node(t, plan, CgRole::GradA, g, ps[1], ws, nullptr));
                    if (need_y) accum(1, make_cg_node(t, plan, CgRole::GradB, g, ps[0], ws, nullptr));
                    for (std::size_t p = 0; p < ws.size(); ++p)
                        if (need_w(p))
                            accum(2 + p, make_weight_grad_node(t, plan, static_cast<int>(p), g,
                                                               ps[0], ps[1]));
                    break;
                case CgRole::GradA:
                    // node = dA(P=x, B=y)
                    if (need_x) accum(0, make_cg_node(t, plan, CgRole::Out, g, ps[1], ws, nullptr));
                    if (need_y) accum(1, make_cg_node(t, plan, CgRole::GradB, ps[0], g, ws, nullptr));
                    for (std::size_t p = 0; p < ws.size(); ++p)
                        if (need_w(p))
                            accum(2 + p, make_weight_grad_node(t, plan, static_cast<int>(p), ps[0],
                                                               g, ps[1]));
                    break;
                case CgRole::GradB:
                    // node = dB(P=x, A=y)
                    if (need_x) accum(0, make_cg_node(t, plan, CgRole::Out, ps[1], g, ws, nullptr));
                    if (need_y) accum(1, make_cg_node(t, plan, CgRole::GradA, ps[0], g, ws, nullptr));
                    for (std::size_t p = 0; p < ws.size(); ++p)
                        if (need_w(p))
                            accum(2 + p, make_weight_grad_node(t, plan, static_cast<int>(p), ps[0],
                                                               ps[1], g));
                    break;
            }
        });
}

}  // namespace

Tensor group_cg(Tape& tape, Tensor a, Tensor b, std::shared_ptr<const GroupCgPlan> plan,
                const std::vector<Tensor>& w, OpCounter* counter) {
    return make_cg_node(tape, std::move(plan), CgRole::Out, a, b, w, counter);
}

// --- shuffling ----------------------------------------------------------------

ShuffleSpec make_shuffle_spec(double multiplier, int channels, int groups) {
    if (groups < 1 || channels % groups != 0)
        throw ConfigError("shuffle: groups must divide channels");
    const int shift =
        static_cast<int>(std::floor(multiplier * channels / groups)) % channels;
    return ShuffleSpec{channels, shift};
}

Tensor shuffle_channels(Tape& tape, Tensor x, const ShuffleSpec& spec) {
    const Shape& s = tape.shape_of(x.id);
    if (s.size() != 3 || s[1] != spec.channels)
        throw ShapeError("shuffle: input " + shape_str(s) + " does not carry " +
                         std::to_string(spec.channels) + " channels");
    // permutation as a 0/1 matrix: out = P x along the channel axis,
    // P[pi(t), t] = 1; exact (each output is a single 1.0 * input)
    const std::int64_t T = spec.channels;
    std::vector<double> pm(static_cast<std::size_t>(T * T), 0.0);
    for (std::int64_t t = 0; t < T; ++t)
        pm[static_cast<std::size_t>(spec.apply(t) * T + t)] = 1.0;
    Tensor p = tape.constant({T, T}, std::move(pm));
    return tape.linear(x, p, 1, false);
}

std::vector<double> shuffle_apply(const ShuffleSpec& spec, const std::vector<double>& x,
                                  std::int64_t rows) {
    const std::int64_t T = spec.channels;
    std::vector<double> out(x.size());
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t t = 0; t < T; ++t)
            for (int m = 0; m < 8; ++m)
                out[static_cast<std::size_t>((r * T + spec.apply(t)) * 8 + m)] =
                    x[static_cast<std::size_t>((r * T + t) * 8 + m)];
    return out;
}

}  // namespace freecg
