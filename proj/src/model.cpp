#include "freecg/model.hpp"

#include <algorithm>
#include <cmath>

namespace freecg {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kSqrt3 = 1.7320508075688772935274463415059;
}  // namespace

void ModelConfig::validate() const {
    if (channels < 2) throw ConfigError("channels must be >= 2");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (heads < 1 || channels % heads != 0)
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide channels (" +
                          std::to_string(channels) + ")");
    if (groups < 1 || channels % groups != 0)
        throw ConfigError("groups (" + std::to_string(groups) + ") must divide channels (" +
                          std::to_string(channels) + ")");
    if (num_rbf < 2) throw ConfigError("num_rbf must be >= 2");
    if (cutoff <= 0.0) throw ConfigError("cutoff must be positive");
    if (shuffle_multiplier != 0.5 && shuffle_multiplier != 1.0 && shuffle_multiplier != 1.5)
        throw ConfigError("shuffle_multiplier must be one of 0.5, 1.0, 1.5");
    if (head == Head::equivariant_gated && channels % 2 != 0)
        throw ConfigError("equivariant head needs an even channel count");
}

NamedArray& ParamStore::add(std::string name, Shape shape, std::vector<double> values) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("parameter '" + name + "': value count does not match " +
                         shape_str(shape));
    index_[name] = arrays_.size();
    arrays_.push_back(NamedArray{std::move(name), std::move(shape), std::move(values)});
    return arrays_.back();
}

NamedArray& ParamStore::at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return arrays_[it->second];
}

const NamedArray& ParamStore::at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return arrays_[it->second];
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

std::size_t ParamStore::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

std::int64_t ParamStore::parameter_count() const {
    std::int64_t n = 0;
    for (const NamedArray& a : arrays_) n += a.numel();
    return n;
}

// --- plain helpers -------------------------------------------------------------

double cosine_cutoff(double r, double r_c) { return 0.5 * (std::cos(kPi * (r / r_c)) + 1.0); }

std::pair<std::vector<double>, double> radial_features(double r, double r_c,
                                                       const std::vector<double>& means,
                                                       const std::vector<double>& betas) {
    if (!(r > 0.0) || r > r_c)
        throw ContractViolation("radial_features: r outside (0, r_c]");
    const double cw = cosine_cutoff(r, r_c);
    std::vector<double> out(means.size());
    const double er = std::exp(-r);
    for (std::size_t k = 0; k < means.size(); ++k) {
        const double d = er - means[k];
        out[k] = std::exp(-betas[k] * d * d) * cw;
    }
    return {out, cw};
}

double attention_enhancer(const std::vector<double>& abstract_edges,
                          const std::array<double, 8>& edge) {
    const std::size_t channels = abstract_edges.size() / 8;
    double best = 0.0;
    for (std::size_t t = 0; t < channels; ++t) {
        double dot = 0.0;
        for (int m = 0; m < 8; ++m)
            dot += abstract_edges[t * 8 + static_cast<std::size_t>(m)] *
                   edge[static_cast<std::size_t>(m)];
        if (t == 0 || dot > best) best = dot;
    }
    return channels == 0 ? 0.0 : best;
}

// --- construction --------------------------------------------------------------

Model::Model(ModelConfig cfg) : config(cfg) {
    config.validate();
    plan_ = make_group_cg_plan(config.channels, config.groups, config.mode);
    shuffle_ = make_shuffle_spec(config.shuffle_multiplier, config.channels, config.groups);
}

void Model::init_params(std::uint64_t seed) {
    params = ParamStore{};
    Rng rng(seed);
    const int C = config.channels;
    const int R = config.num_rbf;

    auto uniform_vec = [&](std::int64_t n, double k) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (double& x : v) x = rng.uniform(-k, k);
        return v;
    };
    auto normal_vec = [&](std::int64_t n, double sigma) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (double& x : v) x = rng.normal() * sigma;
        return v;
    };
    auto add_linear = [&](const std::string& name, std::int64_t out, std::int64_t in, bool bias) {
        const double k = 1.0 / std::sqrt(static_cast<double>(in));
        params.add(name + ".w", {out, in}, uniform_vec(out * in, k));
        if (bias) params.add(name + ".b", {out}, uniform_vec(out, k));
    };
    auto add_mixer = [&](const std::string& name, std::int64_t out, std::int64_t in) {
        const double k = 1.0 / std::sqrt(static_cast<double>(in));
        params.add(name + ".l1", {out, in}, uniform_vec(out * in, k));
        params.add(name + ".l2", {out, in}, uniform_vec(out * in, k));
    };

    params.add("embedding", {119, C}, normal_vec(119 * C, 1.0));

    {
        const double start = std::exp(-config.cutoff);
        std::vector<double> means(static_cast<std::size_t>(R));
        for (int k = 0; k < R; ++k)
            means[static_cast<std::size_t>(k)] = start + (1.0 - start) * k / (R - 1);
        const double beta =
            std::pow(2.0 / R * (1.0 - std::exp(-config.cutoff)), -2.0);
        params.add("rbf.means", {R}, std::move(means));
        params.add("rbf.betas", {R},
                   std::vector<double>(static_cast<std::size_t>(R), beta));
    }
    add_linear("edge_embed", C, R, true);

    const int bs = plan_->block;
    for (int layer = 0; layer < config.layers; ++layer) {
        const std::string pre = "layers." + std::to_string(layer) + ".";
        add_linear(pre + "q", C, C, true);
        add_linear(pre + "k", C, C, true);
        add_linear(pre + "v", C, C, true);
        add_linear(pre + "dk", C, C, true);
        add_linear(pre + "dv", C, C, true);
        add_linear(pre + "s1", C, C, true);
        add_linear(pre + "s2", C, C, true);
        add_linear(pre + "o", 3 * C, C, true);
        add_mixer(pre + "amix", C, C);
        add_mixer(pre + "hmix1", C, C);
        add_mixer(pre + "hmix2", C, C);
        add_mixer(pre + "rej_trg", C, C);
        add_mixer(pre + "rej_src", C, C);
        add_linear(pre + "fgate", C, C, true);
        for (std::size_t p = 0; p < plan_->paths.size(); ++p) {
            int into_lo = 0;
            for (const CgPath& q : plan_->paths)
                if (q.lo == plan_->paths[p].lo) ++into_lo;
            const double sigma =
                1.0 / std::sqrt(static_cast<double>(into_lo) * bs * bs);
            params.add(pre + "cg.w" + std::to_string(p),
                       {config.groups, bs, bs, bs},
                       normal_vec(static_cast<std::int64_t>(config.groups) * bs * bs * bs, sigma));
        }
    }

    if (config.head == ModelConfig::Head::equivariant_gated) {
        auto add_gated = [&](const std::string& pre, std::int64_t in, std::int64_t out,
                             std::int64_t hidden) {
            add_mixer(pre + "v1", out, in);
            add_mixer(pre + "v2", out, in);
            add_linear(pre + "mlp1", hidden, in + out, true);
            add_linear(pre + "mlp2", 2 * out, hidden, true);
        };
        add_gated("head.g1.", C, C / 2, C);
        add_gated("head.g2.", C / 2, 1, C / 2);
    } else {
        add_linear("head.mlp1", C / 2, C, true);
        add_linear("head.mlp2", 1, C / 2, true);
    }
}

// --- forward -------------------------------------------------------------------

namespace {

struct Ctx {
    Tape& t;
    const ParamStore& store;
    std::vector<Tensor> leaves;  // aligned with store.arrays()

    Tensor p(const std::string& name) const { return leaves[store.index_of(name)]; }
};

// channel-mixing linear applied per degree block (weights shared across m)
Tensor perdeg(Tape& t, Tensor x, Tensor w1, Tensor w2) {
    Tensor a = t.linear(t.slice(x, 2, 0, 3), w1, 1, false);
    Tensor b = t.linear(t.slice(x, 2, 3, 5), w2, 1, false);
    return t.concat({a, b}, 2);
}

// a - (per-degree-Linear(a) . Y)-projection lifted back onto Y, per block
Tensor rejcalc(Tape& t, Tensor a, Tensor y1c, Tensor y2c, Tensor w1, Tensor w2) {
    Tensor lin = perdeg(t, a, w1, w2);
    Tensor d1 = t.sum(t.mul(t.slice(lin, 2, 0, 3), y1c), 2);
    Tensor d2 = t.sum(t.mul(t.slice(lin, 2, 3, 5), y2c), 2);
    Tensor lift =
        t.concat({t.mul(t.expand(d1, 2, 3), y1c), t.mul(t.expand(d2, 2, 5), y2c)}, 2);
    return t.sub(a, lift);
}

}  // namespace

Model::TapeOutput Model::forward(Tape& tape, const MoleculeFrame& frame, bool need_forces,
                                 bool params_require_grad) const {
    frame.validate();
    const int N = frame.n();
    const int C = config.channels;
    const int H = config.heads;
    const int dh = C / H;

    Ctx ctx{tape, params, {}};
    ctx.leaves.reserve(params.size());
    for (const NamedArray& a : params.arrays())
        ctx.leaves.push_back(tape.leaf(a.shape, a.values, params_require_grad));

    std::vector<double> pos_values;
    pos_values.reserve(static_cast<std::size_t>(N) * 3);
    for (const auto& p : frame.positions) pos_values.insert(pos_values.end(), p.begin(), p.end());
    Tensor pos = tape.leaf({N, 3}, std::move(pos_values), true);

    const NeighborList nl = build_neighbor_list(frame, config.cutoff);
    const std::int64_t E = nl.edges();
    auto idx_i = std::make_shared<const std::vector<std::int64_t>>(nl.center);
    auto idx_j = std::make_shared<const std::vector<std::int64_t>>(nl.neighbor);

    Tape& t = tape;

    // --- edge geometry (constant across layers) ---
    Tensor rvec = t.sub(t.gather_rows(pos, idx_j), t.gather_rows(pos, idx_i));  // [E,3]
    Tensor d = t.sqrt_(t.sum(t.mul(rvec, rvec), 1));                            // [E]
    Tensor u = t.mul(rvec, t.expand(t.pow_safe(d, -1.0), 1, 3));                // [E,3]
    auto xyz = t.split(u, 1, {1, 1, 1});
    Tensor x = xyz[0], y = xyz[1], z = xyz[2];
    Tensor y2 = t.concat({t.scalar_mul(t.mul(x, y), kSqrt3), t.scalar_mul(t.mul(y, z), kSqrt3),
                          t.add_const(t.scalar_mul(t.mul(z, z), 1.5), -0.5),
                          t.scalar_mul(t.mul(x, z), kSqrt3),
                          t.scalar_mul(t.sub(t.mul(x, x), t.mul(y, y)), 0.5 * kSqrt3)},
                         1);            // [E,5]
    Tensor e_ij = t.concat({u, y2}, 1);  // [E,8]
    Tensor y1c = t.expand(u, 1, C);      // [E,C,3]
    Tensor y2c = t.expand(y2, 1, C);     // [E,C,5]
    Tensor e_ij_c = t.expand(e_ij, 1, C);

    Tensor cw = t.scalar_mul(
        t.add_const(t.cos_(t.scalar_mul(t.scalar_mul(d, 1.0 / config.cutoff), kPi)), 1.0), 0.5);

    // radial basis, cutoff applied, projected to C edge attributes
    Tensor er = t.expand(t.exp_(t.neg(d)), 1, config.num_rbf);
    Tensor diff = t.sub(er, t.expand(ctx.p("rbf.means"), 0, E));
    Tensor rbf = t.exp_(t.neg(t.mul(t.expand(ctx.p("rbf.betas"), 0, E), t.mul(diff, diff))));
    rbf = t.mul(rbf, t.expand(cw, 1, config.num_rbf));
    Tensor f = t.linear(rbf, ctx.p("edge_embed.w"), 1, false, ctx.p("edge_embed.b"));  // [E,C]

    // --- node state ---
    auto z_idx = std::make_shared<const std::vector<std::int64_t>>([&] {
        std::vector<std::int64_t> v;
        v.reserve(static_cast<std::size_t>(N));
        for (int zi : frame.atomic_numbers) v.push_back(zi);
        return v;
    }());
    Tensor h = t.gather_rows(ctx.p("embedding"), z_idx);  // [N,C]
    Tensor ebar = t.zeros({N, C, 8});

    std::vector<std::vector<Tensor>> cg_w(static_cast<std::size_t>(config.layers));
    for (int layer = 0; layer < config.layers; ++layer) {
        const std::string pre = "layers." + std::to_string(layer) + ".";
        for (std::size_t p = 0; p < plan_->paths.size(); ++p)
            cg_w[static_cast<std::size_t>(layer)].push_back(
                ctx.p(pre + "cg.w" + std::to_string(p)));
    }

    for (int layer = 0; layer < config.layers; ++layer) {
        const std::string pre = "layers." + std::to_string(layer) + ".";
        Tensor q = t.linear(h, ctx.p(pre + "q.w"), 1, false, ctx.p(pre + "q.b"));
        Tensor k = t.linear(h, ctx.p(pre + "k.w"), 1, false, ctx.p(pre + "k.b"));
        Tensor v = t.linear(h, ctx.p(pre + "v.w"), 1, false, ctx.p(pre + "v.b"));
        Tensor qe = t.gather_rows(q, idx_i);
        Tensor ke = t.gather_rows(k, idx_j);
        Tensor ve = t.gather_rows(v, idx_j);
        Tensor dk = t.linear(f, ctx.p(pre + "dk.w"), 1, false, ctx.p(pre + "dk.b"));
        Tensor dv = t.linear(f, ctx.p(pre + "dv.w"), 1, false, ctx.p(pre + "dv.b"));

        Tensor logits = t.sum(t.reshape(t.mul(t.mul(qe, ke), dk), {E, H, dh}), 2);  // [E,H]
        logits = t.mul(t.expand(cw, 1, H), logits);
        if (config.enhancer) {
            Tensor e_src = config.enhancer_source == ModelConfig::EnhancerSource::neighbor
                               ? t.gather_rows(ebar, idx_j)
                               : t.gather_rows(ebar, idx_i);
            Tensor dots = t.sum(t.mul(e_src, e_ij_c), 2);  // [E,C]
            Tensor enh = t.max_over_axis(dots, 1).first;   // [E]
            logits = t.add(logits, t.expand(enh, 1, H));
        }
        Tensor a = t.silu(logits);                              // [E,H]
        Tensor ac = t.reshape(t.expand(a, 2, dh), {E, C});      // broadcast to channels
        Tensor vhat_e = t.mul(t.mul(ve, dv), ac);               // [E,C]

        Tensor s1 = t.linear(vhat_e, ctx.p(pre + "s1.w"), 1, false, ctx.p(pre + "s1.b"));
        Tensor s2 = t.linear(vhat_e, ctx.p(pre + "s2.w"), 1, false, ctx.p(pre + "s2.b"));
        Tensor ebar_i = t.gather_rows(ebar, idx_i);  // [E,C,8]
        Tensor ehat_e =
            t.add(t.mul(ebar_i, t.expand(s1, 2, 8)), t.mul(e_ij_c, t.expand(s2, 2, 8)));
        Tensor ehat = t.segment_sum(ehat_e, idx_i, N);  // [N,C,8]
        Tensor vhat = t.segment_sum(vhat_e, idx_i, N);  // [N,C]

        Tensor o = t.linear(vhat, ctx.p(pre + "o.w"), 1, false, ctx.p(pre + "o.b"));
        auto o123 = t.split(o, 1, {C, C, C});

        Tensor a_in = t.mul(perdeg(t, ebar, ctx.p(pre + "amix.l1"), ctx.p(pre + "amix.l2")),
                            t.expand(o123[0], 2, 8));
        Tensor d_ebar = group_cg(t, a_in, ehat, plan_, cg_w[static_cast<std::size_t>(layer)]);
        d_ebar = t.add(shuffle_channels(t, d_ebar, shuffle_), ehat);
        Tensor ebar_next = t.add(ebar, d_ebar);

        Tensor inner =
            t.sum(t.mul(perdeg(t, ebar, ctx.p(pre + "hmix1.l1"), ctx.p(pre + "hmix1.l2")),
                        perdeg(t, ebar, ctx.p(pre + "hmix2.l1"), ctx.p(pre + "hmix2.l2"))),
                  2);  // [N,C]
        Tensor h_next = t.add(h, t.add(t.mul(inner, o123[1]), o123[2]));

        Tensor trg_in = config.rejcalc_source == ModelConfig::RejSource::neighbor
                            ? t.gather_rows(ebar, idx_j)
                            : ebar_i;
        Tensor w1 = rejcalc(t, trg_in, y1c, y2c, ctx.p(pre + "rej_trg.l1"),
                            ctx.p(pre + "rej_trg.l2"));
        Tensor w2 = rejcalc(t, ebar_i, y1c, y2c, ctx.p(pre + "rej_src.l1"),
                            ctx.p(pre + "rej_src.l2"));
        Tensor fdot = t.sum(t.mul(w1, w2), 2);  // [E,C]
        Tensor f_next =
            t.add(f, t.mul(fdot, t.silu(t.linear(f, ctx.p(pre + "fgate.w"), 1, false,
                                                 ctx.p(pre + "fgate.b")))));

        ebar = ebar_next;
        h = h_next;
        f = f_next;
    }

    TapeOutput out;
    out.positions = pos;
    out.abstract_edges = ebar;
    out.node_scalars = h;
    out.param_leaves = ctx.leaves;

    Tensor head_h, head_e;
    if (config.head == ModelConfig::Head::equivariant_gated) {
        auto gated = [&](const std::string& pre, Tensor hin, Tensor ein, std::int64_t out_c) {
            Tensor v1 = perdeg(t, ein, ctx.p(pre + "v1.l1"), ctx.p(pre + "v1.l2"));
            Tensor n = t.norm(v1, 2);
            Tensor xin = t.concat({hin, n}, 1);
            Tensor z1 = t.silu(
                t.linear(xin, ctx.p(pre + "mlp1.w"), 1, false, ctx.p(pre + "mlp1.b")));
            Tensor z2 = t.linear(z1, ctx.p(pre + "mlp2.w"), 1, false, ctx.p(pre + "mlp2.b"));
            auto hu = t.split(z2, 1, {out_c, out_c});
            Tensor eout = t.mul(perdeg(t, ein, ctx.p(pre + "v2.l1"), ctx.p(pre + "v2.l2")),
                                t.expand(hu[1], 2, 8));
            return std::pair<Tensor, Tensor>{hu[0], eout};
        };
        auto g1 = gated("head.g1.", h, ebar, C / 2);
        auto g2 = gated("head.g2.", g1.first, g1.second, 1);
        head_h = g2.first;   // [N,1]
        head_e = g2.second;  // [N,1,8]
    } else {
        Tensor z1 =
            t.silu(t.linear(h, ctx.p("head.mlp1.w"), 1, false, ctx.p("head.mlp1.b")));
        head_h = t.linear(z1, ctx.p("head.mlp2.w"), 1, false, ctx.p("head.mlp2.b"));
    }
    out.head_scalars = head_h;
    out.head_edges = head_e;

    Tensor y_sum = t.sum(t.sum(head_h, 1), 0);
    out.energy = t.add_const(t.scalar_mul(y_sum, energy_scale),
                             static_cast<double>(N) * energy_shift);

    if (need_forces) {
        auto gm = tape.backward(out.energy);
        out.forces = t.neg(gm.at(pos));
    }
    return out;
}

Model::Output Model::evaluate(const MoleculeFrame& frame, bool need_forces) const {
    Tape tape(config.precision);
    const TapeOutput to = forward(tape, frame, need_forces, false);
    Output out;
    out.energy = to.energy.scalar();
    if (need_forces) {
        const auto& fv = to.forces.values();
        out.forces.resize(static_cast<std::size_t>(frame.n()));
        for (int i = 0; i < frame.n(); ++i)
            out.forces[static_cast<std::size_t>(i)] = {fv[static_cast<std::size_t>(3 * i)],
                                                       fv[static_cast<std::size_t>(3 * i + 1)],
                                                       fv[static_cast<std::size_t>(3 * i + 2)]};
    }
    out.abstract_edges = to.abstract_edges.values();
    out.node_scalars = to.node_scalars.values();
    return out;
}

std::pair<double, double> Model::dipole_and_extent(const MoleculeFrame& frame) const {
    if (frame.masses.empty())
        throw ContractViolation("dipole_and_extent: frame masses are missing");
    if (config.head != ModelConfig::Head::equivariant_gated)
        throw ConfigError("dipole_and_extent requires the equivariant head");
    Tape tape(config.precision);
    const TapeOutput to = forward(tape, frame, false, false);
    const auto& he = to.head_edges.values();    // [N,1,8]
    const auto& hs = to.head_scalars.values();  // [N,1]

    double msum = 0.0;
    std::array<double, 3> com{0.0, 0.0, 0.0};
    for (int i = 0; i < frame.n(); ++i) {
        const double m = frame.masses[static_cast<std::size_t>(i)];
        msum += m;
        for (int c = 0; c < 3; ++c)
            com[static_cast<std::size_t>(c)] +=
                m * frame.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    }
    for (double& c : com) c /= msum;

    std::array<double, 3> mu{0.0, 0.0, 0.0};
    double extent = 0.0;
    for (int i = 0; i < frame.n(); ++i) {
        const double hi = hs[static_cast<std::size_t>(i)];
        double r2 = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double rel =
                frame.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -
                com[static_cast<std::size_t>(c)];
            mu[static_cast<std::size_t>(c)] +=
                he[static_cast<std::size_t>(i * 8 + c)] + hi * rel;
            r2 += rel * rel;
        }
        extent += hi * std::sqrt(r2);
    }
    const double mu_norm =
        std::sqrt(mu[0] * mu[0] + mu[1] * mu[1] + mu[2] * mu[2]);
    return {mu_norm, extent};
}

}  // namespace freecg
