#pragma once

// Straightforward-loop reference of the full network forward pass, written
// directly from the update equations with plain doubles and no tape. The
// grouped CG update uses the serial naive kernel. Kept independent of the
// production tensor program so layer wiring bugs cannot cancel out.

#include <cmath>
#include <vector>

#include "freecg/model.hpp"

namespace freecg::testing {

struct RefResult {
    std::vector<double> h;                       // N*C (trunk)
    std::vector<double> ebar;                    // N*C*8 (trunk)
    std::vector<std::vector<double>> attention;  // per layer: E*H
    std::vector<double> ehat_layer0;             // N*C*8
    double energy = 0.0;
};

inline RefResult reference_forward(const Model& model, const MoleculeFrame& frame) {
    const ModelConfig& cfg = model.config;
    const ParamStore& ps = model.params;
    const int N = frame.n(), C = cfg.channels, H = cfg.heads, dh = C / H, R = cfg.num_rbf;
    const NeighborList nl = build_neighbor_list(frame, cfg.cutoff);
    const std::int64_t E = nl.edges();
    const double s3 = std::sqrt(3.0);

    auto w = [&](const std::string& n) -> const std::vector<double>& { return ps.at(n).values; };
    auto lin = [](const std::vector<double>& x, std::int64_t rows, std::int64_t in,
                  const std::vector<double>& wm, std::int64_t out,
                  const std::vector<double>* bias) {
        std::vector<double> y(static_cast<std::size_t>(rows * out), 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t o = 0; o < out; ++o) {
                double acc = bias ? (*bias)[static_cast<std::size_t>(o)] : 0.0;
                for (std::int64_t k = 0; k < in; ++k)
                    acc += wm[static_cast<std::size_t>(o * in + k)] *
                           x[static_cast<std::size_t>(r * in + k)];
                y[static_cast<std::size_t>(r * out + o)] = acc;
            }
        return y;
    };
    // channel mix per degree block on rows of [C][8]
    auto perdeg = [&](const std::vector<double>& x, std::int64_t rows,
                      const std::vector<double>& w1, const std::vector<double>& w2,
                      std::int64_t out_c) {
        std::vector<double> y(static_cast<std::size_t>(rows * out_c * 8), 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t o = 0; o < out_c; ++o)
                for (std::int64_t t = 0; t < C; ++t) {
                    const double wa = w1[static_cast<std::size_t>(o * C + t)];
                    const double wb = w2[static_cast<std::size_t>(o * C + t)];
                    for (int m = 0; m < 3; ++m)
                        y[static_cast<std::size_t>((r * out_c + o) * 8 + m)] +=
                            wa * x[static_cast<std::size_t>((r * C + t) * 8 + m)];
                    for (int m = 3; m < 8; ++m)
                        y[static_cast<std::size_t>((r * out_c + o) * 8 + m)] +=
                            wb * x[static_cast<std::size_t>((r * C + t) * 8 + m)];
                }
        return y;
    };
    auto silu = [](double v) { return v / (1.0 + std::exp(-v)); };

    // edge geometry
    std::vector<double> e_ij(static_cast<std::size_t>(E) * 8);
    std::vector<double> cw(static_cast<std::size_t>(E));
    std::vector<double> f(static_cast<std::size_t>(E * C));
    {
        const auto& means = w("rbf.means");
        const auto& betas = w("rbf.betas");
        std::vector<double> rbf(static_cast<std::size_t>(E * R));
        for (std::int64_t e = 0; e < E; ++e) {
            const auto& u = nl.unit[static_cast<std::size_t>(e)];
            const double x = u[0], y = u[1], z = u[2];
            const double blk[8] = {x, y, z, s3 * x * y, s3 * y * z, 1.5 * z * z - 0.5,
                                   s3 * x * z, 0.5 * s3 * (x * x - y * y)};
            for (int m = 0; m < 8; ++m) e_ij[static_cast<std::size_t>(e * 8 + m)] = blk[m];
            const double r = nl.dist[static_cast<std::size_t>(e)];
            cw[static_cast<std::size_t>(e)] = 0.5 * (std::cos(M_PI * (r / cfg.cutoff)) + 1.0);
            const double er = std::exp(-r);
            for (int k = 0; k < R; ++k) {
                const double d = er - means[static_cast<std::size_t>(k)];
                rbf[static_cast<std::size_t>(e * R + k)] =
                    std::exp(-betas[static_cast<std::size_t>(k)] * d * d) *
                    cw[static_cast<std::size_t>(e)];
            }
        }
        f = lin(rbf, E, R, w("edge_embed.w"), C, &w("edge_embed.b"));
    }

    // node state
    std::vector<double> h(static_cast<std::size_t>(N * C));
    for (int i = 0; i < N; ++i)
        for (int c = 0; c < C; ++c)
            h[static_cast<std::size_t>(i * C + c)] =
                w("embedding")[static_cast<std::size_t>(
                    frame.atomic_numbers[static_cast<std::size_t>(i)] * C + c)];
    std::vector<double> ebar(static_cast<std::size_t>(N * C) * 8, 0.0);

    RefResult res;

    for (int layer = 0; layer < cfg.layers; ++layer) {
        const std::string pre = "layers." + std::to_string(layer) + ".";
        const auto q = lin(h, N, C, w(pre + "q.w"), C, &w(pre + "q.b"));
        const auto k = lin(h, N, C, w(pre + "k.w"), C, &w(pre + "k.b"));
        const auto v = lin(h, N, C, w(pre + "v.w"), C, &w(pre + "v.b"));
        const auto dk = lin(f, E, C, w(pre + "dk.w"), C, &w(pre + "dk.b"));
        const auto dv = lin(f, E, C, w(pre + "dv.w"), C, &w(pre + "dv.b"));

        std::vector<double> att(static_cast<std::size_t>(E * H), 0.0);
        std::vector<double> vhat_e(static_cast<std::size_t>(E * C), 0.0);
        for (std::int64_t e = 0; e < E; ++e) {
            const std::int64_t i = nl.center[static_cast<std::size_t>(e)];
            const std::int64_t j = nl.neighbor[static_cast<std::size_t>(e)];
            double enh = 0.0;
            if (cfg.enhancer) {
                const std::int64_t src =
                    cfg.enhancer_source == ModelConfig::EnhancerSource::neighbor ? j : i;
                for (int t = 0; t < C; ++t) {
                    double dot = 0.0;
                    for (int m = 0; m < 8; ++m)
                        dot += ebar[static_cast<std::size_t>((src * C + t) * 8 + m)] *
                               e_ij[static_cast<std::size_t>(e * 8 + m)];
                    if (t == 0 || dot > enh) enh = dot;
                }
            }
            for (int hd = 0; hd < H; ++hd) {
                double acc = 0.0;
                for (int d = 0; d < dh; ++d) {
                    const int c = hd * dh + d;
                    acc += q[static_cast<std::size_t>(i * C + c)] *
                           k[static_cast<std::size_t>(j * C + c)] *
                           dk[static_cast<std::size_t>(e * C + c)];
                }
                const double a = silu(cw[static_cast<std::size_t>(e)] * acc + enh);
                att[static_cast<std::size_t>(e * H + hd)] = a;
                for (int d = 0; d < dh; ++d) {
                    const int c = hd * dh + d;
                    vhat_e[static_cast<std::size_t>(e * C + c)] =
                        v[static_cast<std::size_t>(j * C + c)] *
                        dv[static_cast<std::size_t>(e * C + c)] * a;
                }
            }
        }
        res.attention.push_back(att);

        const auto s1 = lin(vhat_e, E, C, w(pre + "s1.w"), C, &w(pre + "s1.b"));
        const auto s2 = lin(vhat_e, E, C, w(pre + "s2.w"), C, &w(pre + "s2.b"));
        std::vector<double> ehat(static_cast<std::size_t>(N * C) * 8, 0.0);
        std::vector<double> vhat(static_cast<std::size_t>(N * C), 0.0);
        for (std::int64_t e = 0; e < E; ++e) {
            const std::int64_t i = nl.center[static_cast<std::size_t>(e)];
            for (int t = 0; t < C; ++t) {
                for (int m = 0; m < 8; ++m)
                    ehat[static_cast<std::size_t>((i * C + t) * 8 + m)] +=
                        ebar[static_cast<std::size_t>((i * C + t) * 8 + m)] *
                            s1[static_cast<std::size_t>(e * C + t)] +
                        e_ij[static_cast<std::size_t>(e * 8 + m)] *
                            s2[static_cast<std::size_t>(e * C + t)];
                vhat[static_cast<std::size_t>(i * C + t)] +=
                    vhat_e[static_cast<std::size_t>(e * C + t)];
            }
        }
        if (layer == 0) res.ehat_layer0 = ehat;

        const auto o = lin(vhat, N, C, w(pre + "o.w"), 3 * C, &w(pre + "o.b"));
        // A = o1 * perdeg(ebar)
        auto a_in = perdeg(ebar, N, w(pre + "amix.l1"), w(pre + "amix.l2"), C);
        for (int i = 0; i < N; ++i)
            for (int t = 0; t < C; ++t)
                for (int m = 0; m < 8; ++m)
                    a_in[static_cast<std::size_t>((i * C + t) * 8 + m)] *=
                        o[static_cast<std::size_t>(i * 3 * C + t)];

        // grouped CG via the serial naive kernel, then shuffle + residuals
        std::vector<double> d_ebar(static_cast<std::size_t>(N * C) * 8, 0.0);
        {
            const auto& plan = *model.cg_plan();
            std::vector<const double*> wp;
            for (std::size_t p = 0; p < plan.paths.size(); ++p)
                wp.push_back(w(pre + "cg.w" + std::to_string(p)).data());
            group_cg_reference(plan, a_in.data(), ehat.data(), wp.data(), d_ebar.data(), N);
        }
        d_ebar = shuffle_apply(model.shuffle_spec(), d_ebar, N);
        for (std::size_t idx = 0; idx < d_ebar.size(); ++idx) d_ebar[idx] += ehat[idx];

        const auto in1 = perdeg(ebar, N, w(pre + "hmix1.l1"), w(pre + "hmix1.l2"), C);
        const auto in2 = perdeg(ebar, N, w(pre + "hmix2.l1"), w(pre + "hmix2.l2"), C);
        std::vector<double> h_next = h;
        for (int i = 0; i < N; ++i)
            for (int t = 0; t < C; ++t) {
                double inner = 0.0;
                for (int m = 0; m < 8; ++m)
                    inner += in1[static_cast<std::size_t>((i * C + t) * 8 + m)] *
                             in2[static_cast<std::size_t>((i * C + t) * 8 + m)];
                h_next[static_cast<std::size_t>(i * C + t)] +=
                    inner * o[static_cast<std::size_t>(i * 3 * C + C + t)] +
                    o[static_cast<std::size_t>(i * 3 * C + 2 * C + t)];
            }

        // f update via vector rejections
        auto rej = [&](const std::vector<double>& gathered, const std::string& wpre) {
            auto lifted = perdeg(gathered, E, w(wpre + ".l1"), w(wpre + ".l2"), C);
            std::vector<double> out = gathered;
            for (std::int64_t e = 0; e < E; ++e)
                for (int t = 0; t < C; ++t) {
                    double d1 = 0.0, d2 = 0.0;
                    for (int m = 0; m < 3; ++m)
                        d1 += lifted[static_cast<std::size_t>((e * C + t) * 8 + m)] *
                              e_ij[static_cast<std::size_t>(e * 8 + m)];
                    for (int m = 3; m < 8; ++m)
                        d2 += lifted[static_cast<std::size_t>((e * C + t) * 8 + m)] *
                              e_ij[static_cast<std::size_t>(e * 8 + m)];
                    for (int m = 0; m < 3; ++m)
                        out[static_cast<std::size_t>((e * C + t) * 8 + m)] -=
                            d1 * e_ij[static_cast<std::size_t>(e * 8 + m)];
                    for (int m = 3; m < 8; ++m)
                        out[static_cast<std::size_t>((e * C + t) * 8 + m)] -=
                            d2 * e_ij[static_cast<std::size_t>(e * 8 + m)];
                }
            return out;
        };
        std::vector<double> gath_i(static_cast<std::size_t>(E * C) * 8);
        std::vector<double> gath_trg(static_cast<std::size_t>(E * C) * 8);
        for (std::int64_t e = 0; e < E; ++e) {
            const std::int64_t i = nl.center[static_cast<std::size_t>(e)];
            const std::int64_t j = nl.neighbor[static_cast<std::size_t>(e)];
            const std::int64_t trg =
                cfg.rejcalc_source == ModelConfig::RejSource::neighbor ? j : i;
            for (int t = 0; t < C; ++t)
                for (int m = 0; m < 8; ++m) {
                    gath_i[static_cast<std::size_t>((e * C + t) * 8 + m)] =
                        ebar[static_cast<std::size_t>((i * C + t) * 8 + m)];
                    gath_trg[static_cast<std::size_t>((e * C + t) * 8 + m)] =
                        ebar[static_cast<std::size_t>((trg * C + t) * 8 + m)];
                }
        }
        const auto w1v = rej(gath_trg, pre + "rej_trg");
        const auto w2v = rej(gath_i, pre + "rej_src");
        const auto fg = lin(f, E, C, w(pre + "fgate.w"), C, &w(pre + "fgate.b"));
        for (std::int64_t e = 0; e < E; ++e)
            for (int t = 0; t < C; ++t) {
                double dot = 0.0;
                for (int m = 0; m < 8; ++m)
                    dot += w1v[static_cast<std::size_t>((e * C + t) * 8 + m)] *
                           w2v[static_cast<std::size_t>((e * C + t) * 8 + m)];
                f[static_cast<std::size_t>(e * C + t)] +=
                    dot * silu(fg[static_cast<std::size_t>(e * C + t)]);
            }

        // commit residual state
        for (std::size_t idx = 0; idx < ebar.size(); ++idx) ebar[idx] += d_ebar[idx];
        h = h_next;
    }

    res.h = h;
    res.ebar = ebar;

    // output head
    std::vector<double> hh = h, ee = ebar;
    std::int64_t cin = C;
    if (cfg.head == ModelConfig::Head::equivariant_gated) {
        for (const std::string& gp : {std::string("head.g1."), std::string("head.g2.")}) {
            const std::int64_t cout = gp == "head.g1." ? C / 2 : 1;
            // perdeg over cin channels
            auto pd = [&](const std::vector<double>& x, const std::string& n1,
                          const std::string& n2) {
                std::vector<double> y(static_cast<std::size_t>(N * cout) * 8, 0.0);
                for (int i = 0; i < N; ++i)
                    for (std::int64_t o2 = 0; o2 < cout; ++o2)
                        for (std::int64_t t = 0; t < cin; ++t) {
                            const double wa = w(n1)[static_cast<std::size_t>(o2 * cin + t)];
                            const double wb = w(n2)[static_cast<std::size_t>(o2 * cin + t)];
                            for (int m = 0; m < 3; ++m)
                                y[static_cast<std::size_t>((i * cout + o2) * 8 + m)] +=
                                    wa * x[static_cast<std::size_t>((i * cin + t) * 8 + m)];
                            for (int m = 3; m < 8; ++m)
                                y[static_cast<std::size_t>((i * cout + o2) * 8 + m)] +=
                                    wb * x[static_cast<std::size_t>((i * cin + t) * 8 + m)];
                        }
                return y;
            };
            const auto v1 = pd(ee, gp + "v1.l1", gp + "v1.l2");
            std::vector<double> xin(static_cast<std::size_t>(N) *
                                    static_cast<std::size_t>(cin + cout));
            for (int i = 0; i < N; ++i) {
                for (std::int64_t t = 0; t < cin; ++t)
                    xin[static_cast<std::size_t>(i * (cin + cout) + t)] =
                        hh[static_cast<std::size_t>(i * cin + t)];
                for (std::int64_t o2 = 0; o2 < cout; ++o2) {
                    double n2 = 0.0;
                    for (int m = 0; m < 8; ++m) {
                        const double vv = v1[static_cast<std::size_t>((i * cout + o2) * 8 + m)];
                        n2 += vv * vv;
                    }
                    xin[static_cast<std::size_t>(i * (cin + cout) + cin + o2)] = std::sqrt(n2);
                }
            }
            const std::int64_t hidden = cin;
            auto z1 = lin(xin, N, cin + cout, w(gp + "mlp1.w"), hidden, &w(gp + "mlp1.b"));
            for (double& vz : z1) vz = silu(vz);
            const auto z2 = lin(z1, N, hidden, w(gp + "mlp2.w"), 2 * cout, &w(gp + "mlp2.b"));
            const auto v2 = pd(ee, gp + "v2.l1", gp + "v2.l2");
            std::vector<double> hn(static_cast<std::size_t>(N * cout));
            std::vector<double> en(static_cast<std::size_t>(N * cout) * 8);
            for (int i = 0; i < N; ++i)
                for (std::int64_t o2 = 0; o2 < cout; ++o2) {
                    hn[static_cast<std::size_t>(i * cout + o2)] =
                        z2[static_cast<std::size_t>(i * 2 * cout + o2)];
                    const double u = z2[static_cast<std::size_t>(i * 2 * cout + cout + o2)];
                    for (int m = 0; m < 8; ++m)
                        en[static_cast<std::size_t>((i * cout + o2) * 8 + m)] =
                            v2[static_cast<std::size_t>((i * cout + o2) * 8 + m)] * u;
                }
            hh = hn;
            ee = en;
            cin = cout;
        }
    } else {
        auto z1 = lin(hh, N, C, w("head.mlp1.w"), C / 2, &w("head.mlp1.b"));
        for (double& vz : z1) vz = silu(vz);
        hh = lin(z1, N, C / 2, w("head.mlp2.w"), 1, &w("head.mlp2.b"));
    }
    double y_sum = 0.0;
    for (int i = 0; i < N; ++i) y_sum += hh[static_cast<std::size_t>(i)];
    res.energy = model.energy_scale * y_sum + N * model.energy_shift;
    return res;
}

}  // namespace freecg::testing
