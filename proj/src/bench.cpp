#include "freecg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace freecg {

const char* path_mode_name(PathMode mode) {
    return mode == PathMode::O3_sparse ? "sparse" : "full";
}

std::string BenchReport::to_csv() const {
    std::string out = "mode,T,G,path_count,mult_count,add_count,median_ns,iqr_ns\n";
    char buf[192];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%lld,%lld,%lld,%.0f,%.0f\n", r.mode.c_str(),
                      r.channels, r.groups, static_cast<long long>(r.path_count),
                      static_cast<long long>(r.mult_count), static_cast<long long>(r.add_count),
                      r.median_ns, r.iqr_ns);
        out += buf;
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * (static_cast<double>(v.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

BenchReport bench_group_scaling(int channels, const std::vector<int>& groups, PathMode mode,
                                std::uint64_t seed) {
    BenchReport report;
    Rng rng(seed);
    std::vector<double> a(static_cast<std::size_t>(channels) * 8);
    std::vector<double> b(a.size());
    for (double& v : a) v = rng.uniform(-1.0, 1.0);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);

    for (int g : groups) {
        if (g < 1 || channels % g != 0)
            throw ConfigError("bench: group count " + std::to_string(g) +
                              " does not divide T = " + std::to_string(channels));
        const auto plan = make_group_cg_plan(channels, g, mode);
        std::vector<std::vector<double>> w;
        const std::int64_t per_path =
            static_cast<std::int64_t>(g) * plan->block * plan->block * plan->block;
        for (std::size_t p = 0; p < plan->paths.size(); ++p) {
            std::vector<double> wp(static_cast<std::size_t>(per_path));
            for (double& v : wp) v = rng.uniform(-1.0, 1.0);
            w.push_back(std::move(wp));
        }
        std::vector<const double*> wp;
        for (const auto& v : w) wp.push_back(v.data());
        std::vector<double> out(a.size(), 0.0);

        auto run_once = [&] {
            std::fill(out.begin(), out.end(), 0.0);
            cg_apply(*plan, CgRole::Out, a.data(), b.data(), wp.data(), out.data(), 1, 1, nullptr);
        };

        // probe, then batch calls until one repetition is well above the
        // timer resolution
        int inner = 1;
        for (;;) {
            const auto t0 = Clock::now();
            for (int k = 0; k < inner; ++k) run_once();
            const double ns =
                static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                        Clock::now() - t0)
                                        .count());
            if (ns >= 50000.0 || inner >= (1 << 20)) break;
            inner *= 2;
        }

        for (int k = 0; k < 5; ++k) run_once();  // warmup
        const int reps = 30;
        std::vector<double> samples;
        samples.reserve(reps);
        for (int r = 0; r < reps; ++r) {
            const auto t0 = Clock::now();
            for (int k = 0; k < inner; ++k) run_once();
            const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                                Clock::now() - t0)
                                .count();
            samples.push_back(static_cast<double>(ns) / inner);
        }

        OpCounter counter;
        std::fill(out.begin(), out.end(), 0.0);
        cg_apply(*plan, CgRole::Out, a.data(), b.data(), wp.data(), out.data(), 1, 1, &counter);

        BenchRow row;
        row.mode = path_mode_name(mode);
        row.channels = channels;
        row.groups = g;
        row.path_count = static_cast<std::int64_t>(plan->paths.size());
        row.mult_count = counter.mults;
        row.add_count = counter.adds;
        row.median_ns = quantile(samples, 0.5);
        row.iqr_ns = quantile(samples, 0.75) - quantile(samples, 0.25);
        report.rows.push_back(row);
    }

    // the coefficient-stage work must scale exactly as T^2/G
    const OpCount base = count_basic_ops(mode, channels, 1);
    for (const BenchRow& r : report.rows) {
        if (r.mult_count * r.groups != base.mults || r.add_count * r.groups != base.adds)
            throw Error("bench: instrumented counts deviate from the T^2/G law at G = " +
                        std::to_string(r.groups));
    }
    return report;
}

std::string bench_path_table_csv() {
    struct Ref {
        int l1, l2, lo;
        int ops;
    };
    // operation numbers as reported for the complex-basis convention
    static const Ref refs[] = {{0, 0, 0, 1},  {1, 1, 0, 3},  {2, 2, 0, 5},  {0, 1, 1, 3},
                               {1, 0, 1, 3},  {1, 1, 1, 6},  {1, 2, 1, 9},  {2, 1, 1, 9},
                               {2, 2, 1, 12}, {0, 2, 2, 5},  {2, 0, 2, 5},  {1, 1, 2, 9},
                               {1, 2, 2, 12}, {2, 1, 2, 12}, {2, 2, 2, 19}};

    std::string out = "l1,l2,lo,parity_allowed,mult_count,add_count,complex_basis_ref_ops,note\n";
    char buf[256];
    for (const CgCoupling& c : cg_table().couplings()) {
        int ref = -1;
        for (const Ref& r : refs)
            if (r.l1 == c.l1 && r.l2 == c.l2 && r.lo == c.lo) ref = r.ops;
        const char* note = (c.l1 == 1 && c.l2 == 1 && c.lo == 2)
                               ? "complex-basis worked example: 13 ops total = 9 mult + 4 add"
                               : "";
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%lld,%lld,%d,%s\n", c.l1, c.l2, c.lo,
                      c.parity_allowed ? 1 : 0, static_cast<long long>(c.mult_per_pair),
                      static_cast<long long>(c.add_per_pair), ref, note);
        out += buf;
    }
    return out;
}

}  // namespace freecg
