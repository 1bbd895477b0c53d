// Compares the OpenMP factorized grouped-CG kernel against the serial
// reference loop: correctness (max abs deviation) and wall time per call.

#include <chrono>
#include <cstdio>
#include <vector>

#include "freecg/cg_ops.hpp"

using namespace freecg;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

}  // namespace

int main() {
    Rng rng(17);
    const int rows = 8;
    std::printf("%-8s %6s %6s | %12s %12s %12s | %10s\n", "mode", "T", "G", "reference_ms",
                "kernel_1t_ms", "kernel_nt_ms", "max_dev");
    for (PathMode mode : {PathMode::O3_sparse, PathMode::SO3_full})
        for (int T : {64, 128})
            for (int G : {1, 8}) {
                const auto plan = make_group_cg_plan(T, G, mode);
                std::vector<double> a(static_cast<std::size_t>(rows * T * 8));
                std::vector<double> b(a.size());
                for (double& v : a) v = rng.uniform(-1.0, 1.0);
                for (double& v : b) v = rng.uniform(-1.0, 1.0);
                std::vector<std::vector<double>> w;
                for (std::size_t p = 0; p < plan->paths.size(); ++p) {
                    w.emplace_back(static_cast<std::size_t>(G) * plan->block * plan->block *
                                   plan->block);
                    for (double& v : w.back()) v = rng.uniform(-1.0, 1.0);
                }
                std::vector<const double*> wp;
                for (const auto& v : w) wp.push_back(v.data());

                std::vector<double> ref(a.size(), 0.0), fast(a.size(), 0.0);
                const double t_ref = time_ms(
                    [&] {
                        std::fill(ref.begin(), ref.end(), 0.0);
                        group_cg_reference(*plan, a.data(), b.data(), wp.data(), ref.data(), rows);
                    },
                    3);
                const double t_one = time_ms(
                    [&] {
                        std::fill(fast.begin(), fast.end(), 0.0);
                        cg_apply(*plan, CgRole::Out, a.data(), b.data(), wp.data(), fast.data(),
                                 rows, 1, nullptr);
                    },
                    10);
                const double t_many = time_ms(
                    [&] {
                        std::fill(fast.begin(), fast.end(), 0.0);
                        cg_apply(*plan, CgRole::Out, a.data(), b.data(), wp.data(), fast.data(),
                                 rows, effective_threads(), nullptr);
                    },
                    10);
                double dev = 0.0;
                for (std::size_t i = 0; i < ref.size(); ++i)
                    dev = std::max(dev, std::abs(ref[i] - fast[i]));
                std::printf("%-8s %6d %6d | %12.3f %12.3f %12.3f | %10.3g\n",
                            mode == PathMode::O3_sparse ? "sparse" : "full", T, G, t_ref, t_one,
                            t_many, dev);
            }
    return 0;
}
