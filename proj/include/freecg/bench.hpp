#pragma once

// Micro-benchmarks for the grouped CG kernel: exact operation counts per
// configuration and wall-clock group-scaling measurements. The timed region
// runs single-threaded and excludes table construction and weight
// initialization; repetitions grow automatically when the timer resolution
// is too coarse for a single call.

#include <cstdint>
#include <string>
#include <vector>

#include "freecg/cg_ops.hpp"

namespace freecg {

struct BenchRow {
    std::string mode;  // "sparse" or "full"
    int channels = 0;
    int groups = 0;
    std::int64_t path_count = 0;
    std::int64_t mult_count = 0;
    std::int64_t add_count = 0;
    double median_ns = 0.0;
    double iqr_ns = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::string to_csv() const;  // header: mode,T,G,path_count,mult_count,add_count,median_ns,iqr_ns
};

// Times group_cg forward on random inputs (one application of T channels)
// for every group count; >= 5 warmups and >= 30 timed repetitions per row.
// Verifies that the instrumented multiplication counts scale exactly as
// T^2/G before returning.
BenchReport bench_group_scaling(int channels, const std::vector<int>& groups, PathMode mode,
                                std::uint64_t seed);

// Per-coupling coefficient-stage counts in this real basis, alongside the
// operation numbers reported for the complex spherical-harmonic basis.
// The (1,1->2) row also carries that basis' worked example: 13 basic
// operations total, 9 of them multiplies.
std::string bench_path_table_csv();

const char* path_mode_name(PathMode mode);

}  // namespace freecg
