#pragma once

// Clebsch-Gordan transform kernels over the fixed (l=1)+(l=2) layout:
//   - cg_transform: plain channelwise single-path transform
//   - group_cg:     per-group fully-connected weighted transform; outputs of
//                   paths with the same lo sum into the same block
//   - shuffle:      cyclic channel permutation shared by every layer
//
// The grouped kernel is factorized: per channel pair it first applies the
// CG coefficients, then mixes channels with the per-group weight block.
// Operation counters tally the coefficient stage, the unit the complexity
// claims are stated in: one "mult" per coefficient application per channel
// pair, one "add" per accumulation onto an already-written output slot.
// The channel-mixing contraction is ordinary dense linear algebra and is
// not counted.
//
// group_cg_reference is the straightforward serial loop kept as the
// testing oracle for the parallel factorized kernel.

#include <cstdint>
#include <memory>

#include "freecg/irreps.hpp"
#include "freecg/tensor.hpp"

namespace freecg {

struct OpCounter {
    std::int64_t mults = 0;
    std::int64_t adds = 0;
};

struct OpCount {
    std::int64_t mults = 0;
    std::int64_t adds = 0;
};

// Weight layout per path: [G][bs*bs*bs] with index ((to*bs + t1)*bs + t2),
// channel block size bs = T/G; channel t lives in group t / bs.
struct GroupCgPlan {
    int channels = 0;  // T
    int groups = 0;    // G
    int block = 0;     // T/G
    PathMode mode = PathMode::O3_sparse;
    std::vector<CgPath> paths;
    std::vector<const CgCoupling*> couplings;          // one per path
    std::vector<std::shared_ptr<GroupCgPlan>> single;  // one-path sub-plans
};

// Validates G >= 1 and G | T (ConfigError otherwise).
std::shared_ptr<const GroupCgPlan> make_group_cg_plan(int channels, int groups, PathMode mode);

// Closed-form operation count of the coefficient stage for one application
// (one row of T channels): mults = sum_p nnz_p * T^2/G, adds likewise from
// per-slot accumulations. Exactly inversely proportional to G.
OpCount count_basic_ops(PathMode mode, int channels, int groups);

// Which trilinear slot the kernel solves for; GradA/GradB are the adjoints
// of the forward (Out) contraction and share its machinery.
enum class CgRole { Out, GradA, GradB };

// Factorized kernel. x/y are the two known slots in role order:
//   Out:   x = A (slot 1), y = B (slot 2)
//   GradA: x = dOut (slot o), y = B (slot 2)
//   GradB: x = dOut (slot o), y = A (slot 1)
// All tensors are rows x T x 8, row-major. w[p] points at path p's weights.
// Deterministic for any thread count (each (row, group) owns its output).
void cg_apply(const GroupCgPlan& plan, CgRole role, const double* x, const double* y,
              const double* const* w, double* out, std::int64_t rows, int n_threads,
              OpCounter* counter);

// Weight gradient for one path: dw[g][(to*bs+t1)*bs+t2] accumulated over rows.
void cg_weight_grad(const GroupCgPlan& plan, int path_idx, const double* d_out, const double* a,
                    const double* b, double* dw, std::int64_t rows, int n_threads);

// Serial reference: naive loop over (group, to, t1, t2, coefficient).
void group_cg_reference(const GroupCgPlan& plan, const double* a, const double* b,
                        const double* const* w, double* out, std::int64_t rows);

// Channelwise unweighted single-path transform. a/b are channels x 8; the
// result fills the lo block of a channels x 8 output, zero elsewhere.
// Throws Error when the path's coupling is absent from the table.
std::vector<double> cg_transform(const CgPath& path, const std::vector<double>& a,
                                 const std::vector<double>& b, std::int64_t channels);

// --- tape bindings -----------------------------------------------------------

// a, b: [rows, T, 8]; w: one [G, bs, bs, bs] tensor per path in plan order.
Tensor group_cg(Tape& tape, Tensor a, Tensor b, std::shared_ptr<const GroupCgPlan> plan,
                const std::vector<Tensor>& w, OpCounter* counter = nullptr);

// --- shuffling ----------------------------------------------------------------

struct ShuffleSpec {
    int channels = 0;
    int shift = 0;  // pi(t) = (t + shift) mod T

    std::int64_t apply(std::int64_t t) const { return (t + shift) % channels; }
};

// shift = floor(multiplier * T / G) mod T
ShuffleSpec make_shuffle_spec(double multiplier, int channels, int groups);

// out[:, pi(t), :] = x[:, t, :] for x of shape [rows, T, 8]
Tensor shuffle_channels(Tape& tape, Tensor x, const ShuffleSpec& spec);

// plain-array variant for tests and reference paths
std::vector<double> shuffle_apply(const ShuffleSpec& spec, const std::vector<double>& x,
                                  std::int64_t rows);

}  // namespace freecg
