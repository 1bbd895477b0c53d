#pragma once

// The message-passing network: type embedding, radial edge features,
// cross-attention with the abstract-edge enhancer, grouped CG update of the
// per-atom abstract edges with channel shuffling, scalar/edge feature
// updates, gated equivariant or scalar output head, energy and exact
// forces via the tape.

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "freecg/cg_ops.hpp"
#include "freecg/frame.hpp"
#include "freecg/tensor.hpp"

namespace freecg {

struct ModelConfig {
    int channels = 64;  // C; also the abstract-edge count T
    int layers = 2;
    int heads = 8;
    int num_rbf = 32;
    double cutoff = 5.0;  // Angstrom
    int groups = 8;
    double shuffle_multiplier = 1.5;  // 0.5, 1.0 or 1.5
    PathMode mode = PathMode::O3_sparse;

    enum class Head { equivariant_gated, scalar };
    Head head = Head::equivariant_gated;

    bool enhancer = true;
    enum class EnhancerSource { neighbor, central };  // Ebar_j (default) or Ebar_i
    EnhancerSource enhancer_source = EnhancerSource::neighbor;

    enum class RejSource { central, neighbor };  // src/trg wiring of the rejection update
    RejSource rejcalc_source = RejSource::central;

    Precision precision = Precision::f64;

    void validate() const;  // throws ConfigError
};

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> values;

    std::int64_t numel() const { return freecg::numel(shape); }
};

class ParamStore {
public:
    NamedArray& add(std::string name, Shape shape, std::vector<double> values);
    NamedArray& at(const std::string& name);
    const NamedArray& at(const std::string& name) const;
    bool has(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    std::vector<NamedArray>& arrays() { return arrays_; }
    const std::vector<NamedArray>& arrays() const { return arrays_; }
    std::size_t size() const { return arrays_.size(); }
    std::int64_t parameter_count() const;

private:
    std::vector<NamedArray> arrays_;  // insertion order is the canonical order
    std::unordered_map<std::string, std::size_t> index_;
};

// plain-value helpers (mirrored by the tape program; tests pin agreement)
double cosine_cutoff(double r, double r_c);
// 0 < r <= r_c enforced; returns the RBF values (cutoff already applied)
// and the cutoff weight
std::pair<std::vector<double>, double> radial_features(double r, double r_c,
                                                       const std::vector<double>& means,
                                                       const std::vector<double>& betas);
// max over channels of the full 8-component dot product
double attention_enhancer(const std::vector<double>& abstract_edges /* C x 8 */,
                          const std::array<double, 8>& edge);

class Model {
public:
    explicit Model(ModelConfig cfg);

    void init_params(std::uint64_t seed);

    // label normalization applied to the summed head output:
    // y = energy_scale * sum_i h_i + N * energy_shift
    double energy_scale = 1.0;
    double energy_shift = 0.0;

    struct TapeOutput {
        Tensor energy;          // scalar
        Tensor forces;          // [N,3]; undefined when not requested
        Tensor positions;       // the position leaf
        Tensor abstract_edges;  // final trunk Ebar [N,C,8]
        Tensor node_scalars;    // final trunk h [N,C]
        Tensor head_scalars;    // per-atom head output [N,1]
        Tensor head_edges;      // [N,1,8]; defined for the equivariant head
        std::vector<Tensor> param_leaves;  // aligned with params.arrays()
    };
    TapeOutput forward(Tape& tape, const MoleculeFrame& frame, bool need_forces,
                       bool params_require_grad) const;

    struct Output {
        double energy = 0.0;
        std::vector<std::array<double, 3>> forces;
        std::vector<double> abstract_edges;  // N*C*8
        std::vector<double> node_scalars;    // N*C
    };
    Output evaluate(const MoleculeFrame& frame, bool need_forces) const;

    // requires frame masses and the equivariant head
    std::pair<double, double> dipole_and_extent(const MoleculeFrame& frame) const;

    const std::shared_ptr<const GroupCgPlan>& cg_plan() const { return plan_; }
    const ShuffleSpec& shuffle_spec() const { return shuffle_; }

    ModelConfig config;
    ParamStore params;

private:
    std::shared_ptr<const GroupCgPlan> plan_;
    ShuffleSpec shuffle_;
};

}  // namespace freecg
