#pragma once

// Training loop: AdamW with decoupled weight decay, linear warmup, plateau
// learning-rate decay, gradient clipping, and an EMA parameter shadow used
// for validation and checkpoint selection.

#include <cstdint>
#include <string>
#include <vector>

#include "freecg/data.hpp"
#include "freecg/model.hpp"

namespace freecg {

struct TrainConfig {
    double lr = 1e-3;
    int warmup_steps = 100;
    double decay_factor = 0.8;
    int decay_patience = 5;  // epochs without val improvement before decay
    double force_weight = 0.95;
    double energy_weight = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double ema_rate = 0.999;
    int batch_size = 4;
    int max_epochs = 40;
    std::int64_t max_steps = 0;  // 0: no step cap
    int early_stop_patience = 0; // 0: disabled
    double clip_norm = 10.0;
    std::uint64_t seed = 0;
    double val_frac = 0.1;   // used when the caller assigns splits from raw files
    double test_frac = 0.1;

    void validate() const;  // throws ConfigError
};

struct Prediction {
    double energy = 0.0;
    std::vector<std::array<double, 3>> forces;
};

// force_weight * mean squared force error (per component, over the batch)
// + energy_weight * mean squared energy error (per frame).
// Throws ContractViolation when a frame lacks labels.
double batch_loss(const std::vector<Prediction>& preds,
                  const std::vector<const MoleculeFrame*>& frames, double force_weight,
                  double energy_weight);

struct EvalMetrics {
    double energy_mae = 0.0;  // kcal/mol per frame
    double force_mae = 0.0;   // kcal/mol/A per component
};

EvalMetrics evaluate_frames(const Model& model, const std::vector<const MoleculeFrame*>& frames);
EvalMetrics evaluate_split(const Model& model, const Dataset& ds, int which);

inline constexpr const char* kMetricsHeader = "epoch,lr,train_loss,val_energy_mae,val_force_mae";

struct TrainResult {
    int best_epoch = -1;
    double best_val_loss = 0.0;
    EvalMetrics best_val;
    std::int64_t steps_run = 0;
    std::vector<std::string> metrics_rows;  // kMetricsHeader columns
};

// Trains in place; on return the model carries the EMA weights of the best
// validation epoch. metrics_path, when nonempty, receives the per-epoch CSV.
TrainResult train_model(Model& model, const Dataset& dataset, const TrainConfig& cfg,
                        const std::string& metrics_path = {});

}  // namespace freecg
