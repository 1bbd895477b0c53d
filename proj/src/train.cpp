#include "freecg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace freecg {

void TrainConfig::validate() const {
    if (lr < 0.0) throw ConfigError("lr must be non-negative");
    if (std::abs(force_weight + energy_weight - 1.0) > 1e-12)
        throw ConfigError("force_weight + energy_weight must equal 1");
    auto rate = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!rate(decay_factor) || !rate(beta1) || !rate(beta2) || !rate(ema_rate))
        throw ConfigError("decay_factor, betas and ema_rate must lie in (0, 1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (warmup_steps < 0 || decay_patience < 0 || early_stop_patience < 0)
        throw ConfigError("step/patience settings must be non-negative");
    if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0)
        throw ConfigError("val_frac and test_frac must be non-negative and sum below 1");
}

double batch_loss(const std::vector<Prediction>& preds,
                  const std::vector<const MoleculeFrame*>& frames, double force_weight,
                  double energy_weight) {
    if (preds.size() != frames.size() || frames.empty())
        throw ContractViolation("batch_loss: prediction/frame count mismatch");
    double e_sse = 0.0, f_sse = 0.0;
    std::int64_t f_comps = 0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const MoleculeFrame& fr = *frames[k];
        if (!fr.has_energy || !fr.has_forces())
            throw ContractViolation("batch_loss: frame is missing energy/force labels");
        const double de = preds[k].energy - fr.energy;
        e_sse += de * de;
        for (int i = 0; i < fr.n(); ++i)
            for (int c = 0; c < 3; ++c) {
                const double df =
                    preds[k].forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -
                    fr.forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                f_sse += df * df;
                ++f_comps;
            }
    }
    return force_weight * f_sse / static_cast<double>(f_comps) +
           energy_weight * e_sse / static_cast<double>(frames.size());
}

EvalMetrics evaluate_frames(const Model& model, const std::vector<const MoleculeFrame*>& frames) {
    EvalMetrics m;
    std::int64_t f_comps = 0;
    for (const MoleculeFrame* fr : frames) {
        const auto out = model.evaluate(*fr, fr->has_forces());
        if (fr->has_energy) m.energy_mae += std::abs(out.energy - fr->energy);
        if (fr->has_forces())
            for (int i = 0; i < fr->n(); ++i)
                for (int c = 0; c < 3; ++c) {
                    m.force_mae += std::abs(
                        out.forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -
                        fr->forces[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
                    ++f_comps;
                }
    }
    if (!frames.empty()) m.energy_mae /= static_cast<double>(frames.size());
    if (f_comps) m.force_mae /= static_cast<double>(f_comps);
    return m;
}

EvalMetrics evaluate_split(const Model& model, const Dataset& ds, int which) {
    std::vector<const MoleculeFrame*> frames;
    for (std::size_t i : ds.indices_of(which)) frames.push_back(&ds.frames[i]);
    return evaluate_frames(model, frames);
}

namespace {

struct FlatParams {
    // concatenated view of all parameter arrays, offsets per array
    std::vector<std::size_t> offset;
    std::size_t total = 0;

    explicit FlatParams(const ParamStore& store) {
        for (const NamedArray& a : store.arrays()) {
            offset.push_back(total);
            total += static_cast<std::size_t>(a.numel());
        }
    }
};

std::vector<double> snapshot(const ParamStore& store, const FlatParams& fp) {
    std::vector<double> flat(fp.total);
    for (std::size_t i = 0; i < store.arrays().size(); ++i)
        std::copy(store.arrays()[i].values.begin(), store.arrays()[i].values.end(),
                  flat.begin() + static_cast<std::ptrdiff_t>(fp.offset[i]));
    return flat;
}

void restore(ParamStore& store, const FlatParams& fp, const std::vector<double>& flat) {
    for (std::size_t i = 0; i < store.arrays().size(); ++i) {
        auto& v = store.arrays()[i].values;
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(fp.offset[i]), v.size(),
                    v.begin());
    }
}

// per-frame weighted squared-error loss node; weights premultiplied so the
// batch loss is the plain sum of the per-frame scalars
Tensor frame_loss_node(Tape& t, const Model::TapeOutput& out, const MoleculeFrame& frame,
                       double e_coef, double f_coef) {
    Tensor de = t.add_const(out.energy, -frame.energy);
    Tensor loss = t.scalar_mul(t.mul(de, de), e_coef);
    std::vector<double> fl;
    fl.reserve(static_cast<std::size_t>(frame.n()) * 3);
    for (const auto& f : frame.forces) fl.insert(fl.end(), f.begin(), f.end());
    Tensor df = t.sub(out.forces, t.constant({frame.n(), 3}, std::move(fl)));
    Tensor f_sse = t.sum(t.sum(t.mul(df, df), 1), 0);
    return t.add(loss, t.scalar_mul(f_sse, f_coef));
}

}  // namespace

TrainResult train_model(Model& model, const Dataset& dataset, const TrainConfig& cfg,
                        const std::string& metrics_path) {
    cfg.validate();
    const auto train_idx = dataset.indices_of(0);
    const auto val_idx = dataset.indices_of(1);
    if (train_idx.empty() || val_idx.empty())
        throw ContractViolation("train: empty train or validation split");
    for (std::size_t i : train_idx) {
        const MoleculeFrame& fr = dataset.frames[i];
        if (!fr.has_energy || !fr.has_forces())
            throw ContractViolation("train: frame " + std::to_string(i) + " lacks labels");
    }

    // label normalization from the training split: per-atom mean energy as
    // the shift, force-component standard deviation as the scale
    {
        double e_per_atom = 0.0;
        double f_sq = 0.0, f_mean = 0.0;
        std::int64_t f_n = 0;
        for (std::size_t i : train_idx) {
            const MoleculeFrame& fr = dataset.frames[i];
            e_per_atom += fr.energy / fr.n();
            for (const auto& f : fr.forces)
                for (double c : f) {
                    f_mean += c;
                    f_sq += c * c;
                    ++f_n;
                }
        }
        e_per_atom /= static_cast<double>(train_idx.size());
        f_mean /= static_cast<double>(f_n);
        const double f_std = std::sqrt(std::max(f_sq / static_cast<double>(f_n) - f_mean * f_mean,
                                                1e-12));
        model.energy_shift = e_per_atom;
        model.energy_scale = f_std;
    }

    const FlatParams fp(model.params);
    std::vector<double> m1(fp.total, 0.0), m2(fp.total, 0.0);
    std::vector<double> ema = snapshot(model.params, fp);
    std::vector<double> best = ema;
    double best_val_loss = std::numeric_limits<double>::infinity();
    EvalMetrics best_val;
    int best_epoch = -1;

    TrainResult result;
    result.metrics_rows.push_back(kMetricsHeader);

    Rng shuffle_rng(cfg.seed);
    double lr_base = cfg.lr;
    std::int64_t step = 0;
    int epochs_since_improve = 0;
    double last_effective_lr = 0.0;

    const double fw = cfg.force_weight, ew = cfg.energy_weight;

    auto val_loss_fn = [&]() {
        // weighted MSE over the full validation split, EMA weights assumed
        double e_sse = 0.0, f_sse = 0.0;
        std::int64_t f_comps = 0;
        for (std::size_t i : val_idx) {
            const MoleculeFrame& fr = dataset.frames[i];
            const auto out = model.evaluate(fr, true);
            const double de = out.energy - fr.energy;
            e_sse += de * de;
            for (int a = 0; a < fr.n(); ++a)
                for (int c = 0; c < 3; ++c) {
                    const double df =
                        out.forces[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] -
                        fr.forces[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)];
                    f_sse += df * df;
                    ++f_comps;
                }
        }
        return fw * f_sse / static_cast<double>(f_comps) +
               ew * e_sse / static_cast<double>(val_idx.size());
    };

    bool stop = false;
    for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::int64_t epoch_batches = 0;
        for (std::size_t pos = 0; pos < order.size() && !stop;
             pos += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t bend =
                std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            const int bsize = static_cast<int>(bend - pos);
            std::int64_t f_comps = 0;
            for (std::size_t k = pos; k < bend; ++k)
                f_comps += 3 * dataset.frames[order[k]].n();
            const double e_coef = ew / bsize;
            const double f_coef = fw / static_cast<double>(f_comps);

            std::vector<std::vector<double>> frame_grads(static_cast<std::size_t>(bsize));
            std::vector<double> frame_losses(static_cast<std::size_t>(bsize), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(effective_threads()) if (bsize > 1)
#endif
            for (int b = 0; b < bsize; ++b) {
                const MoleculeFrame& fr = dataset.frames[order[pos + static_cast<std::size_t>(b)]];
                Tape tape(model.config.precision);
                const auto out = model.forward(tape, fr, true, true);
                Tensor loss = frame_loss_node(tape, out, fr, e_coef, f_coef);
                frame_losses[static_cast<std::size_t>(b)] = loss.scalar();
                auto gm = tape.backward(loss);
                std::vector<double>& g = frame_grads[static_cast<std::size_t>(b)];
                g.resize(fp.total);
                for (std::size_t a = 0; a < out.param_leaves.size(); ++a) {
                    const auto& gv = gm.at(out.param_leaves[a]).values();
                    std::copy(gv.begin(), gv.end(),
                              g.begin() + static_cast<std::ptrdiff_t>(fp.offset[a]));
                }
            }

            // ordered reduction keeps the step bitwise stable across thread counts
            std::vector<double> grad(fp.total, 0.0);
            double batch_loss_value = 0.0;
            for (int b = 0; b < bsize; ++b) {
                const double fl = frame_losses[static_cast<std::size_t>(b)];
                if (!std::isfinite(fl))
                    throw Error("nan loss at dataset frame " +
                                std::to_string(order[pos + static_cast<std::size_t>(b)]));
                batch_loss_value += fl;
                const auto& g = frame_grads[static_cast<std::size_t>(b)];
                for (std::size_t k = 0; k < fp.total; ++k) grad[k] += g[k];
            }
            epoch_loss += batch_loss_value;
            ++epoch_batches;

            // global-norm clip
            double g2 = 0.0;
            for (double g : grad) g2 += g * g;
            if (!std::isfinite(g2)) throw Error("nan gradient at step " + std::to_string(step));
            const double gnorm = std::sqrt(g2);
            if (cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm) {
                const double s = cfg.clip_norm / gnorm;
                for (double& g : grad) g *= s;
            }

            ++step;
            const double warm =
                cfg.warmup_steps > 0
                    ? std::min(1.0, static_cast<double>(step) / cfg.warmup_steps)
                    : 1.0;
            const double lr = lr_base * warm;
            last_effective_lr = lr;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));

            std::size_t k = 0;
            for (NamedArray& a : model.params.arrays())
                for (double& p : a.values) {
                    const double g = grad[k];
                    m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g;
                    m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g * g;
                    const double mhat = m1[k] / bc1;
                    const double vhat = m2[k] / bc2;
                    p -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * p);
                    ++k;
                }

            // EMA shadow; increment form is exact when parameters stand still
            k = 0;
            for (const NamedArray& a : model.params.arrays())
                for (const double p : a.values) {
                    ema[k] += (1.0 - cfg.ema_rate) * (p - ema[k]);
                    ++k;
                }

            if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
        }

        // validation with the EMA weights
        const std::vector<double> live = snapshot(model.params, fp);
        restore(model.params, fp, ema);
        const double vloss = val_loss_fn();
        const EvalMetrics vmet = evaluate_split(model, dataset, 1);
        restore(model.params, fp, live);

        if (vloss < best_val_loss) {
            best_val_loss = vloss;
            best = ema;
            best_epoch = epoch;
            best_val = vmet;
            epochs_since_improve = 0;
        } else {
            ++epochs_since_improve;
            if (cfg.decay_patience > 0 && epochs_since_improve >= cfg.decay_patience &&
                epochs_since_improve % cfg.decay_patience == 0)
                lr_base *= cfg.decay_factor;
            if (cfg.early_stop_patience > 0 && epochs_since_improve >= cfg.early_stop_patience)
                stop = true;
        }

        char row[160];
        std::snprintf(row, sizeof(row), "%d,%.8g,%.8g,%.8g,%.8g", epoch, last_effective_lr,
                      epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0,
                      vmet.energy_mae, vmet.force_mae);
        result.metrics_rows.emplace_back(row);
    }

    restore(model.params, fp, best);
    result.best_epoch = best_epoch;
    result.best_val_loss = best_val_loss;
    result.best_val = best_val;
    result.steps_run = step;

    if (!metrics_path.empty()) {
        std::ofstream out(metrics_path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + metrics_path + "' for writing");
        for (const std::string& row : result.metrics_rows) out << row << '\n';
    }
    return result;
}

}  // namespace freecg
