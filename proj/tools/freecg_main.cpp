// freecg command-line interface:
//   gen-data | train | eval | check | bench-paths | bench-group | info
// Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "freecg/bench.hpp"
#include "freecg/checkpoint.hpp"
#include "freecg/config.hpp"
#include "freecg/data.hpp"
#include "freecg/train.hpp"
#include "freecg/verify.hpp"

namespace {

using namespace freecg;

struct Flags {
    // gen-data
    int atoms = 5;
    int frames = 500;
    std::uint64_t seed = 0;
    std::string out;
    // train/eval shared
    std::string config_path;
    std::string data_path;
    std::string ckpt_path;
    std::string metrics_path;
    // check
    std::string suite = "all";
    // bench
    int bench_t = 512;
    std::string bench_groups = "1,2,4,8,16,32";
    std::string bench_mode = "sparse";
    std::string csv_path;
};

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos
                                                                         : comma - pos);
        if (!tok.empty()) out.push_back(std::stoi(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError("empty group list");
    return out;
}

PathMode parse_mode(const std::string& s) {
    if (s == "sparse") return PathMode::O3_sparse;
    if (s == "full") return PathMode::SO3_full;
    throw ConfigError("mode must be sparse or full, got '" + s + "'");
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::fputs(text.c_str(), stdout);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw IoError("write to '" + path + "' failed");
}

int cmd_gen_data(const Flags& fl) {
    if (fl.atoms < 2 || fl.atoms > 16) throw ConfigError("--atoms must be in [2, 16]");
    if (fl.frames < 1) throw ConfigError("--frames must be >= 1");
    MorseOracle oracle;
    const Dataset ds = generate_synthetic(fl.frames, fl.atoms, fl.seed, oracle);
    save_xyz(fl.out, ds.frames);
    std::printf("wrote %d frames (%d atoms each) to %s\n", fl.frames, fl.atoms, fl.out.c_str());
    return 0;
}

int cmd_train(const Flags& fl, const KeyValues& flag_overrides) {
    ModelConfig mc;
    TrainConfig tc;
    KeyValues kv;
    if (!fl.config_path.empty()) kv = parse_config_file(fl.config_path);
    for (const auto& [k, v] : flag_overrides) kv[k] = v;  // flags win over the file
    apply_all_keys_or_throw(mc, tc, kv);
    mc.validate();
    tc.validate();

    Dataset ds;
    ds.frames = load_xyz(fl.data_path);
    ds.split = assign_splits(ds.frames.size(), tc.seed, tc.val_frac, tc.test_frac);

    Model model(mc);
    model.init_params(tc.seed);
    const std::string metrics =
        fl.metrics_path.empty() ? fl.ckpt_path + ".metrics.csv" : fl.metrics_path;
    const TrainResult res = train_model(model, ds, tc, metrics);
    save_checkpoint(fl.ckpt_path, model);

    const EvalMetrics test = evaluate_split(model, ds, 2);
    std::printf("best epoch %d  val_loss %.6g  val E/F MAE %.6g / %.6g\n", res.best_epoch,
                res.best_val_loss, res.best_val.energy_mae, res.best_val.force_mae);
    std::printf("test  energy_mae=%.6g kcal/mol  force_mae=%.6g kcal/mol/A\n", test.energy_mae,
                test.force_mae);
    std::printf("checkpoint: %s\nmetrics: %s\n", fl.ckpt_path.c_str(), metrics.c_str());
    return 0;
}

int cmd_eval(const Flags& fl, const std::optional<int>& expect_channels,
             const std::optional<int>& expect_layers) {
    Model model = load_checkpoint(fl.ckpt_path);
    if (expect_channels && *expect_channels != model.config.channels)
        throw ConfigError("checkpoint has channels=" + std::to_string(model.config.channels) +
                          ", requested --channels " + std::to_string(*expect_channels));
    if (expect_layers && *expect_layers != model.config.layers)
        throw ConfigError("checkpoint has layers=" + std::to_string(model.config.layers) +
                          ", requested --layers " + std::to_string(*expect_layers));
    const auto frames = load_xyz(fl.data_path);
    std::vector<const MoleculeFrame*> ptrs;
    for (const auto& f : frames) ptrs.push_back(&f);
    const EvalMetrics m = evaluate_frames(model, ptrs);
    std::printf("frames=%zu energy_mae=%.8g kcal/mol force_mae=%.8g kcal/mol/A\n", frames.size(),
                m.energy_mae, m.force_mae);
    return 0;
}

int cmd_check(const Flags& fl) {
    const auto results = run_check_suites({fl.suite}, fl.seed);
    bool all = true;
    for (const SuiteResult& r : results) {
        std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        all = all && r.pass;
    }
    return all ? 0 : 1;
}

int cmd_bench_paths(const Flags& fl) {
    write_text(fl.csv_path, bench_path_table_csv());
    return 0;
}

int cmd_bench_group(const Flags& fl) {
    const BenchReport report =
        bench_group_scaling(fl.bench_t, parse_int_list(fl.bench_groups), parse_mode(fl.bench_mode),
                            fl.seed);
    write_text(fl.csv_path, report.to_csv());
    return 0;
}

int cmd_info(const Flags& fl) {
    const Model model = load_checkpoint(fl.ckpt_path);
    const ModelConfig& c = model.config;
    std::printf("channels=%d layers=%d heads=%d num_rbf=%d cutoff=%.3g groups=%d\n", c.channels,
                c.layers, c.heads, c.num_rbf, c.cutoff, c.groups);
    std::printf("mode=%s shuffle_multiplier=%.2g head=%s enhancer=%s\n",
                path_mode_name(c.mode), c.shuffle_multiplier,
                c.head == ModelConfig::Head::equivariant_gated ? "equivariant" : "scalar",
                c.enhancer ? "on" : "off");
    std::printf("energy_scale=%.8g energy_shift=%.8g\n", model.energy_scale, model.energy_shift);
    std::printf("parameters: %lld in %zu arrays\n",
                static_cast<long long>(model.params.parameter_count()), model.params.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
    omp_set_num_threads(freecg::effective_threads());
#endif
    CLI::App app{"equivariant message-passing force field with grouped CG transforms"};
    app.require_subcommand(1);
    Flags fl;

    auto* gen = app.add_subcommand("gen-data", "generate a labeled synthetic dataset");
    gen->add_option("--atoms", fl.atoms, "atoms per frame (2..16)");
    gen->add_option("--frames", fl.frames, "number of frames");
    gen->add_option("--seed", fl.seed, "generation seed");
    gen->add_option("--out", fl.out, "output .xyz path")->required();

    KeyValues overrides;
    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", fl.config_path, "key=value config file");
    train->add_option("--data", fl.data_path, "labeled .xyz dataset")->required();
    train->add_option("--out", fl.ckpt_path, "checkpoint output path")->required();
    train->add_option("--metrics", fl.metrics_path, "metrics CSV path (default <out>.metrics.csv)");
    for (const char* key :
         {"seed", "lr", "max_epochs", "max_steps", "batch_size", "channels", "layers", "groups",
          "shuffle_multiplier", "head", "mode", "enhancer", "cutoff", "warmup_steps"}) {
        train->add_option_function<std::string>(
            std::string("--") + key, [&overrides, key](const std::string& v) { overrides[key] = v; },
            std::string("override config key ") + key);
    }

    std::optional<int> eval_channels, eval_layers;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ev->add_option("--ckpt", fl.ckpt_path, "checkpoint path")->required();
    ev->add_option("--data", fl.data_path, "labeled .xyz dataset")->required();
    ev->add_option("--channels", eval_channels, "expected channel count (checked)");
    ev->add_option("--layers", eval_layers, "expected layer count (checked)");

    auto* check = app.add_subcommand("check", "run property verification suites");
    check->add_option("--suite", fl.suite,
                      "one of equivariance|permutation|gradient|cg-oracle|all");
    check->add_option("--seed", fl.seed, "suite seed");

    auto* bp = app.add_subcommand("bench-paths", "per-coupling operation counts");
    bp->add_option("--csv", fl.csv_path, "output path (default stdout)");

    auto* bg = app.add_subcommand("bench-group", "group-scaling wall-clock benchmark");
    bg->add_option("--T", fl.bench_t, "channel count");
    bg->add_option("--groups", fl.bench_groups, "comma-separated group counts");
    bg->add_option("--mode", fl.bench_mode, "sparse|full");
    bg->add_option("--seed", fl.seed, "input seed");
    bg->add_option("--csv", fl.csv_path, "output path (default stdout)");

    auto* info = app.add_subcommand("info", "print checkpoint architecture and sizes");
    info->add_option("--ckpt", fl.ckpt_path, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(fl);
        if (train->parsed()) return cmd_train(fl, overrides);
        if (ev->parsed()) return cmd_eval(fl, eval_channels, eval_layers);
        if (check->parsed()) return cmd_check(fl);
        if (bp->parsed()) return cmd_bench_paths(fl);
        if (bg->parsed()) return cmd_bench_group(fl);
        if (info->parsed()) return cmd_info(fl);
    } catch (const freecg::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const freecg::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
