#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "freecg/checkpoint.hpp"
#include "freecg/config.hpp"
#include "freecg/train.hpp"

using namespace freecg;

namespace {

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.channels = 16;
    cfg.heads = 4;
    cfg.groups = 4;
    cfg.layers = 1;
    return cfg;
}

Dataset tiny_dataset(int frames, std::uint64_t seed) {
    MorseOracle oracle;
    Dataset ds = generate_synthetic(frames, 4, seed, oracle);
    return ds;
}

std::vector<double> flat_params(const Model& m) {
    std::vector<double> out;
    for (const auto& a : m.params.arrays()) out.insert(out.end(), a.values.begin(), a.values.end());
    return out;
}

}  // namespace

TEST_CASE("loss: perfect prediction gives zero") {
    MoleculeFrame f;
    f.atomic_numbers = {1, 1};
    f.positions = {{0, 0, 0}, {1, 0, 0}};
    f.has_energy = true;
    f.energy = 2.5;
    f.forces = {{1, 2, 3}, {-1, -2, -3}};
    Prediction p{2.5, f.forces};
    CHECK(batch_loss({p}, {&f}, 0.95, 0.05) == 0.0);
}

TEST_CASE("loss: energy off by delta with exact forces gives 0.05 delta^2") {
    MoleculeFrame f;
    f.atomic_numbers = {1};
    f.positions = {{0, 0, 0}};
    f.has_energy = true;
    f.energy = 1.0;
    f.forces = {{0.5, -0.25, 0.125}};
    const double delta = 0.75;
    Prediction p{f.energy + delta, f.forces};
    CHECK(batch_loss({p}, {&f}, 0.95, 0.05) == doctest::Approx(0.05 * delta * delta).epsilon(1e-15));
}

TEST_CASE("loss: hand-computed two-frame batch fixture") {
    MoleculeFrame a;
    a.atomic_numbers = {1};
    a.positions = {{0, 0, 0}};
    a.has_energy = true;
    a.energy = 1.0;
    a.forces = {{1.0, 0.0, 0.0}};
    MoleculeFrame b;
    b.atomic_numbers = {1, 1};
    b.positions = {{0, 0, 0}, {1, 0, 0}};
    b.has_energy = true;
    b.energy = -2.0;
    b.forces = {{0, 0, 0}, {0, 1.0, 0}};
    Prediction pa{1.5, {{0.0, 0.0, 0.0}}};           // dE 0.5, force sse 1.0
    Prediction pb{-2.0, {{0, 0, 0}, {0, 0.0, 0}}};   // dE 0,   force sse 1.0
    // 9 force components total, two frames:
    //   0.95 * (1 + 1)/9 + 0.05 * (0.25 + 0)/2
    const double expect = 0.95 * 2.0 / 9.0 + 0.05 * 0.125;
    CHECK(batch_loss({pa, pb}, {&a, &b}, 0.95, 0.05) == doctest::Approx(expect).epsilon(1e-15));

    MoleculeFrame unlabeled = a;
    unlabeled.has_energy = false;
    CHECK_THROWS_AS(batch_loss({pa}, {&unlabeled}, 0.95, 0.05), ContractViolation);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
    Model m(tiny_model_config());
    m.init_params(5);
    const auto before = flat_params(m);
    Dataset ds = tiny_dataset(12, 6);
    TrainConfig tc;
    tc.lr = 0.0;
    tc.max_epochs = 1;
    tc.batch_size = 2;
    tc.warmup_steps = 0;
    train_model(m, ds, tc);
    CHECK(flat_params(m) == before);
}

TEST_CASE("EMA rate 1.0 keeps the shadow at the initial parameters forever") {
    Model m(tiny_model_config());
    m.init_params(7);
    const auto before = flat_params(m);
    Dataset ds = tiny_dataset(12, 8);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.ema_rate = 1.0;
    tc.max_epochs = 2;
    tc.batch_size = 3;
    train_model(m, ds, tc);
    // the best checkpoint is selected among EMA shadows == initial params
    CHECK(flat_params(m) == before);
}

TEST_CASE("one optimizer step with analytic gradients lowers the loss (10 seeds)") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Model m(tiny_model_config());
        m.init_params(seed);
        MorseOracle oracle;
        Dataset ds = generate_synthetic(1, 4, seed + 100, oracle);
        const MoleculeFrame& fr = ds.frames[0];

        auto loss_of = [&](const Model& model) {
            const auto out = model.evaluate(fr, true);
            return batch_loss({Prediction{out.energy, out.forces}}, {&fr}, 0.95, 0.05);
        };
        const double before = loss_of(m);

        // analytic batch gradient
        Tape tape;
        const auto out = m.forward(tape, fr, true, true);
        std::vector<double> fl;
        for (const auto& fv : fr.forces) fl.insert(fl.end(), fv.begin(), fv.end());
        Tensor df = tape.sub(out.forces, tape.constant({fr.n(), 3}, fl));
        Tensor de = tape.add_const(out.energy, -fr.energy);
        Tensor loss =
            tape.add(tape.scalar_mul(tape.sum(tape.sum(tape.mul(df, df), 1), 0),
                                     0.95 / (3.0 * fr.n())),
                     tape.scalar_mul(tape.mul(de, de), 0.05));
        auto gm = tape.backward(loss);

        // first AdamW step == signed-gradient step of size lr
        const double lr = 1e-5;
        std::size_t slot = 0;
        for (auto& arr : m.params.arrays()) {
            const auto& g = gm.at(out.param_leaves[slot]).values();
            for (std::size_t k = 0; k < arr.values.size(); ++k) {
                const double mhat = g[k];
                const double vhat = std::sqrt(g[k] * g[k]) + 1e-8;
                arr.values[k] -= lr * mhat / vhat;
            }
            ++slot;
        }
        const double after = loss_of(m);
        CHECK(after < before);
    }
}

TEST_CASE("training is reproducible for a fixed seed") {
    auto run = [] {
        Model m(tiny_model_config());
        m.init_params(11);
        Dataset ds = tiny_dataset(16, 12);
        TrainConfig tc;
        tc.lr = 5e-4;
        tc.max_epochs = 2;
        tc.batch_size = 4;
        tc.seed = 3;
        const TrainResult res = train_model(m, ds, tc);
        return std::pair{flat_params(m), res.metrics_rows};
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("metrics rows follow the fixed header") {
    Model m(tiny_model_config());
    m.init_params(13);
    Dataset ds = tiny_dataset(12, 14);
    TrainConfig tc;
    tc.max_epochs = 2;
    const TrainResult res = train_model(m, ds, tc);
    REQUIRE(!res.metrics_rows.empty());
    CHECK(res.metrics_rows[0] == std::string(kMetricsHeader));
    CHECK(res.metrics_rows.size() == 3);  // header + one row per epoch
    CHECK(res.best_epoch >= 0);
}

TEST_CASE("nan labels abort with the offending frame index") {
    Model m(tiny_model_config());
    m.init_params(15);
    Dataset ds = tiny_dataset(8, 16);
    ds.frames[3].energy = std::nan("");
    // force frame 3 into the training split
    for (auto& s : ds.split) s = 1;
    ds.split[3] = 0;
    ds.split[0] = 1;
    TrainConfig tc;
    tc.max_epochs = 1;
    tc.batch_size = 1;
    try {
        train_model(m, ds, tc);
        FAIL("expected nan abort");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("nan loss") != std::string::npos);
        CHECK(msg.find("3") != std::string::npos);
    }
}

TEST_CASE("checkpoint round trip preserves config, normalization and parameters") {
    Model m(tiny_model_config());
    m.init_params(17);
    m.energy_scale = 3.5;
    m.energy_shift = -1.25;
    const std::string path = "test_ckpt_roundtrip.fcg";
    save_checkpoint(path, m);
    const Model back = load_checkpoint(path);
    CHECK(back.config.channels == m.config.channels);
    CHECK(back.config.layers == m.config.layers);
    CHECK(back.energy_scale == m.energy_scale);
    CHECK(back.energy_shift == m.energy_shift);
    CHECK(flat_params(back) == flat_params(m));

    Rng rng(18);
    const MoleculeFrame f = random_frame(rng, 4);
    CHECK(back.evaluate(f, false).energy == m.evaluate(f, false).energy);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_checkpoint("does_not_exist.fcg"), IoError);
}

TEST_CASE("config file parsing, precedence and unknown keys") {
    const KeyValues kv = parse_config_text("# comment\nchannels = 32\nlr=0.002\n\nheads=8\n");
    ModelConfig mc;
    TrainConfig tc;
    KeyValues copy = kv;
    apply_model_keys(mc, copy);
    apply_train_keys(tc, copy);
    CHECK(copy.empty());
    CHECK(mc.channels == 32);
    CHECK(mc.heads == 8);
    CHECK(tc.lr == 0.002);

    ModelConfig mc2;
    TrainConfig tc2;
    CHECK_THROWS_AS(apply_all_keys_or_throw(mc2, tc2, parse_config_text("bogus_key=1\n")),
                    ConfigError);
    CHECK_THROWS_AS(parse_config_text("not a key value\n"), ConfigError);
    CHECK_THROWS_AS(apply_all_keys_or_throw(mc2, tc2, parse_config_text("mode=diagonal\n")),
                    ConfigError);
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    tc.force_weight = 0.9;
    tc.energy_weight = 0.2;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    TrainConfig tc2;
    tc2.ema_rate = 1.5;
    CHECK_THROWS_AS(tc2.validate(), ConfigError);
    TrainConfig ok;
    CHECK_NOTHROW(ok.validate());
}
