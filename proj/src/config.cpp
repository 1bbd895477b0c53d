#include "freecg/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace freecg {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': bad number '" + v + "'");
    return out;
}

int to_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    return out;
}

bool to_onoff(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected on/off, got '" + v + "'");
}

template <typename T>
bool take(KeyValues& kv, const std::string& key, T parse_into) {
    const auto it = kv.find(key);
    if (it == kv.end()) return false;
    parse_into(it->second);
    kv.erase(it);
    return true;
}

}  // namespace

KeyValues parse_config_text(const std::string& text) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

KeyValues parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_model_keys(ModelConfig& cfg, KeyValues& kv) {
    take(kv, "channels", [&](const std::string& v) { cfg.channels = to_int("channels", v); });
    take(kv, "layers", [&](const std::string& v) { cfg.layers = to_int("layers", v); });
    take(kv, "heads", [&](const std::string& v) { cfg.heads = to_int("heads", v); });
    take(kv, "num_rbf", [&](const std::string& v) { cfg.num_rbf = to_int("num_rbf", v); });
    take(kv, "cutoff", [&](const std::string& v) { cfg.cutoff = to_double("cutoff", v); });
    take(kv, "groups", [&](const std::string& v) { cfg.groups = to_int("groups", v); });
    take(kv, "shuffle_multiplier", [&](const std::string& v) {
        cfg.shuffle_multiplier = to_double("shuffle_multiplier", v);
    });
    take(kv, "mode", [&](const std::string& v) {
        if (v == "sparse")
            cfg.mode = PathMode::O3_sparse;
        else if (v == "full")
            cfg.mode = PathMode::SO3_full;
        else
            throw ConfigError("config key 'mode': expected sparse|full, got '" + v + "'");
    });
    take(kv, "head", [&](const std::string& v) {
        if (v == "equivariant")
            cfg.head = ModelConfig::Head::equivariant_gated;
        else if (v == "scalar")
            cfg.head = ModelConfig::Head::scalar;
        else
            throw ConfigError("config key 'head': expected equivariant|scalar, got '" + v + "'");
    });
    take(kv, "enhancer",
         [&](const std::string& v) { cfg.enhancer = to_onoff("enhancer", v); });
    take(kv, "enhancer_source", [&](const std::string& v) {
        if (v == "neighbor")
            cfg.enhancer_source = ModelConfig::EnhancerSource::neighbor;
        else if (v == "central")
            cfg.enhancer_source = ModelConfig::EnhancerSource::central;
        else
            throw ConfigError("config key 'enhancer_source': expected neighbor|central");
    });
    take(kv, "rejcalc_source", [&](const std::string& v) {
        if (v == "central")
            cfg.rejcalc_source = ModelConfig::RejSource::central;
        else if (v == "neighbor")
            cfg.rejcalc_source = ModelConfig::RejSource::neighbor;
        else
            throw ConfigError("config key 'rejcalc_source': expected central|neighbor");
    });
    take(kv, "precision", [&](const std::string& v) {
        if (v == "f64")
            cfg.precision = Precision::f64;
        else if (v == "f32")
            cfg.precision = Precision::f32;
        else
            throw ConfigError("config key 'precision': expected f64|f32, got '" + v + "'");
    });
}

void apply_train_keys(TrainConfig& cfg, KeyValues& kv) {
    take(kv, "lr", [&](const std::string& v) { cfg.lr = to_double("lr", v); });
    take(kv, "warmup_steps",
         [&](const std::string& v) { cfg.warmup_steps = to_int("warmup_steps", v); });
    take(kv, "decay_factor",
         [&](const std::string& v) { cfg.decay_factor = to_double("decay_factor", v); });
    take(kv, "decay_patience",
         [&](const std::string& v) { cfg.decay_patience = to_int("decay_patience", v); });
    take(kv, "force_weight",
         [&](const std::string& v) { cfg.force_weight = to_double("force_weight", v); });
    take(kv, "energy_weight",
         [&](const std::string& v) { cfg.energy_weight = to_double("energy_weight", v); });
    take(kv, "weight_decay",
         [&](const std::string& v) { cfg.weight_decay = to_double("weight_decay", v); });
    take(kv, "ema_rate", [&](const std::string& v) { cfg.ema_rate = to_double("ema_rate", v); });
    take(kv, "batch_size",
         [&](const std::string& v) { cfg.batch_size = to_int("batch_size", v); });
    take(kv, "max_epochs",
         [&](const std::string& v) { cfg.max_epochs = to_int("max_epochs", v); });
    take(kv, "max_steps", [&](const std::string& v) {
        cfg.max_steps = static_cast<std::int64_t>(to_u64("max_steps", v));
    });
    take(kv, "early_stop_patience", [&](const std::string& v) {
        cfg.early_stop_patience = to_int("early_stop_patience", v);
    });
    take(kv, "clip_norm",
         [&](const std::string& v) { cfg.clip_norm = to_double("clip_norm", v); });
    take(kv, "seed", [&](const std::string& v) { cfg.seed = to_u64("seed", v); });
    take(kv, "val_frac", [&](const std::string& v) { cfg.val_frac = to_double("val_frac", v); });
    take(kv, "test_frac",
         [&](const std::string& v) { cfg.test_frac = to_double("test_frac", v); });
}

void apply_all_keys_or_throw(ModelConfig& mc, TrainConfig& tc, KeyValues kv) {
    apply_model_keys(mc, kv);
    apply_train_keys(tc, kv);
    if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
}

}  // namespace freecg
