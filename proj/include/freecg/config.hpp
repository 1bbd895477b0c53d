#pragma once

// Flat key=value configuration files. Lines starting with '#' and blank
// lines are ignored. Precedence is handled by the CLI: flags override file
// values, file values override the built-in defaults. Unknown keys are
// errors.

#include <map>
#include <string>

#include "freecg/model.hpp"
#include "freecg/train.hpp"

namespace freecg {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config_text(const std::string& text);
KeyValues parse_config_file(const std::string& path);

// Applies known keys onto the configs, erasing them from `kv`; a nonempty
// remainder means unknown keys (the caller reports them as ConfigError).
void apply_model_keys(ModelConfig& cfg, KeyValues& kv);
void apply_train_keys(TrainConfig& cfg, KeyValues& kv);

// applies both key sets and throws ConfigError on anything left over
void apply_all_keys_or_throw(ModelConfig& mc, TrainConfig& tc, KeyValues kv);

}  // namespace freecg
