#pragma once

// Flat key=value run configuration shared by config files and CLI flags.

#include <map>
#include <string>
#include <vector>

#include "jscq/harness/dataset.hpp"
#include "jscq/harness/experiments.hpp"
#include "jscq/model.hpp"
#include "jscq/training.hpp"

namespace jscq {

using Config = std::map<std::string, std::string>;

struct ConfigKey {
  std::string name;
  std::string default_value;  // empty: unset
  std::string help;
};

/// Every recognised key: model geometry, training, dataset and evaluation.
const std::vector<ConfigKey>& config_keys();
bool is_config_key(const std::string& name);

Config default_config();
/// Parses a config file; unknown keys are an error.
Config load_config_file(const std::string& path);
Config parse_config_text(const std::string& text, const std::string& origin = "<config>");
// Later layers win.
Config merge_configs(Config base, const Config& overrides);

/// "0,2,4" or an inclusive range "start:stop:step".
std::vector<double> parse_double_list(const std::string& text);

ModelConfig model_config(const Config& c);
TrainConfig train_config(const Config& c);
DatasetSpec dataset_spec(const Config& c);
EvalOptions eval_options(const Config& c);
std::uint64_t config_seed(const Config& c);

}  // namespace jscq
