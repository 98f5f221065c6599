#include "sgap/config_json.hpp"

#include <fstream>

namespace sgap {

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg = j.get<ExperimentConfig>();
  cfg.validate_or_throw();
  return cfg;
}

}  // namespace sgap
