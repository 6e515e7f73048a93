#pragma once

#include "hmkg/hmkg_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace hmkg::harness {

enum class OptimizerKind { kMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kMomentum;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0;
  int epochs = 100;
  int batch_size = 16;

  bool operator==(const OptimizerConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  model::ModelConfig model;
  OptimizerConfig optimizer;
  int folds = 4;
  double censor_alpha = 0.0;  // weight shift away from censored terms in the loss
  std::string cohort;         // optional default cohort directory

  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys are rejected so typos do not silently fall back to defaults.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Stable 64-bit hash of the canonical JSON, as 16 hex digits.
  std::string hash() const;
  bool operator==(const RunConfig&) const = default;
};

// HMKG_SEED, when set, overrides config.seed.
void apply_environment(RunConfig& config);

}  // namespace hmkg::harness
