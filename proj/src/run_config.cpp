#include "hmkg/run_config.hpp"

#include "binary_io.hpp"
#include "hmkg/errors.hpp"
#include "hmkg/rng.hpp"

#include <cstdio>
#include <cstdlib>
#include <set>

namespace hmkg::harness {

namespace {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "momentum"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (folds < 2) throw ConfigError("run config: folds must be >= 2");
  if (optimizer.epochs < 1) throw ConfigError("run config: epochs must be >= 1");
  if (optimizer.batch_size < 1) throw ConfigError("run config: batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("run config: learning_rate must be > 0");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) throw ConfigError("run config: momentum must be in [0, 1)");
  if (optimizer.weight_decay < 0.0) throw ConfigError("run config: weight_decay must be >= 0");
  if (censor_alpha < 0.0 || censor_alpha > 1.0) throw ConfigError("run config: censor_alpha must be in [0, 1]");
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"model", model.to_json()},
          {"optimizer",
           {{"kind", to_string(optimizer.kind)},
            {"learning_rate", optimizer.learning_rate},
            {"momentum", optimizer.momentum},
            {"beta1", optimizer.beta1},
            {"beta2", optimizer.beta2},
            {"adam_epsilon", optimizer.adam_epsilon},
            {"weight_decay", optimizer.weight_decay},
            {"epochs", optimizer.epochs},
            {"batch_size", optimizer.batch_size}}},
          {"folds", folds},
          {"censor_alpha", censor_alpha},
          {"cohort", cohort}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    reject_unknown(j, {"seed", "model", "optimizer", "folds", "censor_alpha", "cohort"}, "run config");
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) {
      reject_unknown(j["model"],
                     {"d_low", "d_high", "d_attn", "d_out", "d", "d_global_in", "d_global_attn", "d_global_out",
                      "time_bins", "top_k_local", "top_k_global", "bix_mode", "bix_tied", "bix_heads",
                      "no_locality_mode", "grouping_seed", "variant"},
                     "model config");
      c.model = model::ModelConfig::from_json(j["model"]);
    }
    if (j.contains("optimizer")) {
      const nlohmann::json& o = j["optimizer"];
      reject_unknown(o, {"kind", "learning_rate", "momentum", "beta1", "beta2", "adam_epsilon", "weight_decay",
                         "epochs", "batch_size"},
                     "optimizer config");
      c.optimizer.kind = optimizer_from_string(o.value("kind", to_string(c.optimizer.kind)));
      c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.adam_epsilon = o.value("adam_epsilon", c.optimizer.adam_epsilon);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      c.optimizer.epochs = o.value("epochs", c.optimizer.epochs);
      c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
    }
    c.folds = j.value("folds", c.folds);
    c.censor_alpha = j.value("censor_alpha", c.censor_alpha);
    c.cohort = j.value("cohort", c.cohort);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& path) const {
  detail::write_file(path, to_json().dump(2) + "\n");
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

void apply_environment(RunConfig& config) {
  if (const char* seed = std::getenv("HMKG_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(seed, &used);
      if (used != std::string(seed).size()) throw std::invalid_argument("trailing characters");
      config.seed = v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("HMKG_SEED is not an unsigned integer: '") + seed + "'");
    }
  }
}

}  // namespace hmkg::harness
