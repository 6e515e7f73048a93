#pragma once

#include "hmkg/slide_geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace hmkg {

enum class SignalMode {
  kNull,          // labels independent of features
  kLocalMotif,    // risk = how many motif cells share one tile's 4x4 block
  kGlobalContext, // risk = fraction of tiles whose low-mag context carries a flag
  kMultiScale,    // risk = tiles carrying both a low-mag flag and a high-mag motif cluster
};

std::string to_string(SignalMode mode);
SignalMode signal_mode_from_string(const std::string& name);

struct SynthesisConfig {
  std::string cohort_id = "synthetic";
  int size = 200;
  int n_tiles_min = 8;
  int n_tiles_max = 10;
  int dim_low = 64;
  int dim_high = 64;
  std::uint64_t seed = 0;
  SignalMode mode = SignalMode::kLocalMotif;
  double censor_prob = 0.25;
  double noise = 1.0;             // std of background features
  double motif_amplitude = 3.0;   // added along a fixed unit direction
  int motif_cells = 6;            // local-motif: motif patches per slide
  int context_tiles = 3;          // multi-scale: flagged tiles and motif tiles per slide
  int cluster_cells = 4;          // multi-scale: motif cells per motif tile
  double effect = 3.0;            // log-hazard at full signal strength
  double base_rate = 0.05;        // per month
  double low_view = 1.0;          // weight of each tile's cell mean in its low-magnification vector
  int low_patch_px = 224;

  // Throws DomainError on inconsistent settings.
  void validate() const;
  nlohmann::json to_json() const;
  static SynthesisConfig from_json(const nlohmann::json& j);
};

struct SyntheticCohort {
  Cohort cohort;
  // Planted signal strength in [0, 1] per slide (0 for null mode).
  std::vector<double> strength;
};

// Builds the cohort in memory (paths filled in under `dir`) and, when `dir` is
// non-empty, writes cohort.json plus per-slide geometry/feature files. The
// output is a pure function of the config.
SyntheticCohort generate_synthetic_cohort(const SynthesisConfig& config,
                                          const std::filesystem::path& dir = {});

}  // namespace hmkg
