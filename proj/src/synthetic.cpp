#include "hmkg/synthetic.hpp"

#include "hmkg/errors.hpp"
#include "hmkg/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace hmkg {

std::string to_string(SignalMode mode) {
  switch (mode) {
    case SignalMode::kNull: return "null";
    case SignalMode::kLocalMotif: return "local-motif";
    case SignalMode::kGlobalContext: return "global-context";
    case SignalMode::kMultiScale: return "multi-scale";
  }
  return "null";
}

SignalMode signal_mode_from_string(const std::string& name) {
  if (name == "null") return SignalMode::kNull;
  if (name == "local-motif") return SignalMode::kLocalMotif;
  if (name == "global-context") return SignalMode::kGlobalContext;
  if (name == "multi-scale") return SignalMode::kMultiScale;
  throw DomainError("unknown signal mode '" + name + "'");
}

void SynthesisConfig::validate() const {
  if (size < 1) throw DomainError("synthesis: size must be >= 1");
  if (n_tiles_min < 1 || n_tiles_max < n_tiles_min) {
    throw DomainError("synthesis: need 1 <= n_tiles_min <= n_tiles_max");
  }
  if (dim_low < 1 || dim_high < 1) throw DomainError("synthesis: dims must be >= 1");
  if (censor_prob < 0.0 || censor_prob >= 1.0) throw DomainError("synthesis: censor_prob must be in [0, 1)");
  if (!(noise >= 0.0) || !(base_rate > 0.0)) throw DomainError("synthesis: noise >= 0 and base_rate > 0 required");
  if (!(low_view >= 0.0)) throw DomainError("synthesis: low_view must be >= 0");
  if (low_patch_px < 1) throw DomainError("synthesis: low_patch_px must be >= 1");
  if (mode == SignalMode::kLocalMotif) {
    if (motif_cells < 1 || motif_cells > kCellsPerTile) {
      throw DomainError("synthesis: motif_cells must be in 1..16");
    }
    // Fully scattered slides put one motif cell in each of motif_cells distinct tiles.
    if (n_tiles_min < motif_cells + 1) {
      throw DomainError("synthesis: local-motif mode needs n_tiles_min >= motif_cells + 1");
    }
  }
  if (mode == SignalMode::kMultiScale) {
    if (context_tiles < 1 || cluster_cells < 1 || cluster_cells > kCellsPerTile) {
      throw DomainError("synthesis: multi-scale mode needs context_tiles >= 1 and cluster_cells in 1..16");
    }
    if (n_tiles_min < 2 * context_tiles) {
      throw DomainError("synthesis: multi-scale mode needs n_tiles_min >= 2 * context_tiles");
    }
  }
}

nlohmann::json SynthesisConfig::to_json() const {
  return {{"cohort_id", cohort_id},
          {"size", size},
          {"n_tiles_min", n_tiles_min},
          {"n_tiles_max", n_tiles_max},
          {"dim_low", dim_low},
          {"dim_high", dim_high},
          {"seed", seed},
          {"mode", to_string(mode)},
          {"censor_prob", censor_prob},
          {"noise", noise},
          {"motif_amplitude", motif_amplitude},
          {"motif_cells", motif_cells},
          {"context_tiles", context_tiles},
          {"cluster_cells", cluster_cells},
          {"effect", effect},
          {"base_rate", base_rate},
          {"low_view", low_view},
          {"low_patch_px", low_patch_px}};
}

SynthesisConfig SynthesisConfig::from_json(const nlohmann::json& j) {
  SynthesisConfig c;
  try {
    c.cohort_id = j.value("cohort_id", c.cohort_id);
    c.size = j.value("size", c.size);
    c.n_tiles_min = j.value("n_tiles_min", c.n_tiles_min);
    c.n_tiles_max = j.value("n_tiles_max", c.n_tiles_max);
    c.dim_low = j.value("dim_low", c.dim_low);
    c.dim_high = j.value("dim_high", c.dim_high);
    c.seed = j.value("seed", c.seed);
    c.mode = signal_mode_from_string(j.value("mode", to_string(c.mode)));
    c.censor_prob = j.value("censor_prob", c.censor_prob);
    c.noise = j.value("noise", c.noise);
    c.motif_amplitude = j.value("motif_amplitude", c.motif_amplitude);
    c.motif_cells = j.value("motif_cells", c.motif_cells);
    c.context_tiles = j.value("context_tiles", c.context_tiles);
    c.cluster_cells = j.value("cluster_cells", c.cluster_cells);
    c.effect = j.value("effect", c.effect);
    c.base_rate = j.value("base_rate", c.base_rate);
    c.low_view = j.value("low_view", c.low_view);
    c.low_patch_px = j.value("low_patch_px", c.low_patch_px);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("synthesis config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

Eigen::RowVectorXd unit_direction(Rng& rng, int dim) {
  Eigen::RowVectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  return v / v.norm();
}

std::vector<int> permutation(Rng& rng, int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  rng.shuffle(p);
  return p;
}

void add_to_cell(FeatureBag& bag, int tile, int cell, const Eigen::RowVectorXd& delta) {
  bag.f_high.row(tile * kCellsPerTile + cell) += delta;
}

// Places `count` motif cells at distinct random cells of one tile.
void plant_cluster(Rng& rng, FeatureBag& bag, int tile, int count, const Eigen::RowVectorXd& delta) {
  const std::vector<int> cells = permutation(rng, kCellsPerTile);
  for (int i = 0; i < count; ++i) add_to_cell(bag, tile, cells[static_cast<std::size_t>(i)], delta);
}

}  // namespace

SyntheticCohort generate_synthetic_cohort(const SynthesisConfig& config,
                                          const std::filesystem::path& dir) {
  config.validate();
  Rng direction_rng(derive_seed(config.seed, "directions"));
  const Eigen::RowVectorXd motif = config.motif_amplitude * unit_direction(direction_rng, config.dim_high);
  const Eigen::RowVectorXd flag = config.motif_amplitude * unit_direction(direction_rng, config.dim_low);
  // Fixed map from the high-magnification feature space to the low one.
  Eigen::MatrixXd view(config.dim_high, config.dim_low);
  for (Eigen::Index i = 0; i < view.size(); ++i) view.data()[i] = direction_rng.normal();
  view /= std::sqrt(static_cast<double>(config.dim_high));

  Rng rng(derive_seed(config.seed, "slides"));
  SyntheticCohort out;
  Cohort& cohort = out.cohort;
  cohort.manifest.cohort_id = config.cohort_id;
  cohort.manifest.seed = config.seed;
  cohort.manifest.dim_low = config.dim_low;
  cohort.manifest.dim_high = config.dim_high;

  for (int s = 0; s < config.size; ++s) {
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "-%04d", s);
    const std::string id = config.cohort_id + suffix;

    const int n = rng.integer(config.n_tiles_min, config.n_tiles_max);
    const int columns = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    FeatureBag bag;
    bag.geometry = build_geometry(n, config.low_patch_px, OriginLayout::grid(columns), id);
    bag.dim_low = config.dim_low;
    bag.dim_high = config.dim_high;
    bag.f_low.resize(n, config.dim_low);
    bag.f_high.resize(n * kCellsPerTile, config.dim_high);
    for (Eigen::Index i = 0; i < bag.f_low.size(); ++i) bag.f_low.data()[i] = config.noise * rng.normal();
    for (Eigen::Index i = 0; i < bag.f_high.size(); ++i) bag.f_high.data()[i] = config.noise * rng.normal();

    double strength = 0.0;
    switch (config.mode) {
      case SignalMode::kNull:
        break;
      case SignalMode::kLocalMotif: {
        // The motif cell count is fixed; only how many of them share a tile varies.
        const int clustered = rng.integer(0, config.motif_cells);
        const std::vector<int> tiles = permutation(rng, n);
        plant_cluster(rng, bag, tiles[0], clustered, motif);
        for (int i = 0; i < config.motif_cells - clustered; ++i) {
          add_to_cell(bag, tiles[static_cast<std::size_t>(i + 1)], rng.integer(0, kCellsPerTile - 1), motif);
        }
        strength = static_cast<double>(clustered) / config.motif_cells;
        break;
      }
      case SignalMode::kGlobalContext: {
        const int flagged = rng.integer(0, n);
        const std::vector<int> tiles = permutation(rng, n);
        for (int i = 0; i < flagged; ++i) bag.f_low.row(tiles[static_cast<std::size_t>(i)]) += flag;
        strength = static_cast<double>(flagged) / n;
        break;
      }
      case SignalMode::kMultiScale: {
        // Flagged and motif tile counts are fixed; only their overlap varies.
        const int k = config.context_tiles;
        const int overlap = rng.integer(0, k);
        const std::vector<int> tiles = permutation(rng, n);
        for (int i = 0; i < k; ++i) bag.f_low.row(tiles[static_cast<std::size_t>(i)]) += flag;
        for (int i = 0; i < overlap; ++i) {
          plant_cluster(rng, bag, tiles[static_cast<std::size_t>(i)], config.cluster_cells, motif);
        }
        for (int i = 0; i < k - overlap; ++i) {
          plant_cluster(rng, bag, tiles[static_cast<std::size_t>(k + i)], config.cluster_cells, motif);
        }
        strength = static_cast<double>(overlap) / k;
        break;
      }
    }
    // A low-magnification tile is a coarse view of its own cells.
    if (config.low_view > 0.0) {
      for (int j = 0; j < n; ++j) {
        bag.f_low.row(j) += config.low_view * bag.tile_cells(j).colwise().mean() * view;
      }
    }
    // Store at f32 precision so on-disk and in-memory cohorts agree exactly.
    bag.f_low = bag.f_low.cast<float>().cast<double>();
    bag.f_high = bag.f_high.cast<float>().cast<double>();

    const double rate = config.base_rate * std::exp(config.effect * strength);
    double time = rng.exponential(rate);
    bool event = true;
    if (rng.bernoulli(config.censor_prob)) {
      event = false;
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      time *= u;
    }

    ManifestEntry entry{id, dir / (id + ".geom.json"), dir / (id + ".feat.bin")};
    SurvivalRecord record{id, time, event, std::nullopt};
    cohort.manifest.slides.push_back(entry);
    cohort.manifest.labels.push_back(record);
    cohort.records.push_back(record);
    cohort.bags.push_back(std::move(bag));
    out.strength.push_back(strength);
  }

  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    for (std::size_t s = 0; s < cohort.bags.size(); ++s) {
      save_geometry(cohort.bags[s].geometry, cohort.manifest.slides[s].geometry_file);
      save_feature_bag(cohort.bags[s], cohort.manifest.slides[s].feature_file);
    }
    save_manifest(cohort.manifest, dir);
  }
  return out;
}

}  // namespace hmkg
