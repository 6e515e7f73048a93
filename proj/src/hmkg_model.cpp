#include "hmkg/hmkg_model.hpp"

#include "hmkg/errors.hpp"
#include "hmkg/rng.hpp"

#include <cmath>
#include <numeric>

namespace hmkg::model {

std::string to_string(VariantName name) {
  switch (name) {
    case VariantName::kFull: return "full";
    case VariantName::kSingleScale: return "single_scale";
    case VariantName::kNoLocality: return "no_locality";
    case VariantName::kKgnBaseline: return "kgn_baseline";
    case VariantName::kMeanPool: return "mean_pool";
  }
  return "full";
}

VariantName variant_from_string(const std::string& name) {
  for (VariantName v : {VariantName::kFull, VariantName::kSingleScale, VariantName::kNoLocality,
                        VariantName::kKgnBaseline, VariantName::kMeanPool}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

VariantConfig VariantConfig::named(VariantName name) {
  switch (name) {
    case VariantName::kFull: return {name, true, true, true};
    case VariantName::kSingleScale: return {name, true, true, false};
    case VariantName::kNoLocality: return {name, true, false, std::nullopt};
    case VariantName::kKgnBaseline: return {name, false, std::nullopt, false};
    case VariantName::kMeanPool: return {name, false, std::nullopt, false};
  }
  throw ConfigError("unknown variant");
}

void VariantConfig::validate() const {
  const VariantConfig expected = named(name);
  if (hierarchical != expected.hierarchical || locality != expected.locality ||
      multiscale != expected.multiscale) {
    throw ConfigError("variant " + to_string(name) + ": flags do not match the variant definition");
  }
}

std::string to_string(NoLocalityMode mode) {
  return mode == NoLocalityMode::kRandomGroups ? "random_groups" : "global_graph";
}

NoLocalityMode no_locality_mode_from_string(const std::string& name) {
  if (name == "random_groups") return NoLocalityMode::kRandomGroups;
  if (name == "global_graph") return NoLocalityMode::kGlobalGraph;
  throw ConfigError("unknown no_locality_mode '" + name + "'");
}

void ModelConfig::validate() const {
  for (int dim : {d_low, d_high, d_attn, d_out, d, d_global_in, d_global_attn, d_global_out}) {
    if (dim < 1) throw ConfigError("model config: all dims must be >= 1");
  }
  if (time_bins < 2) throw ConfigError("model config: time_bins must be >= 2");
  if (top_k_local < 1 || top_k_global < 1) throw ConfigError("model config: top_k must be >= 1");
  if (bix_heads < 1 || d % bix_heads != 0) throw ConfigError("model config: bix_heads must divide d");
  if (bix_tied && d_low != d_out) throw ConfigError("model config: tied BiX projections need d_low == d_out");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d_low", d_low},
          {"d_high", d_high},
          {"d_attn", d_attn},
          {"d_out", d_out},
          {"d", d},
          {"d_global_in", d_global_in},
          {"d_global_attn", d_global_attn},
          {"d_global_out", d_global_out},
          {"time_bins", time_bins},
          {"top_k_local", top_k_local},
          {"top_k_global", top_k_global},
          {"bix_mode", bix::to_string(bix_mode)},
          {"bix_tied", bix_tied},
          {"bix_heads", bix_heads},
          {"no_locality_mode", to_string(no_locality_mode)},
          {"grouping_seed", grouping_seed},
          {"variant", to_string(variant)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d_low = j.value("d_low", c.d_low);
    c.d_high = j.value("d_high", c.d_high);
    c.d_attn = j.value("d_attn", c.d_attn);
    c.d_out = j.value("d_out", c.d_out);
    c.d = j.value("d", c.d);
    c.d_global_in = j.value("d_global_in", c.d_global_in);
    c.d_global_attn = j.value("d_global_attn", c.d_global_attn);
    c.d_global_out = j.value("d_global_out", c.d_global_out);
    c.time_bins = j.value("time_bins", c.time_bins);
    c.top_k_local = j.value("top_k_local", c.top_k_local);
    c.top_k_global = j.value("top_k_global", c.top_k_global);
    c.bix_mode = bix::bix_mode_from_string(j.value("bix_mode", bix::to_string(c.bix_mode)));
    c.bix_tied = j.value("bix_tied", c.bix_tied);
    c.bix_heads = j.value("bix_heads", c.bix_heads);
    c.no_locality_mode = no_locality_mode_from_string(j.value("no_locality_mode", to_string(c.no_locality_mode)));
    c.grouping_seed = j.value("grouping_seed", c.grouping_seed);
    c.variant = variant_from_string(j.value("variant", to_string(c.variant)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

namespace {

ad::Matrix uniform_init(int rows, int cols, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(rows));
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

int head_input_dim(const ModelConfig& c) {
  switch (c.variant) {
    case VariantName::kKgnBaseline: return c.d_out;
    case VariantName::kMeanPool: return c.d_high;
    default: return c.d_global_out;
  }
}

}  // namespace

HmkgParams HmkgParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const VariantConfig variant = VariantConfig::named(config.variant);
  Rng rng(derive_seed(seed, "init"));
  HmkgParams p;
  p.config = config;
  if (config.variant != VariantName::kMeanPool) {
    p.local = kgn::KgnParams::init(config.d_high, config.d_attn, config.d_out, config.top_k_local, rng);
  }
  if (variant.uses_fusion()) {
    p.bix = bix::BixParams::init(config.d_low, config.d_out, config.d, config.bix_tied, config.bix_heads, rng);
    p.fuse_proj = uniform_init(2 * config.d, config.d_global_in, rng);
  }
  if (variant.hierarchical) {
    const int global_in = variant.uses_fusion() ? config.d_global_in : config.d_out;
    p.global = kgn::KgnParams::init(global_in, config.d_global_attn, config.d_global_out,
                                    config.top_k_global, rng);
  }
  p.head_w = uniform_init(head_input_dim(config), config.time_bins, rng);
  p.head_b = ad::Matrix::Zero(1, config.time_bins);
  return p;
}

HmkgParams HmkgParams::zeros_like() const {
  HmkgParams z = *this;
  z.for_each([](const std::string&, ad::Matrix& m) { m.setZero(); });
  return z;
}

std::size_t HmkgParams::parameter_count() const {
  std::size_t count = 0;
  for_each([&count](const std::string&, const ad::Matrix& m) { count += static_cast<std::size_t>(m.size()); });
  return count;
}

bool HmkgParams::operator==(const HmkgParams& other) const {
  if (!(config == other.config)) return false;
  std::vector<const ad::Matrix*> mine, theirs;
  for_each([&mine](const std::string&, const ad::Matrix& m) { mine.push_back(&m); });
  other.for_each([&theirs](const std::string&, const ad::Matrix& m) { theirs.push_back(&m); });
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->rows() != theirs[i]->rows() || mine[i]->cols() != theirs[i]->cols() || *mine[i] != *theirs[i]) {
      return false;
    }
  }
  return true;
}

namespace {

LocalStage aggregate_groups(const std::vector<ad::Var>& groups, const kgn::KgnVars& vars) {
  LocalStage stage;
  std::vector<ad::Var> pooled;
  for (const ad::Var& g : groups) {
    stage.groups.push_back(kgn::aggregate(g, vars));
    pooled.push_back(stage.groups.back().pooled());
  }
  stage.embeddings = ad::concat_rows(pooled);
  return stage;
}

const kgn::KgnParams& require(const std::optional<kgn::KgnParams>& p, const char* what) {
  if (!p) throw ConfigError(std::string("parameters have no ") + what + " aggregator for this variant");
  return *p;
}

void check_bag(const FeatureBag& bag, const ModelConfig& config) {
  bag.validate();
  if (bag.dim_low != config.d_low || bag.dim_high != config.d_high) {
    throw ShapeError("slide " + bag.geometry.slide_id + ": feature dims do not match the model");
  }
}

LocalStage no_locality_stage(const FeatureBag& bag, const HmkgParams& params, ParamBinder& binder) {
  const kgn::KgnVars vars = kgn::bind(binder, require(params.local, "local"));
  ad::Tape& tape = binder.tape();
  if (params.config.no_locality_mode == NoLocalityMode::kRandomGroups) {
    std::vector<ad::Var> groups;
    const std::uint64_t seed = derive_seed(params.config.grouping_seed, bag.geometry.slide_id);
    for (const auto& rows : pseudo_roi_groups(bag, seed)) {
      ad::Matrix g(static_cast<ad::Index>(rows.size()), bag.dim_high);
      for (std::size_t r = 0; r < rows.size(); ++r) g.row(static_cast<ad::Index>(r)) = bag.f_high.row(rows[r]);
      groups.push_back(tape.constant(std::move(g)));
    }
    return aggregate_groups(groups, vars);
  }
  // One unconstrained graph over every cell, then per-tile readout.
  const ad::Var all = tape.constant(bag.f_high);
  const kgn::Projection projection = kgn::head_tail_project(all, vars);
  const kgn::EdgeSet edges =
      kgn::build_dynamic_edges(projection.heads.value(), projection.tails.value(), vars.top_k);
  const kgn::AttentionResult attention = kgn::knowledge_attention_aggregate(all, projection, edges, vars);
  LocalStage stage;
  std::vector<ad::Var> pooled;
  for (int j = 0; j < bag.n_tiles(); ++j) {
    std::vector<ad::Index> rows(kCellsPerTile);
    std::iota(rows.begin(), rows.end(), static_cast<ad::Index>(j) * kCellsPerTile);
    const ad::Var tile_nodes = ad::gather_rows(attention.updated, rows);
    kgn::AggregateResult r{kgn::EdgeSet{}, {tile_nodes, attention.attention}, kgn::readout(tile_nodes, vars)};
    pooled.push_back(r.pooled());
    stage.groups.push_back(std::move(r));
  }
  stage.embeddings = ad::concat_rows(pooled);
  return stage;
}

ad::Var apply_head(ad::Var slide, const HmkgParams& params, ParamBinder& binder) {
  return ad::add_row(ad::matmul(slide, binder(params.head_w)), binder(params.head_b));
}

}  // namespace

LocalStage local_stage(const FeatureBag& bag, const HmkgParams& params, ParamBinder& binder) {
  const kgn::KgnVars vars = kgn::bind(binder, require(params.local, "local"));
  std::vector<ad::Var> tiles;
  for (int j = 0; j < bag.n_tiles(); ++j) tiles.push_back(binder.tape().constant(bag.tile_cells(j)));
  return aggregate_groups(tiles, vars);
}

FuseStage fuse_stage(const FeatureBag& bag, const LocalStage& local, const HmkgParams& params,
                     ParamBinder& binder) {
  FuseStage stage;
  if (!VariantConfig::named(params.config.variant).uses_fusion()) {
    stage.embeddings = local.embeddings;
    return stage;
  }
  if (!params.bix) throw ConfigError("parameters have no BiX block for a multi-scale variant");
  if (static_cast<int>(local.groups.size()) != bag.n_tiles()) {
    throw ShapeError("fuse_stage: local stage does not match the bag's tiles");
  }
  const bix::BixVars vars = bix::bind(binder, *params.bix);
  const ad::Var proj = binder(params.fuse_proj);
  std::vector<ad::Var> rows;
  for (int j = 0; j < bag.n_tiles(); ++j) {
    const ad::Var low = binder.tape().constant(bag.f_low.row(j));
    const kgn::AggregateResult& tile = local.groups[static_cast<std::size_t>(j)];
    const ad::Var high = params.config.bix_mode == bix::BixMode::kSet ? tile.nodes() : tile.pooled();
    stage.rois.push_back(bix::fuse_roi(low, high, vars));
    rows.push_back(ad::matmul(stage.rois.back().fused, proj));
  }
  stage.embeddings = ad::concat_rows(rows);
  return stage;
}

kgn::AggregateResult global_stage(ad::Var roi_embeddings, const HmkgParams& params, ParamBinder& binder) {
  return kgn::aggregate(roi_embeddings, kgn::bind(binder, require(params.global, "global")));
}

std::vector<std::vector<ad::Index>> pseudo_roi_groups(const FeatureBag& bag, std::uint64_t seed) {
  std::vector<ad::Index> order(static_cast<std::size_t>(bag.f_high.rows()));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<ad::Index>> groups;
  for (std::size_t at = 0; at < order.size(); at += kCellsPerTile) {
    groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                        order.begin() + static_cast<std::ptrdiff_t>(at + kCellsPerTile));
  }
  return groups;
}

ForwardTrace forward(const FeatureBag& bag, const HmkgParams& params, ParamBinder& binder) {
  check_bag(bag, params.config);
  ForwardTrace trace;
  switch (params.config.variant) {
    case VariantName::kFull:
    case VariantName::kSingleScale:
      trace.local = local_stage(bag, params, binder);
      trace.fuse = fuse_stage(bag, *trace.local, params, binder);
      trace.global = global_stage(trace.fuse->embeddings, params, binder);
      trace.slide = trace.global->pooled();
      break;
    case VariantName::kNoLocality:
      trace.local = no_locality_stage(bag, params, binder);
      trace.global = global_stage(trace.local->embeddings, params, binder);
      trace.slide = trace.global->pooled();
      break;
    case VariantName::kKgnBaseline:
      trace.flat = kgn::aggregate(binder.tape().constant(bag.f_high),
                                  kgn::bind(binder, require(params.local, "local")));
      trace.slide = trace.flat->pooled();
      break;
    case VariantName::kMeanPool:
      trace.slide = ad::mean_rows(binder.tape().constant(bag.f_high));
      break;
  }
  trace.logits = apply_head(trace.slide, params, binder);
  return trace;
}

survival::HazardOutput predict(const FeatureBag& bag, const HmkgParams& params) {
  ad::Tape tape;
  ParamBinder binder(tape, false);
  const ForwardTrace trace = forward(bag, params, binder);
  return survival::HazardOutput::from_logits(trace.logits.value().row(0));
}

}  // namespace hmkg::model
