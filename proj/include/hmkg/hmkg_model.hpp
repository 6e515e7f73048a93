#pragma once

#include "hmkg/bix_fusion.hpp"
#include "hmkg/kgn_aggregator.hpp"
#include "hmkg/param_binder.hpp"
#include "hmkg/slide_geometry.hpp"
#include "hmkg/survival_head.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hmkg::model {

enum class VariantName { kFull, kSingleScale, kNoLocality, kKgnBaseline, kMeanPool };

std::string to_string(VariantName name);
VariantName variant_from_string(const std::string& name);

// Ablation switchboard. `locality` is meaningless (N/A) without hierarchy and
// `multiscale` is N/A once locality is dropped; those are std::nullopt.
struct VariantConfig {
  VariantName name = VariantName::kFull;
  bool hierarchical = true;
  std::optional<bool> locality = true;
  std::optional<bool> multiscale = true;

  static VariantConfig named(VariantName name);
  void validate() const;
  bool uses_fusion() const { return multiscale.value_or(false); }
};

enum class NoLocalityMode { kRandomGroups, kGlobalGraph };

std::string to_string(NoLocalityMode mode);
NoLocalityMode no_locality_mode_from_string(const std::string& name);

struct ModelConfig {
  int d_low = 64;
  int d_high = 64;
  int d_attn = 64;         // local head/tail projection width
  int d_out = 64;          // local node embedding width
  int d = 64;              // cross-attention width
  int d_global_in = 64;    // fused ROI embedding width
  int d_global_attn = 64;
  int d_global_out = 64;
  int time_bins = 4;
  int top_k_local = 6;
  int top_k_global = 8;
  bix::BixMode bix_mode = bix::BixMode::kSet;
  bool bix_tied = false;
  int bix_heads = 1;
  NoLocalityMode no_locality_mode = NoLocalityMode::kRandomGroups;
  std::uint64_t grouping_seed = 0;  // seeds the no_locality pseudo-ROI partition
  VariantName variant = VariantName::kFull;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct HmkgParams {
  ModelConfig config;
  std::optional<kgn::KgnParams> local;   // absent for mean_pool
  std::optional<kgn::KgnParams> global;  // absent for kgn_baseline and mean_pool
  std::optional<bix::BixParams> bix;     // full variant only
  ad::Matrix fuse_proj;                  // 2d x d_global_in, full variant only
  ad::Matrix head_w;                     // head_in x T
  ad::Matrix head_b;                     // 1 x T

  static HmkgParams init(const ModelConfig& config, std::uint64_t seed);

  // Named tensors in a fixed order.
  template <class Fn>
  void for_each(Fn&& fn) { visit(*this, fn); }
  template <class Fn>
  void for_each(Fn&& fn) const { visit(*this, fn); }

  HmkgParams zeros_like() const;
  std::size_t parameter_count() const;
  bool operator==(const HmkgParams& other) const;

 private:
  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    if (self.local) self.local->for_each("local.", fn);
    if (self.bix) self.bix->for_each("bix.", fn);
    if (self.fuse_proj.size() > 0) fn(std::string("fuse_proj"), self.fuse_proj);
    if (self.global) self.global->for_each("global.", fn);
    fn(std::string("head.w"), self.head_w);
    fn(std::string("head.b"), self.head_b);
  }
};

struct LocalStage {
  std::vector<kgn::AggregateResult> groups;  // one per tile (or pseudo-ROI)
  ad::Var embeddings;                        // groups x d_out, the pooled group vectors
};

// Aggregates each tile's 16 cells independently; no edge crosses tiles.
LocalStage local_stage(const FeatureBag& bag, const HmkgParams& params, ParamBinder& binder);

struct FuseStage {
  std::vector<bix::FusedRoi> rois;  // empty on the single-scale path
  ad::Var embeddings;               // n x d_global_in (or the local embeddings unchanged)
};

FuseStage fuse_stage(const FeatureBag& bag, const LocalStage& local, const HmkgParams& params,
                     ParamBinder& binder);

kgn::AggregateResult global_stage(ad::Var roi_embeddings, const HmkgParams& params, ParamBinder& binder);

// Seeded partition of all high-magnification rows into groups of 16.
std::vector<std::vector<ad::Index>> pseudo_roi_groups(const FeatureBag& bag, std::uint64_t seed);

struct ForwardTrace {
  std::optional<LocalStage> local;
  std::optional<FuseStage> fuse;
  std::optional<kgn::AggregateResult> global;
  std::optional<kgn::AggregateResult> flat;  // kgn_baseline
  ad::Var slide;   // f_WSI, 1 x head_in
  ad::Var logits;  // 1 x T
};

ForwardTrace forward(const FeatureBag& bag, const HmkgParams& params, ParamBinder& binder);

// Inference without gradient tracking.
survival::HazardOutput predict(const FeatureBag& bag, const HmkgParams& params);

// Checkpoint: framed JSON header (format, version, model config, tensor
// table, optional time binning) then every tensor as little-endian row-major
// f64 in header order.
struct Checkpoint {
  HmkgParams params;
  std::optional<survival::TimeBinning> binning;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hmkg::model
