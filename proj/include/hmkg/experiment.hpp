#pragma once

#include "hmkg/metrics.hpp"
#include "hmkg/run_config.hpp"
#include "hmkg/survival_head.hpp"
#include "hmkg/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hmkg::harness {

// Fold of each slide. Slides are ranked by a seeded hash of their id and dealt
// round-robin, so sizes differ by at most one and manifest order is irrelevant.
std::vector<int> assign_folds(std::span<const std::string> slide_ids, int folds, std::uint64_t seed);

struct FoldResult {
  int fold = 0;
  std::vector<std::string> test_ids;
  std::vector<double> test_risks;
  std::optional<double> c_index;  // empty when the fold has no comparable pair
  std::string warning;
  survival::TimeBinning binning;
  TrainLog log;
};

struct CvResult {
  model::VariantName variant = model::VariantName::kFull;
  std::string cohort_id;
  std::vector<FoldResult> folds;
  metrics::FoldSummary summary;
  // Log-rank on the union of per-fold median-risk splits of held-out slides.
  metrics::LogRank logrank;
  std::vector<metrics::KmPoint> km_high;
  std::vector<metrics::KmPoint> km_low;
  std::vector<std::string> warnings;

  std::vector<double> fold_c_indices() const;
};

// Per fold: bins and model fitted on the training split only, evaluated on
// the held-out split.
CvResult cross_validate(const RunConfig& config, const Cohort& cohort);

inline const std::vector<model::VariantName> kAblationVariants = {
    model::VariantName::kKgnBaseline, model::VariantName::kSingleScale, model::VariantName::kNoLocality,
    model::VariantName::kFull};

// One cross-validation per variant, all on the same folds and seeds.
std::vector<CvResult> run_ablation(const RunConfig& config, const Cohort& cohort,
                                   const std::vector<model::VariantName>& variants = kAblationVariants);

}  // namespace hmkg::harness
