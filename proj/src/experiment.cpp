#include "hmkg/experiment.hpp"

#include "hmkg/errors.hpp"
#include "hmkg/rng.hpp"

#include <algorithm>
#include <numeric>

namespace hmkg::harness {

std::vector<int> assign_folds(std::span<const std::string> slide_ids, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("assign_folds: folds must be >= 2");
  if (slide_ids.size() < static_cast<std::size_t>(folds)) {
    throw ConfigError("assign_folds: cohort smaller than the number of folds");
  }
  std::vector<std::pair<std::uint64_t, std::size_t>> ranked;
  for (std::size_t i = 0; i < slide_ids.size(); ++i) {
    ranked.emplace_back(derive_seed(seed, slide_ids[i]), i);
  }
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : slide_ids[a.second] < slide_ids[b.second];
  });
  std::vector<int> fold(slide_ids.size());
  for (std::size_t r = 0; r < ranked.size(); ++r) fold[ranked[r].second] = static_cast<int>(r % folds);
  return fold;
}

std::vector<double> CvResult::fold_c_indices() const {
  std::vector<double> out;
  for (const FoldResult& f : folds) {
    if (f.c_index) out.push_back(*f.c_index);
  }
  return out;
}

CvResult cross_validate(const RunConfig& config, const Cohort& cohort) {
  config.validate();
  std::vector<std::string> ids;
  for (const SurvivalRecord& r : cohort.records) ids.push_back(r.slide_id);
  const std::vector<int> fold_of = assign_folds(ids, config.folds, config.seed);

  CvResult result;
  result.variant = config.model.variant;
  result.cohort_id = cohort.manifest.cohort_id;
  std::vector<SurvivalRecord> high_group, low_group;
  for (int k = 0; k < config.folds; ++k) {
    std::vector<const FeatureBag*> train_bags, test_bags;
    std::vector<SurvivalRecord> train_records, test_records;
    FoldResult fold;
    fold.fold = k;
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
      if (fold_of[i] == k) {
        test_bags.push_back(&cohort.bags[i]);
        test_records.push_back(cohort.records[i]);
        fold.test_ids.push_back(ids[i]);
      } else {
        train_bags.push_back(&cohort.bags[i]);
        train_records.push_back(cohort.records[i]);
      }
    }
    fold.binning = survival::discretize_time(train_records, config.model.time_bins);
    survival::assign_bins(train_records, fold.binning);

    TrainResult trained = train(config, train_bags, train_records);
    fold.log = std::move(trained.log);
    for (const FeatureBag* bag : test_bags) fold.test_risks.push_back(model::predict(*bag, trained.params).risk);
    try {
      fold.c_index = metrics::c_index(fold.test_risks, test_records);
    } catch (const UndefinedMetricError& e) {
      fold.warning = "fold " + std::to_string(k) + " excluded: " + e.what();
      result.warnings.push_back(fold.warning);
    }
    try {
      const metrics::Split split = metrics::median_split(fold.test_risks);
      for (std::size_t i : split.high) high_group.push_back(test_records[i]);
      for (std::size_t i : split.low) low_group.push_back(test_records[i]);
    } catch (const DomainError& e) {
      result.warnings.push_back("fold " + std::to_string(k) + " not stratified: " + e.what());
    }
    result.folds.push_back(std::move(fold));
  }

  const std::vector<double> c = result.fold_c_indices();
  if (c.size() < 2) throw UndefinedMetricError("cross_validate: fewer than two folds produced a C-index");
  result.summary = metrics::aggregate_folds(c);
  if (!high_group.empty() && !low_group.empty()) {
    try {
      result.logrank = metrics::logrank_test(high_group, low_group);
    } catch (const Error& e) {
      result.warnings.push_back(std::string("log-rank undefined: ") + e.what());
    }
    result.km_high = metrics::km_curve(high_group);
    result.km_low = metrics::km_curve(low_group);
  }
  return result;
}

std::vector<CvResult> run_ablation(const RunConfig& config, const Cohort& cohort,
                                   const std::vector<model::VariantName>& variants) {
  std::vector<CvResult> rows;
  for (model::VariantName v : variants) {
    RunConfig variant_config = config;
    variant_config.model.variant = v;
    rows.push_back(cross_validate(variant_config, cohort));
  }
  return rows;
}

}  // namespace hmkg::harness
