#pragma once

#include "hmkg/slide_geometry.hpp"

#include <span>
#include <utility>
#include <vector>

namespace hmkg::metrics {

// Harrell's C: over pairs with time_a < time_b and event_a, concordant when
// risk_a > risk_b; tied risks count 1/2; tied times are not comparable.
double c_index(std::span<const double> risks, std::span<const SurvivalRecord> records);

struct KmPoint {
  double time = 0.0;
  double survival = 1.0;
};

// Kaplan-Meier product-limit estimate. Starts with (0, 1); one point per
// distinct event time, holding the survival on [time, next time).
std::vector<KmPoint> km_curve(std::span<const SurvivalRecord> records);
double km_survival_at(std::span<const KmPoint> curve, double time);

struct LogRank {
  double statistic = 0.0;
  double p_value = 1.0;
  double observed_minus_expected = 0.0;
  double variance = 0.0;
};

// Two-group Mantel-Haenszel log-rank test, p from chi-square(1).
LogRank logrank_test(std::span<const SurvivalRecord> group_a, std::span<const SurvivalRecord> group_b);

// Upper tail of chi-square with one degree of freedom.
double chi2_1_sf(double statistic);

struct Split {
  std::vector<std::size_t> high;
  std::vector<std::size_t> low;
  double threshold = 0.0;
};

// Median-risk stratification; ties at the median go to the low-risk group
// unless that would empty the high-risk group.
Split median_split(std::span<const double> risks);

struct FoldSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
};

FoldSummary aggregate_folds(std::span<const double> values);

}  // namespace hmkg::metrics
