#include "hmkg/metrics.hpp"

#include "hmkg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace hmkg::metrics {

double c_index(std::span<const double> risks, std::span<const SurvivalRecord> records) {
  if (risks.size() != records.size()) throw DomainError("c_index: risks and records differ in length");
  // Sort by time so comparable partners of a are the strictly later subjects.
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t a = order[i];
    if (!records[a].event) continue;
    std::size_t j = i + 1;
    while (j < order.size() && records[order[j]].time == records[a].time) ++j;
    for (; j < order.size(); ++j) {
      const std::size_t b = order[j];
      ++comparable;
      if (risks[a] > risks[b]) {
        concordant += 1.0;
      } else if (risks[a] == risks[b]) {
        concordant += 0.5;
      }
    }
  }
  if (comparable == 0) throw UndefinedMetricError("c_index: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

std::vector<KmPoint> km_curve(std::span<const SurvivalRecord> records) {
  if (records.empty()) throw DomainError("km_curve: no records");
  std::map<double, std::pair<int, int>> at;  // time -> (events, removed)
  for (const SurvivalRecord& r : records) {
    auto& slot = at[r.time];
    slot.first += r.event ? 1 : 0;
    slot.second += 1;
  }
  std::vector<KmPoint> curve{{0.0, 1.0}};
  double s = 1.0;
  int at_risk = static_cast<int>(records.size());
  for (const auto& [time, counts] : at) {
    if (counts.first > 0) {
      s *= 1.0 - static_cast<double>(counts.first) / at_risk;
      curve.push_back({time, s});
    }
    at_risk -= counts.second;
  }
  return curve;
}

double km_survival_at(std::span<const KmPoint> curve, double time) {
  double s = 1.0;
  for (const KmPoint& p : curve) {
    if (p.time <= time) s = p.survival;
  }
  return s;
}

double chi2_1_sf(double statistic) {
  if (statistic <= 0.0) return 1.0;
  return std::erfc(std::sqrt(statistic / 2.0));
}

LogRank logrank_test(std::span<const SurvivalRecord> group_a, std::span<const SurvivalRecord> group_b) {
  if (group_a.empty() || group_b.empty()) throw DomainError("logrank_test: both groups must be non-empty");
  struct Tally {
    int events_a = 0, events = 0, removed_a = 0, removed_b = 0;
  };
  std::map<double, Tally> at;
  int total_events = 0;
  for (const SurvivalRecord& r : group_a) {
    Tally& t = at[r.time];
    t.removed_a += 1;
    if (r.event) {
      t.events_a += 1;
      t.events += 1;
      ++total_events;
    }
  }
  for (const SurvivalRecord& r : group_b) {
    Tally& t = at[r.time];
    t.removed_b += 1;
    if (r.event) {
      t.events += 1;
      ++total_events;
    }
  }
  if (total_events == 0) throw DomainError("logrank_test: no events in either group");

  double n_a = static_cast<double>(group_a.size()), n_b = static_cast<double>(group_b.size());
  LogRank out;
  for (const auto& [time, t] : at) {
    const double n = n_a + n_b;
    if (t.events > 0 && n > 0) {
      const double d = t.events;
      out.observed_minus_expected += t.events_a - d * n_a / n;
      if (n > 1) out.variance += n_a * n_b * d * (n - d) / (n * n * (n - 1));
    }
    n_a -= t.removed_a;
    n_b -= t.removed_b;
  }
  if (out.variance <= 0.0) throw UndefinedMetricError("logrank_test: zero variance");
  out.statistic = out.observed_minus_expected * out.observed_minus_expected / out.variance;
  out.p_value = chi2_1_sf(out.statistic);
  return out;
}

Split median_split(std::span<const double> risks) {
  if (risks.size() < 2) throw DomainError("median_split: need at least two subjects");
  std::vector<double> sorted(risks.begin(), risks.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw DomainError("median_split: all risks are equal");
  const std::size_t mid = sorted.size() / 2;
  const double median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  Split split;
  split.threshold = median;
  const bool ties_high = sorted.back() <= median;  // everything sits at or below the median
  for (std::size_t i = 0; i < risks.size(); ++i) {
    const bool high = ties_high ? risks[i] >= median : risks[i] > median;
    (high ? split.high : split.low).push_back(i);
  }
  return split;
}

FoldSummary aggregate_folds(std::span<const double> values) {
  if (values.size() < 2) throw DomainError("aggregate_folds: need at least two folds");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace hmkg::metrics
