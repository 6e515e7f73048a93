#pragma once

#include "hmkg/experiment.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace hmkg::harness {

inline constexpr double kSignificanceLevel = 0.05;

// Strict: p < 0.05.
bool significant(double p_value);

// "yes" / "no" / "N/A" per the variant's ablation flags.
struct VariantFlags {
  std::string hierarchical, locality, multiscale;
};
VariantFlags variant_flags(model::VariantName name);

nlohmann::json results_json(const std::vector<CvResult>& results, const RunConfig& config);

// Rows "variant | hierarch. | locality | multi-scale | cohort | mean ± SD | (*)"
// with mean and SD to four decimals.
std::string format_table(const nlohmann::json& results);

struct TableRow {
  std::string variant, hierarchical, locality, multiscale, cohort;
  double mean = 0.0;
  double sd = 0.0;
  bool significant = false;
};
std::vector<TableRow> parse_table(const std::string& table);

// Step points of the pooled high/low-risk KM curves: variant,group,time,survival.
std::string format_km_csv(const std::vector<CvResult>& results);

// Writes results.json, table.txt and km.csv into `dir`.
void emit_report(const std::vector<CvResult>& results, const RunConfig& config, const std::filesystem::path& dir);

}  // namespace hmkg::harness
