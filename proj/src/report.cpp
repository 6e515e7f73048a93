#include "hmkg/report.hpp"

#include "binary_io.hpp"
#include "hmkg/errors.hpp"

#include <cstdio>
#include <sstream>

namespace hmkg::harness {

bool significant(double p_value) { return p_value < kSignificanceLevel; }

VariantFlags variant_flags(model::VariantName name) {
  const model::VariantConfig v = model::VariantConfig::named(name);
  auto word = [](std::optional<bool> flag) -> std::string {
    if (!flag) return "N/A";
    return *flag ? "yes" : "no";
  };
  return {word(v.hierarchical), word(v.locality), word(v.multiscale)};
}

nlohmann::json results_json(const std::vector<CvResult>& results, const RunConfig& config) {
  nlohmann::json rows = nlohmann::json::array();
  for (const CvResult& r : results) {
    const VariantFlags flags = variant_flags(r.variant);
    nlohmann::json folds = nlohmann::json::array();
    for (const FoldResult& f : r.folds) {
      nlohmann::json fold = {{"fold", f.fold},
                             {"test_size", f.test_ids.size()},
                             {"cut_points", f.binning.cut_points},
                             {"initial_train_loss", f.log.initial_loss},
                             {"final_train_loss", f.log.final_loss}};
      fold["c_index"] = f.c_index ? nlohmann::json(*f.c_index) : nlohmann::json(nullptr);
      folds.push_back(fold);
    }
    rows.push_back({{"variant", model::to_string(r.variant)},
                    {"cohort", r.cohort_id},
                    {"hierarchical", flags.hierarchical},
                    {"locality", flags.locality},
                    {"multiscale", flags.multiscale},
                    {"c_index_mean", r.summary.mean},
                    {"c_index_sd", r.summary.sd},
                    {"logrank_stat", r.logrank.statistic},
                    {"logrank_p", r.logrank.p_value},
                    {"significant", significant(r.logrank.p_value)},
                    {"folds", folds},
                    {"warnings", r.warnings}});
  }
  return {{"config_hash", config.hash()}, {"seed", config.seed}, {"config", config.to_json()}, {"rows", rows}};
}

namespace {

constexpr const char* kHeader = "variant | hierarch. | locality | multi-scale | cohort | mean ± SD | (*)";

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t bar = line.find(" | ", start);
    cells.push_back(line.substr(start, bar == std::string::npos ? std::string::npos : bar - start));
    if (bar == std::string::npos) break;
    start = bar + 3;
  }
  return cells;
}

}  // namespace

std::string format_table(const nlohmann::json& results) {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const nlohmann::json& row : results.at("rows")) {
    char stats[64];
    std::snprintf(stats, sizeof(stats), "%.4f ± %.4f", row.at("c_index_mean").get<double>(),
                  row.at("c_index_sd").get<double>());
    out << row.at("variant").get<std::string>() << " | " << row.at("hierarchical").get<std::string>() << " | "
        << row.at("locality").get<std::string>() << " | " << row.at("multiscale").get<std::string>() << " | "
        << row.at("cohort").get<std::string>() << " | " << stats << " | "
        << (significant(row.at("logrank_p").get<double>()) ? "(*)" : "") << '\n';
  }
  return out.str();
}

std::vector<TableRow> parse_table(const std::string& table) {
  std::istringstream in(table);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw DomainError("parse_table: unexpected header");
  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_cells(line);
    if (cells.size() != 7) throw DomainError("parse_table: malformed row '" + line + "'");
    TableRow row{cells[0], cells[1], cells[2], cells[3], cells[4]};
    const std::size_t pm = cells[5].find(" ± ");
    if (pm == std::string::npos) throw DomainError("parse_table: missing mean ± SD in '" + line + "'");
    row.mean = std::stod(cells[5].substr(0, pm));
    row.sd = std::stod(cells[5].substr(pm + std::string(" ± ").size()));
    if (cells[6] != "(*)" && !cells[6].empty()) throw DomainError("parse_table: bad marker in '" + line + "'");
    row.significant = cells[6] == "(*)";
    rows.push_back(row);
  }
  return rows;
}

std::string format_km_csv(const std::vector<CvResult>& results) {
  std::ostringstream out;
  out << "variant,group,time,survival\n";
  char buf[96];
  for (const CvResult& r : results) {
    for (const auto& [group, curve] : {std::pair{"high", &r.km_high}, std::pair{"low", &r.km_low}}) {
      for (const metrics::KmPoint& p : *curve) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", p.time, p.survival);
        out << model::to_string(r.variant) << ',' << group << ',' << buf << '\n';
      }
    }
  }
  return out.str();
}

void emit_report(const std::vector<CvResult>& results, const RunConfig& config, const std::filesystem::path& dir) {
  if (results.empty()) throw DomainError("emit_report: no results");
  std::filesystem::create_directories(dir);
  const nlohmann::json j = results_json(results, config);
  detail::write_file(dir / "results.json", j.dump(2) + "\n");
  detail::write_file(dir / "table.txt", format_table(j));
  detail::write_file(dir / "km.csv", format_km_csv(results));
}

}  // namespace hmkg::harness
