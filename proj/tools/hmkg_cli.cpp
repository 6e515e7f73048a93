// hmkg: synthesise cohorts, train, evaluate, cross-validate, run ablations and
// render reports. Errors go to stderr as one JSON object; exit code is 1.

#include "hmkg/errors.hpp"
#include "hmkg/experiment.hpp"
#include "hmkg/metrics.hpp"
#include "hmkg/report.hpp"
#include "hmkg/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace hmkg;

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

harness::RunConfig load_config(const std::string& path) {
  harness::RunConfig config = harness::RunConfig::load(path);
  harness::apply_environment(config);
  return config;
}

std::string resolve_cohort(const std::string& flag, const harness::RunConfig& config) {
  if (!flag.empty()) return flag;
  if (!config.cohort.empty()) return config.cohort;
  throw ConfigError("no cohort given: pass --cohort or set \"cohort\" in the config");
}

int cmd_synth(const std::string& spec_path, const std::string& out) {
  const SynthesisConfig spec = SynthesisConfig::from_json(read_json(spec_path));
  const SyntheticCohort cohort = generate_synthetic_cohort(spec, out);
  std::cout << nlohmann::json{{"cohort_id", spec.cohort_id}, {"slides", cohort.cohort.bags.size()}, {"out", out}}
            << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& cohort_flag, const std::string& out) {
  const harness::RunConfig config = load_config(config_path);
  const Cohort cohort = load_cohort(resolve_cohort(cohort_flag, config));
  std::vector<SurvivalRecord> records = cohort.records;
  const survival::TimeBinning binning = survival::discretize_time(records, config.model.time_bins);
  survival::assign_bins(records, binning);
  std::vector<const FeatureBag*> bags;
  for (const FeatureBag& b : cohort.bags) bags.push_back(&b);
  const harness::TrainResult trained = harness::train(config, bags, records);
  model::save_checkpoint({trained.params, binning}, out);
  std::cout << nlohmann::json{{"checkpoint", out},
                              {"initial_loss", trained.log.initial_loss},
                              {"final_loss", trained.log.final_loss},
                              {"epoch_loss", trained.log.epoch_loss}}
            << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& cohort_dir) {
  const model::Checkpoint checkpoint = model::load_checkpoint(ckpt);
  const Cohort cohort = load_cohort(cohort_dir);
  std::vector<double> risks;
  nlohmann::json slides = nlohmann::json::array();
  for (std::size_t i = 0; i < cohort.bags.size(); ++i) {
    const survival::HazardOutput out = model::predict(cohort.bags[i], checkpoint.params);
    risks.push_back(out.risk);
    slides.push_back({{"slide_id", cohort.records[i].slide_id},
                      {"risk", out.risk},
                      {"hazards", std::vector<double>(out.hazards.data(), out.hazards.data() + out.hazards.size())}});
  }
  nlohmann::json result = {{"cohort", cohort.manifest.cohort_id}, {"slides", slides}};
  result["c_index"] = metrics::c_index(risks, cohort.records);
  const metrics::Split split = metrics::median_split(risks);
  std::vector<SurvivalRecord> high, low;
  for (std::size_t i : split.high) high.push_back(cohort.records[i]);
  for (std::size_t i : split.low) low.push_back(cohort.records[i]);
  const metrics::LogRank lr = metrics::logrank_test(high, low);
  result["logrank_stat"] = lr.statistic;
  result["logrank_p"] = lr.p_value;
  std::cout << result.dump(2) << '\n';
  return 0;
}

int cmd_cv(const std::string& config_path, const std::string& cohort_flag, const std::string& out, bool ablate) {
  const harness::RunConfig config = load_config(config_path);
  const Cohort cohort = load_cohort(resolve_cohort(cohort_flag, config));
  const std::vector<harness::CvResult> results =
      ablate ? harness::run_ablation(config, cohort)
             : std::vector<harness::CvResult>{harness::cross_validate(config, cohort)};
  harness::emit_report(results, config, out);
  std::cout << harness::format_table(harness::results_json(results, config));
  return 0;
}

int cmd_report(const std::string& in, const std::string& out) {
  const std::string table = harness::format_table(read_json(in));
  if (!out.empty()) {
    std::ofstream f(out);
    f << table;
  }
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical multi-scale knowledge-aware graph survival models"};
  app.require_subcommand(1);

  std::string spec, out, config, cohort, ckpt, in;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  synth->add_option("--spec", spec, "Synthesis config (JSON)")->required();
  synth->add_option("--out", out, "Output cohort directory")->required();

  auto* train = app.add_subcommand("train", "Train on a whole cohort and write a checkpoint");
  train->add_option("--config", config, "Run config (JSON)")->required();
  train->add_option("--cohort", cohort, "Cohort directory");
  train->add_option("--out", out, "Checkpoint path")->required();

  auto* eval = app.add_subcommand("eval", "Score a cohort with a checkpoint");
  eval->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  eval->add_option("--cohort", cohort, "Cohort directory")->required();

  std::string report_dir = "hmkg_report";
  auto* cv = app.add_subcommand("cv", "Cross-validate the configured variant");
  cv->add_option("--config", config, "Run config (JSON)")->required();
  cv->add_option("--cohort", cohort, "Cohort directory");
  cv->add_option("--out", report_dir, "Report directory")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Cross-validate every ablation variant on shared folds");
  ablate->add_option("--config", config, "Run config (JSON)")->required();
  ablate->add_option("--cohort", cohort, "Cohort directory");
  ablate->add_option("--out", report_dir, "Report directory")->capture_default_str();

  auto* report = app.add_subcommand("report", "Render table.txt from results.json");
  report->add_option("--in", in, "results.json")->required();
  report->add_option("--out", out, "Optional table path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}} << '\n';
    return 2;
  }

  try {
    if (*synth) return cmd_synth(spec, out);
    if (*train) return cmd_train(config, cohort, out);
    if (*eval) return cmd_eval(ckpt, cohort);
    if (*cv) return cmd_cv(config, cohort, report_dir, false);
    if (*ablate) return cmd_cv(config, cohort, report_dir, true);
    if (*report) return cmd_report(in, out);
  } catch (const hmkg::Error& e) {
    std::cerr << nlohmann::json{{"error", e.kind()}, {"message", e.what()}} << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}} << '\n';
    return 1;
  }
  return 1;
}
