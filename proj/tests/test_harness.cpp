#include "hmkg/errors.hpp"
#include "hmkg/experiment.hpp"
#include "hmkg/report.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

using namespace hmkg;
using namespace hmkg::harness;
using hmkg::testing::micro_config;
using hmkg::testing::small_cohort;
using hmkg::testing::TempDir;

namespace {

RunConfig quick_config(model::VariantName variant, int epochs = 5) {
  RunConfig c;
  c.seed = 11;
  c.model = micro_config(variant, 6, 6);
  c.optimizer.epochs = epochs;
  c.optimizer.batch_size = 4;
  c.folds = 4;
  return c;
}

struct Prepared {
  std::vector<const FeatureBag*> bags;
  std::vector<SurvivalRecord> records;
};

Prepared prepare(const Cohort& cohort, int time_bins = 4) {
  Prepared p;
  for (const FeatureBag& b : cohort.bags) p.bags.push_back(&b);
  p.records = cohort.records;
  survival::assign_bins(p.records, survival::discretize_time(p.records, time_bins));
  return p;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("run config") {
  RunConfig c = quick_config(model::VariantName::kNoLocality);
  c.optimizer.kind = OptimizerKind::kAdam;
  c.optimizer.weight_decay = 0.01;
  c.censor_alpha = 0.25;
  SUBCASE("json round-trip and stable hash") {
    const RunConfig back = RunConfig::from_json(c.to_json());
    CHECK(back == c);
    CHECK(back.hash() == c.hash());
    CHECK(c.hash().size() == 16);
    RunConfig other = c;
    other.seed += 1;
    CHECK(other.hash() != c.hash());
  }
  SUBCASE("file round-trip") {
    TempDir dir("cfg");
    c.save(dir.path() / "run.json");
    CHECK(RunConfig::load(dir.path() / "run.json") == c);
  }
  SUBCASE("rejections") {
    nlohmann::json j = c.to_json();
    j["learning_rat"] = 0.1;
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
    RunConfig bad = c;
    bad.optimizer.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.folds = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/run.json"), Error);
  }
  SUBCASE("seed override from the environment") {
    ::setenv("HMKG_SEED", "987", 1);
    RunConfig e = c;
    apply_environment(e);
    CHECK(e.seed == 987);
    ::setenv("HMKG_SEED", "12x", 1);
    CHECK_THROWS_AS(apply_environment(e), ConfigError);
    ::unsetenv("HMKG_SEED");
    RunConfig untouched = c;
    apply_environment(untouched);
    CHECK(untouched.seed == c.seed);
  }
}

TEST_CASE("training is deterministic and reduces the loss") {
  const SyntheticCohort syn = small_cohort(SignalMode::kNull, 8, 5);
  const Prepared p = prepare(syn.cohort);
  for (model::VariantName v : hmkg::testing::all_variants()) {
    INFO(model::to_string(v));
    const RunConfig c = quick_config(v, 8);
    const TrainResult a = train(c, p.bags, p.records);
    const TrainResult b = train(c, p.bags, p.records);
    CHECK(a.params == b.params);
    CHECK(a.log.epoch_loss == b.log.epoch_loss);
    CHECK(a.log.epoch_loss.size() == 8);
    CHECK(a.log.final_loss <= a.log.initial_loss);
    RunConfig reseeded = c;
    reseeded.seed += 1;
    CHECK(!(train(reseeded, p.bags, p.records).params == a.params));
  }
}

TEST_CASE("eight slides can be memorised") {
  const SyntheticCohort syn = small_cohort(SignalMode::kNull, 8, 6);
  const Prepared p = prepare(syn.cohort);
  RunConfig c = quick_config(model::VariantName::kFull, 200);
  for (int* width : {&c.model.d_attn, &c.model.d_out, &c.model.d, &c.model.d_global_in, &c.model.d_global_attn,
                     &c.model.d_global_out}) {
    *width = 8;
  }
  c.optimizer.kind = OptimizerKind::kAdam;
  c.optimizer.learning_rate = 1e-2;
  c.optimizer.batch_size = 8;
  const TrainResult r = train(c, p.bags, p.records);
  CHECK(r.log.final_loss < 0.1 * r.log.initial_loss);
}

TEST_CASE("diverging training is reported") {
  const SyntheticCohort syn = small_cohort(SignalMode::kNull, 8, 7);
  const Prepared p = prepare(syn.cohort);
  RunConfig c = quick_config(model::VariantName::kFull, 20);
  c.optimizer.learning_rate = 1e200;
  CHECK_THROWS_AS(train(c, p.bags, p.records), TrainingError);
  std::vector<SurvivalRecord> unbinned = syn.cohort.records;
  CHECK_THROWS(train(quick_config(model::VariantName::kFull), p.bags, unbinned));
}

TEST_CASE("fold assignment") {
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) ids.push_back("slide-" + std::to_string(i));
  const std::vector<int> folds = assign_folds(ids, 4, 3);
  std::array<int, 4> sizes{};
  for (int f : folds) ++sizes[static_cast<std::size_t>(f)];
  for (int s : sizes) CHECK(s == 2);

  std::vector<std::string> reversed(ids.rbegin(), ids.rend());
  const std::vector<int> folds_rev = assign_folds(reversed, 4, 3);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(folds_rev[ids.size() - 1 - i] == folds[i]);

  std::vector<std::string> many;
  for (int i = 0; i < 103; ++i) many.push_back("s" + std::to_string(i));
  std::array<int, 5> counts{};
  for (int f : assign_folds(many, 5, 9)) ++counts[static_cast<std::size_t>(f)];
  CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);

  CHECK_THROWS_AS(assign_folds(ids, 1, 0), ConfigError);
  CHECK_THROWS_AS(assign_folds(std::vector<std::string>(ids.begin(), ids.begin() + 3), 4, 0), ConfigError);
}

TEST_CASE("cross-validation keeps held-out labels out of training") {
  const SyntheticCohort syn = small_cohort(SignalMode::kNull, 16, 8);
  const RunConfig c = quick_config(model::VariantName::kFull, 4);
  const CvResult base = cross_validate(c, syn.cohort);
  REQUIRE(base.folds.size() == 4);

  std::vector<std::string> ids;
  for (const SurvivalRecord& r : syn.cohort.records) ids.push_back(r.slide_id);
  const std::vector<int> fold_of = assign_folds(ids, 4, c.seed);
  std::set<std::string> seen;
  for (const FoldResult& f : base.folds) {
    for (const std::string& id : f.test_ids) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == 16);

  Cohort mutated = syn.cohort;
  for (std::size_t i = 0; i < mutated.records.size(); ++i) {
    if (fold_of[i] != 0) continue;
    mutated.records[i].time = 1000.0 + static_cast<double>(i);
    mutated.records[i].event = !mutated.records[i].event;
  }
  const CvResult changed = cross_validate(c, mutated);
  CHECK(changed.folds[0].binning.cut_points == base.folds[0].binning.cut_points);
  CHECK(changed.folds[0].test_risks == base.folds[0].test_risks);
  CHECK(changed.folds[0].log.epoch_loss == base.folds[0].log.epoch_loss);
  CHECK(changed.folds[1].binning.cut_points != base.folds[1].binning.cut_points);
}

TEST_CASE("ablation rows share folds and cohort") {
  const SyntheticCohort syn = small_cohort(SignalMode::kNull, 12, 9);
  const std::vector<CvResult> rows = run_ablation(quick_config(model::VariantName::kFull, 2), syn.cohort);
  REQUIRE(rows.size() == kAblationVariants.size());
  for (std::size_t v = 0; v < rows.size(); ++v) {
    CHECK(rows[v].variant == kAblationVariants[v]);
    CHECK(rows[v].cohort_id == syn.cohort.manifest.cohort_id);
    for (std::size_t k = 0; k < rows[v].folds.size(); ++k) {
      CHECK(rows[v].folds[k].test_ids == rows[0].folds[k].test_ids);
      CHECK(rows[v].folds[k].binning.cut_points == rows[0].folds[k].binning.cut_points);
    }
  }
}

namespace {

CvResult fake_result(model::VariantName v, double mean, double sd, double p) {
  CvResult r;
  r.variant = v;
  r.cohort_id = "demo";
  r.summary = {mean, sd};
  r.logrank.statistic = 3.0;
  r.logrank.p_value = p;
  r.km_high = {{0.0, 1.0}, {2.0, 0.5}};
  r.km_low = {{0.0, 1.0}};
  return r;
}

}  // namespace

TEST_CASE("report table") {
  const RunConfig c = quick_config(model::VariantName::kFull);
  const std::vector<CvResult> results = {fake_result(model::VariantName::kFull, 0.71234, 0.05, 0.049),
                                         fake_result(model::VariantName::kKgnBaseline, 0.6, 0.0412, 0.05)};
  const nlohmann::json j = results_json(results, c);
  const std::string table = format_table(j);
  CHECK(table.find("0.7123 ± 0.0500 | (*)") != std::string::npos);
  CHECK(table.find("0.6000 ± 0.0412 | \n") != std::string::npos);
  CHECK(significant(0.049));
  CHECK(!significant(0.05));

  const std::vector<TableRow> rows = parse_table(table);
  REQUIRE(rows.size() == 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const nlohmann::json& row = j["rows"][i];
    CHECK(rows[i].variant == row["variant"].get<std::string>());
    CHECK(rows[i].hierarchical == row["hierarchical"].get<std::string>());
    CHECK(rows[i].locality == row["locality"].get<std::string>());
    CHECK(rows[i].multiscale == row["multiscale"].get<std::string>());
    CHECK(rows[i].cohort == "demo");
    CHECK(std::abs(rows[i].mean - row["c_index_mean"].get<double>()) <= 5e-5);
    CHECK(std::abs(rows[i].sd - row["c_index_sd"].get<double>()) <= 5e-5);
    CHECK(rows[i].significant == row["significant"].get<bool>());
  }
  CHECK(rows[1].hierarchical == "no");
  CHECK(rows[1].locality == "N/A");
  CHECK_THROWS_AS(parse_table("bad header\n"), DomainError);
}

TEST_CASE("emitted report is reproducible") {
  const SyntheticCohort syn = small_cohort(SignalMode::kNull, 12, 10);
  const RunConfig c = quick_config(model::VariantName::kFull, 2);
  TempDir a("rep-a"), b("rep-b");
  emit_report({cross_validate(c, syn.cohort)}, c, a.path());
  emit_report({cross_validate(c, syn.cohort)}, c, b.path());
  for (const char* name : {"results.json", "table.txt", "km.csv"}) {
    INFO(name);
    CHECK(!slurp(a.path() / name).empty());
    CHECK(slurp(a.path() / name) == slurp(b.path() / name));
  }
  const nlohmann::json j = nlohmann::json::parse(slurp(a.path() / "results.json"));
  CHECK(j["config_hash"] == c.hash());
  CHECK(RunConfig::from_json(j["config"]) == c);
  CHECK(slurp(a.path() / "km.csv").rfind("variant,group,time,survival\n", 0) == 0);
}
