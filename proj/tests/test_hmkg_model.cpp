#include "hmkg/errors.hpp"
#include "hmkg/hmkg_model.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <set>

using namespace hmkg;
using namespace hmkg::model;
using hmkg::testing::micro_config;
using hmkg::testing::random_bag;
using hmkg::testing::random_matrix;

namespace {

ad::Matrix local_embeddings(const FeatureBag& bag, const HmkgParams& p) {
  ad::Tape tape;
  ParamBinder binder(tape, false);
  return local_stage(bag, p, binder).embeddings.value();
}

ad::Matrix slide_vector(const FeatureBag& bag, const HmkgParams& p) {
  ad::Tape tape;
  ParamBinder binder(tape, false);
  return forward(bag, p, binder).slide.value();
}

FeatureBag permute_tiles(const FeatureBag& bag, const std::vector<int>& order) {
  FeatureBag out = bag;
  for (std::size_t j = 0; j < order.size(); ++j) {
    out.f_low.row(static_cast<ad::Index>(j)) = bag.f_low.row(order[j]);
    out.f_high.middleRows(static_cast<ad::Index>(j) * kCellsPerTile, kCellsPerTile) = bag.tile_cells(order[j]);
  }
  return out;
}

}  // namespace

TEST_CASE("variant flags follow the ablation matrix") {
  const VariantConfig full = VariantConfig::named(VariantName::kFull);
  CHECK((full.hierarchical && full.locality == true && full.multiscale == true));
  const VariantConfig single = VariantConfig::named(VariantName::kSingleScale);
  CHECK((single.hierarchical && single.locality == true && single.multiscale == false));
  const VariantConfig noloc = VariantConfig::named(VariantName::kNoLocality);
  CHECK((noloc.hierarchical && noloc.locality == false && !noloc.multiscale.has_value()));
  const VariantConfig base = VariantConfig::named(VariantName::kKgnBaseline);
  CHECK((!base.hierarchical && !base.locality.has_value() && base.multiscale == false));
  VariantConfig broken = full;
  broken.multiscale = false;
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  for (VariantName v : hmkg::testing::all_variants()) CHECK(variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(variant_from_string("hmkg"), ConfigError);
}

TEST_CASE("local stage is a per-tile aggregate") {
  Rng rng(1);
  const HmkgParams p = HmkgParams::init(micro_config(VariantName::kFull), 3);
  const FeatureBag bag = random_bag(rng, 3, 5, 6);
  const ad::Matrix emb = local_embeddings(bag, p);
  REQUIRE(emb.rows() == 3);
  for (int j = 0; j < 3; ++j) {
    ad::Tape tape;
    ParamBinder binder(tape, false);
    const ad::Matrix alone =
        kgn::aggregate(tape.constant(bag.tile_cells(j)), kgn::bind(binder, *p.local)).pooled().value();
    CHECK(emb.row(j) == alone.row(0));
  }
}

TEST_CASE("identical tiles embed identically") {
  Rng rng(2);
  const HmkgParams p = HmkgParams::init(micro_config(VariantName::kFull), 4);
  FeatureBag bag = random_bag(rng, 2, 5, 6);
  bag.f_high.middleRows(16, 16) = bag.f_high.middleRows(0, 16);
  const ad::Matrix emb = local_embeddings(bag, p);
  CHECK(emb.row(0) == emb.row(1));
}

TEST_CASE("locality isolation is exact") {
  Rng rng(3);
  for (VariantName v : {VariantName::kFull, VariantName::kSingleScale}) {
    const HmkgParams p = HmkgParams::init(micro_config(v), 5);
    const FeatureBag bag = random_bag(rng, 4, 5, 6);
    ad::Tape tape;
    ParamBinder binder(tape, false);
    const LocalStage base = local_stage(bag, p, binder);
    const FuseStage base_fused = fuse_stage(bag, base, p, binder);
    for (int changed = 0; changed < 4; ++changed) {
      FeatureBag other = bag;
      other.f_high(changed * kCellsPerTile + 5, 2) += 3.0;
      other.f_low(changed, 1) -= 2.0;
      const LocalStage local = local_stage(other, p, binder);
      const FuseStage fused = fuse_stage(other, local, p, binder);
      for (int j = 0; j < 4; ++j) {
        if (j == changed) continue;
        CHECK(local.embeddings.value().row(j) == base.embeddings.value().row(j));
        CHECK(fused.embeddings.value().row(j) == base_fused.embeddings.value().row(j));
      }
      CHECK(local.embeddings.value().row(changed) != base.embeddings.value().row(changed));
    }
  }
}

TEST_CASE("locality gradient is zero across tiles") {
  Rng rng(4);
  const HmkgParams p = HmkgParams::init(micro_config(VariantName::kFull), 6);
  const FeatureBag bag = random_bag(rng, 3, 5, 6);
  ad::Tape tape;
  ParamBinder binder(tape, false);
  const kgn::KgnVars vars = kgn::bind(binder, *p.local);
  // Tile 0's embedding as a function of every cell of the slide.
  const ad::Var all = tape.variable(bag.f_high);
  std::vector<ad::Index> rows(16);
  std::iota(rows.begin(), rows.end(), 0);
  const ad::Var pooled = kgn::aggregate(ad::gather_rows(all, rows), vars).pooled();
  tape.backward(ad::sum_all(pooled));
  const ad::Matrix g = all.grad();
  CHECK(g.topRows(16).cwiseAbs().maxCoeff() > 0.0);
  CHECK(g.bottomRows(32).isZero(0.0));
}

TEST_CASE("fuse stage") {
  Rng rng(5);
  SUBCASE("single-scale passes local embeddings through") {
    const HmkgParams p = HmkgParams::init(micro_config(VariantName::kSingleScale), 7);
    const FeatureBag bag = random_bag(rng, 3, 5, 6);
    ad::Tape tape;
    ParamBinder binder(tape, false);
    const LocalStage local = local_stage(bag, p, binder);
    CHECK(fuse_stage(bag, local, p, binder).embeddings.value() == local.embeddings.value());
  }
  SUBCASE("zero projection gives zero ROI embeddings") {
    HmkgParams p = HmkgParams::init(micro_config(VariantName::kFull), 8);
    p.fuse_proj.setZero();
    const FeatureBag bag = random_bag(rng, 2, 5, 6);
    ad::Tape tape;
    ParamBinder binder(tape, false);
    CHECK(fuse_stage(bag, local_stage(bag, p, binder), p, binder).embeddings.value().isZero());
  }
  SUBCASE("composition oracle: fuse_roi then projection") {
    for (bix::BixMode mode : {bix::BixMode::kSet, bix::BixMode::kVector}) {
      ModelConfig c = micro_config(VariantName::kFull);
      c.bix_mode = mode;
      const HmkgParams p = HmkgParams::init(c, 9);
      const FeatureBag bag = random_bag(rng, 3, 5, 6);
      ad::Tape tape;
      ParamBinder binder(tape, false);
      const LocalStage local = local_stage(bag, p, binder);
      const ad::Matrix got = fuse_stage(bag, local, p, binder).embeddings.value();
      const bix::BixVars vars = bix::bind(binder, *p.bix);
      for (int j = 0; j < 3; ++j) {
        const kgn::AggregateResult& tile = local.groups[static_cast<std::size_t>(j)];
        const ad::Var high = mode == bix::BixMode::kSet ? tile.nodes() : tile.pooled();
        const ad::Matrix roi = bix::fuse_roi(tape.constant(bag.f_low.row(j)), high, vars).fused.value();
        CHECK(((roi * p.fuse_proj) - got.row(j)).cwiseAbs().maxCoeff() < 1e-6);
      }
    }
  }
}

TEST_CASE("global stage") {
  Rng rng(6);
  const HmkgParams p = HmkgParams::init(micro_config(VariantName::kFull), 10);
  SUBCASE("one ROI equals its singleton aggregate") {
    const ad::Matrix roi = random_matrix(rng, 1, 3);
    ad::Tape tape;
    ParamBinder binder(tape, false);
    const ad::Matrix a = global_stage(tape.constant(roi), p, binder).pooled().value();
    const ad::Matrix b = kgn::aggregate(tape.constant(roi), kgn::bind(binder, *p.global)).pooled().value();
    CHECK(a == b);
  }
  SUBCASE("tile order does not matter for any variant") {
    for (VariantName v : {VariantName::kFull, VariantName::kSingleScale, VariantName::kKgnBaseline}) {
      const HmkgParams q = HmkgParams::init(micro_config(v), 11);
      const FeatureBag bag = random_bag(rng, 5, 5, 6);
      const FeatureBag shuffled = permute_tiles(bag, {3, 0, 4, 2, 1});
      CHECK((slide_vector(bag, q) - slide_vector(shuffled, q)).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("variant dispatch") {
  Rng rng(7);
  const FeatureBag one = random_bag(rng, 1, 5, 6);
  SUBCASE("kgn_baseline on one tile is the head on the local aggregate") {
    const HmkgParams p = HmkgParams::init(micro_config(VariantName::kKgnBaseline), 12);
    const ad::Matrix local = local_embeddings(one, p);
    const ad::Matrix expect = local * p.head_w + p.head_b;
    CHECK((predict(one, p).logits - expect.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("single_scale on one tile is the head on the global singleton aggregate") {
    const HmkgParams p = HmkgParams::init(micro_config(VariantName::kSingleScale), 12);
    ad::Tape tape;
    ParamBinder binder(tape, false);
    const ad::Var local = local_stage(one, p, binder).embeddings;
    const ad::Matrix g = kgn::aggregate(local, kgn::bind(binder, *p.global)).pooled().value();
    CHECK((predict(one, p).logits - (g * p.head_w + p.head_b).row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("mean_pool averages every cell") {
    const HmkgParams p = HmkgParams::init(micro_config(VariantName::kMeanPool), 13);
    const FeatureBag bag = random_bag(rng, 3, 5, 6);
    const ad::Matrix expect = bag.f_high.colwise().mean() * p.head_w + p.head_b;
    CHECK((predict(bag, p).logits - expect.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("no_locality pseudo-groups are a seeded partition") {
    const FeatureBag bag = random_bag(rng, 4, 5, 6, "noloc");
    const auto groups = pseudo_roi_groups(bag, 77);
    CHECK(groups.size() == 4);
    std::set<ad::Index> seen;
    for (const auto& g : groups) {
      CHECK(g.size() == 16);
      seen.insert(g.begin(), g.end());
    }
    CHECK(seen.size() == 64);
    CHECK(pseudo_roi_groups(bag, 77) == groups);
    CHECK(pseudo_roi_groups(bag, 78) != groups);
  }
  SUBCASE("no_locality is deterministic in both modes") {
    for (NoLocalityMode mode : {NoLocalityMode::kRandomGroups, NoLocalityMode::kGlobalGraph}) {
      ModelConfig c = micro_config(VariantName::kNoLocality);
      c.no_locality_mode = mode;
      const HmkgParams p = HmkgParams::init(c, 14);
      const FeatureBag bag = random_bag(rng, 3, 5, 6, "noloc");
      CHECK(predict(bag, p).logits == predict(bag, p).logits);
    }
  }
  SUBCASE("every variant yields T finite hazards") {
    const FeatureBag bag = random_bag(rng, 3, 5, 6);
    for (VariantName v : hmkg::testing::all_variants()) {
      const survival::HazardOutput out = predict(bag, HmkgParams::init(micro_config(v), 15));
      CHECK(out.hazards.size() == 4);
      CHECK(out.hazards.allFinite());
    }
  }
  SUBCASE("mismatched feature dims are rejected") {
    const HmkgParams p = HmkgParams::init(micro_config(VariantName::kFull), 16);
    const FeatureBag wrong = random_bag(rng, 2, 4, 6);
    CHECK_THROWS_AS(predict(wrong, p), ShapeError);
  }
  SUBCASE("parameters of another variant are rejected") {
    HmkgParams p = HmkgParams::init(micro_config(VariantName::kKgnBaseline), 17);
    p.config.variant = VariantName::kSingleScale;
    CHECK_THROWS_AS(predict(one, p), ConfigError);
  }
}

TEST_CASE("training-loss gradients match finite differences for every variant") {
  const hmkg::SyntheticCohort cohort = hmkg::testing::small_cohort(SignalMode::kNull, 2, 21, 5);
  std::vector<SurvivalRecord> records = cohort.cohort.records;
  records[0].bin = 1;
  records[0].event = true;
  records[1].bin = 2;
  records[1].event = false;
  std::vector<const FeatureBag*> bags = {&cohort.cohort.bags[0], &cohort.cohort.bags[1]};
  for (VariantName v : hmkg::testing::all_variants()) {
    for (bool tied : {false, true}) {
      ModelConfig c = micro_config(v, 5, 5);
      c.bix_tied = tied;
      if (tied) c.d_out = 5;
      if (tied && v != VariantName::kFull) continue;
      const auto report = hmkg::testing::check_model_gradient(HmkgParams::init(c, 22), bags, records, 0.2);
      INFO(to_string(v), " tied=", tied, " worst tensor ", report.worst_tensor);
      CHECK(report.worst < 1e-4);
      CHECK(report.tensors > 0);
    }
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Rng rng(8);
  for (VariantName v : hmkg::testing::all_variants()) {
    Checkpoint ck{HmkgParams::init(micro_config(v), 23), std::nullopt};
    if (v == VariantName::kFull) ck.binning = survival::TimeBinning{4, {1.5, 2.25, 7.0}};
    ck.params.head_b(0, 1) = 1.0 / 3.0;
    const std::string bytes = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back.params == ck.params);
    CHECK(back.binning.has_value() == ck.binning.has_value());
    if (ck.binning) CHECK(back.binning->cut_points == ck.binning->cut_points);
    CHECK(encode_checkpoint(back) == bytes);
  }
  hmkg::testing::TempDir dir("ckpt");
  const Checkpoint ck{HmkgParams::init(micro_config(VariantName::kFull), 24), std::nullopt};
  save_checkpoint(ck, dir.path() / "m.ckpt");
  CHECK(load_checkpoint(dir.path() / "m.ckpt").params == ck.params);
}

TEST_CASE("damaged checkpoints are rejected") {
  const std::string bytes =
      encode_checkpoint({HmkgParams::init(micro_config(VariantName::kSingleScale), 25), std::nullopt});
  CHECK_THROWS(decode_checkpoint(bytes.substr(0, bytes.size() - 8)));
  CHECK_THROWS(decode_checkpoint(bytes + "\x01"));
  CHECK_THROWS(decode_checkpoint("not a checkpoint\n"));
  std::string wrong_format = bytes;
  const std::size_t at = wrong_format.find("hmkg-checkpoint");
  REQUIRE(at != std::string::npos);
  wrong_format[at] = 'x';
  CHECK_THROWS(decode_checkpoint(wrong_format));
}

TEST_CASE("model config validation and JSON round-trip") {
  ModelConfig c = micro_config(VariantName::kNoLocality);
  c.no_locality_mode = NoLocalityMode::kGlobalGraph;
  c.grouping_seed = 123456789012345ULL;
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  ModelConfig bad = c;
  bad.d_out = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.d = 4;
  bad.bix_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
