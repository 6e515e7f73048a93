#include "hmkg/errors.hpp"
#include "hmkg/patch_encoder.hpp"
#include "hmkg/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstring>

using namespace hmkg;
using namespace hmkg::encoder;

namespace {

PatchArray random_patch(Rng& rng, int h = 8, int w = 8, int c = 3) {
  PatchArray p{h, w, c, std::vector<float>(static_cast<std::size_t>(h * w * c))};
  for (float& v : p.pixels) v = static_cast<float>(rng.uniform());
  return p;
}

std::vector<IndexedPatch> slide_patches(int n_tiles, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<IndexedPatch> patches;
  for (int j = 1; j <= n_tiles; ++j) {
    patches.push_back({{1, j, std::nullopt}, random_patch(rng)});
    for (int k = 1; k <= kCellsPerTile; ++k) patches.push_back({{1, j, k}, random_patch(rng)});
  }
  return patches;
}

// FNV-1a over the raw bytes of both feature blocks.
std::uint64_t bag_hash(const FeatureBag& bag) {
  std::string bytes;
  for (const Eigen::MatrixXd* m : {&bag.f_low, &bag.f_high}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        const double v = (*m)(r, c);
        char raw[sizeof(double)];
        std::memcpy(raw, &v, sizeof(double));
        bytes.append(raw, sizeof(double));
      }
    }
  }
  return fnv1a(bytes);
}

const EncoderSpec kLow{"stub-projection", 6, 1, true};
const EncoderSpec kHigh{"stub-projection", 10, 2, true};

}  // namespace

TEST_CASE("encoding is deterministic and unit-norm") {
  Rng rng(1);
  const PatchArray p = random_patch(rng);
  const Eigen::VectorXd a = encode_patch(p, kHigh);
  const Eigen::VectorXd b = encode_patch(p, kHigh);
  CHECK(a == b);
  CHECK(a.size() == 10);
  CHECK(a.norm() == doctest::Approx(1.0));
}

TEST_CASE("all-zero patches of equal shape share one vector") {
  const PatchArray z1{4, 4, 3, std::vector<float>(48, 0.0f)};
  const PatchArray z2{4, 4, 3, std::vector<float>(48, 0.0f)};
  CHECK(encode_patch(z1, kLow) == encode_patch(z2, kLow));
  CHECK(encode_patch(z1, kLow).allFinite());
}

TEST_CASE("one-pixel changes move the embedding on 100 random pairs") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const PatchArray p = random_patch(rng);
    PatchArray q = p;
    const std::size_t at = rng.index(q.pixels.size());
    q.pixels[at] = static_cast<float>(q.pixels[at] + 0.25 + rng.uniform());
    CHECK(encode_patch(p, kHigh) != encode_patch(q, kHigh));
  }
}

TEST_CASE("pooled statistics layout") {
  PatchArray p{2, 2, 1, {0.0f, 1.0f, 2.0f, 5.0f}};
  const Eigen::VectorXd s = StubProjectionEncoder::pooled_statistics(p);
  REQUIRE(s.size() == 7);
  CHECK(s(0) == 1.0);
  CHECK(s(1) == doctest::Approx(2.0));                     // mean
  CHECK(s(3) == doctest::Approx(0.0));                     // min
  CHECK(s(4) == doctest::Approx(5.0));                     // max
  CHECK(s(5) == doctest::Approx((1.0 + 3.0) / 2.0));       // |dx|
  CHECK(s(6) == doctest::Approx((2.0 + 4.0) / 2.0));       // |dy|
}

TEST_CASE("bag assembly is keyed by index, not order") {
  const SlideGeometry g = build_geometry(1, 224, OriginLayout::row(), "e1");
  std::vector<IndexedPatch> patches = slide_patches(1, 3);
  const FeatureBag bag = encode_bag(patches, g, kLow, kHigh);
  CHECK(bag.f_low.rows() == 1);
  CHECK(bag.f_low.cols() == 6);
  CHECK(bag.f_high.rows() == 16);
  CHECK(bag.f_high.cols() == 10);
  std::reverse(patches.begin(), patches.end());
  CHECK(encode_bag(patches, g, kLow, kHigh) == bag);
}

TEST_CASE("missing or duplicated patches are rejected") {
  const SlideGeometry g = build_geometry(2, 224, OriginLayout::row(), "e2");
  std::vector<IndexedPatch> patches = slide_patches(2, 4);
  std::vector<IndexedPatch> missing(patches.begin(), patches.end() - 1);
  CHECK_THROWS_AS(encode_bag(missing, g, kLow, kHigh), CompletenessError);
  std::vector<IndexedPatch> dup = patches;
  dup.back() = dup.front();
  CHECK_THROWS_AS(encode_bag(dup, g, kLow, kHigh), CompletenessError);
}

TEST_CASE("unknown encoders and bad specs are rejected") {
  EncoderSpec bad = kLow;
  bad.name = "no-such-encoder";
  Rng rng(2);
  CHECK_THROWS_AS(encode_patch(random_patch(rng), bad), ConfigError);
  EncoderSpec zero = kLow;
  zero.dim_out = 0;
  CHECK_THROWS(zero.validate());
}

TEST_CASE("custom encoders plug in through the registry") {
  struct Constant final : PatchEncoder {
    Eigen::VectorXd encode(const PatchArray&) const override { return Eigen::VectorXd::Constant(3, 0.5); }
    int dim_out() const override { return 3; }
  };
  EncoderRegistry registry = EncoderRegistry::with_defaults();
  registry.add("constant", [](const EncoderSpec&, int) { return std::make_unique<Constant>(); });
  const SlideGeometry g = build_geometry(1, 224, OriginLayout::row(), "e3");
  const FeatureBag bag = encode_bag(slide_patches(1, 5), g, {"constant", 3, 0, true}, kHigh, registry);
  CHECK((bag.f_low.array() == 0.5).all());
}

TEST_CASE("three-tile bag hash is stable") {
  const SlideGeometry g = build_geometry(3, 224, OriginLayout::row(), "golden");
  const FeatureBag bag = encode_bag(slide_patches(3, 2024), g, kLow, kHigh);
  // Frozen from a reference run of this fixture.
  CHECK(bag_hash(bag) == 11521348570331287125ULL);
}
