#pragma once

#include "hmkg/slide_geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

// Frozen patch-embedding interface. Real foundation-model encoders plug in
// through the registry; the built-in "stub-projection" encoder is a seeded
// random projection of pooled pixel statistics.
namespace hmkg::encoder {

struct EncoderSpec {
  std::string name = "stub-projection";
  int dim_out = 64;
  std::uint64_t seed = 0;
  bool frozen = true;

  void validate() const;
};

// H x W x C pixels, row-major with channels innermost.
struct PatchArray {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

class PatchEncoder {
 public:
  virtual ~PatchEncoder() = default;
  virtual Eigen::VectorXd encode(const PatchArray& patch) const = 0;
  virtual int dim_out() const = 0;
};

class StubProjectionEncoder final : public PatchEncoder {
 public:
  // Channel count is fixed at construction so the projection shape is known.
  StubProjectionEncoder(const EncoderSpec& spec, int channels);
  Eigen::VectorXd encode(const PatchArray& patch) const override;
  int dim_out() const override { return static_cast<int>(projection_.rows()); }

  // [1, then per channel: mean, std, min, max, mean |horizontal diff|, mean |vertical diff|]
  static Eigen::VectorXd pooled_statistics(const PatchArray& patch);

 private:
  int channels_;
  Eigen::MatrixXd projection_;
};

using EncoderFactory = std::function<std::unique_ptr<PatchEncoder>(const EncoderSpec&, int channels)>;

class EncoderRegistry {
 public:
  // Contains "stub-projection".
  static EncoderRegistry with_defaults();

  void add(const std::string& name, EncoderFactory factory);
  std::unique_ptr<PatchEncoder> create(const EncoderSpec& spec, int channels) const;

 private:
  std::map<std::string, EncoderFactory> factories_;
};

Eigen::VectorXd encode_patch(const PatchArray& pixels, const EncoderSpec& spec);

struct IndexedPatch {
  GridIndex index;  // cell absent => low-magnification tile patch
  PatchArray pixels;
};

// Assembles a FeatureBag keyed by each patch's index; presentation order is
// irrelevant. Every tile needs one low patch and all 16 high patches.
FeatureBag encode_bag(const std::vector<IndexedPatch>& patches, const SlideGeometry& geometry,
                      const EncoderSpec& spec_low, const EncoderSpec& spec_high,
                      const EncoderRegistry& registry = EncoderRegistry::with_defaults());

}  // namespace hmkg::encoder
