#include "hmkg/patch_encoder.hpp"

#include "hmkg/errors.hpp"
#include "hmkg/rng.hpp"

#include <cmath>
#include <set>

namespace hmkg::encoder {

namespace {

constexpr int kStatsPerChannel = 6;

void check_patch(const PatchArray& patch) {
  if (patch.height < 1 || patch.width < 1 || patch.channels < 1) {
    throw DomainError("encode_patch: empty patch");
  }
  if (patch.pixels.size() != static_cast<std::size_t>(patch.height) * patch.width * patch.channels) {
    throw ShapeError("encode_patch: pixel buffer does not match H x W x C");
  }
  for (float v : patch.pixels) {
    if (!std::isfinite(v)) throw DomainError("encode_patch: non-finite pixel");
  }
}

}  // namespace

void EncoderSpec::validate() const {
  if (dim_out < 1) throw DomainError("encoder " + name + ": dim_out must be >= 1");
  if (!frozen) throw DomainError("encoder " + name + ": encoders are always frozen");
}

StubProjectionEncoder::StubProjectionEncoder(const EncoderSpec& spec, int channels) : channels_(channels) {
  spec.validate();
  if (channels < 1) throw DomainError("stub encoder: channels must be >= 1");
  Rng rng(derive_seed(spec.seed, spec.name + "/" + std::to_string(spec.dim_out) + "/" +
                                     std::to_string(channels)));
  projection_.resize(spec.dim_out, 1 + kStatsPerChannel * channels);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = rng.normal();
}

Eigen::VectorXd StubProjectionEncoder::pooled_statistics(const PatchArray& patch) {
  check_patch(patch);
  Eigen::VectorXd stats(1 + kStatsPerChannel * patch.channels);
  stats(0) = 1.0;
  const double count = static_cast<double>(patch.height) * patch.width;
  for (int c = 0; c < patch.channels; ++c) {
    double sum = 0.0, sq = 0.0, lo = patch.at(0, 0, c), hi = lo, dx = 0.0, dy = 0.0;
    for (int y = 0; y < patch.height; ++y) {
      for (int x = 0; x < patch.width; ++x) {
        const double v = patch.at(y, x, c);
        sum += v;
        sq += v * v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        if (x + 1 < patch.width) dx += std::abs(patch.at(y, x + 1, c) - v);
        if (y + 1 < patch.height) dy += std::abs(patch.at(y + 1, x, c) - v);
      }
    }
    const double mean = sum / count;
    const int base = 1 + kStatsPerChannel * c;
    stats(base) = mean;
    stats(base + 1) = std::sqrt(std::max(0.0, sq / count - mean * mean));
    stats(base + 2) = lo;
    stats(base + 3) = hi;
    stats(base + 4) = patch.width > 1 ? dx / (patch.height * (patch.width - 1.0)) : 0.0;
    stats(base + 5) = patch.height > 1 ? dy / ((patch.height - 1.0) * patch.width) : 0.0;
  }
  return stats;
}

Eigen::VectorXd StubProjectionEncoder::encode(const PatchArray& patch) const {
  check_patch(patch);
  if (patch.channels != channels_) throw ShapeError("stub encoder: channel count mismatch");
  Eigen::VectorXd v = projection_ * pooled_statistics(patch);
  const double norm = v.norm();
  return norm > 0.0 ? Eigen::VectorXd(v / norm) : v;
}

EncoderRegistry EncoderRegistry::with_defaults() {
  EncoderRegistry registry;
  registry.add("stub-projection", [](const EncoderSpec& spec, int channels) {
    return std::make_unique<StubProjectionEncoder>(spec, channels);
  });
  return registry;
}

void EncoderRegistry::add(const std::string& name, EncoderFactory factory) {
  factories_[name] = std::move(factory);
}

std::unique_ptr<PatchEncoder> EncoderRegistry::create(const EncoderSpec& spec, int channels) const {
  spec.validate();
  const auto it = factories_.find(spec.name);
  if (it == factories_.end()) throw ConfigError("no encoder registered under '" + spec.name + "'");
  return it->second(spec, channels);
}

Eigen::VectorXd encode_patch(const PatchArray& pixels, const EncoderSpec& spec) {
  check_patch(pixels);
  return EncoderRegistry::with_defaults().create(spec, pixels.channels)->encode(pixels);
}

FeatureBag encode_bag(const std::vector<IndexedPatch>& patches, const SlideGeometry& geometry,
                      const EncoderSpec& spec_low, const EncoderSpec& spec_high,
                      const EncoderRegistry& registry) {
  geometry.validate();
  const int n = geometry.n_tiles;
  std::vector<const PatchArray*> low(static_cast<std::size_t>(n), nullptr);
  std::vector<const PatchArray*> high(static_cast<std::size_t>(n) * kCellsPerTile, nullptr);
  for (const IndexedPatch& p : patches) {
    if (p.index.tile < 1 || p.index.tile > n) {
      throw CompletenessError("encode_bag: tile " + std::to_string(p.index.tile) + " outside geometry");
    }
    const std::size_t j = static_cast<std::size_t>(p.index.tile - 1);
    const PatchArray** slot = nullptr;
    if (p.index.cell) {
      cell_position(*p.index.cell);
      slot = &high[j * kCellsPerTile + static_cast<std::size_t>(*p.index.cell - 1)];
    } else {
      slot = &low[j];
    }
    if (*slot != nullptr) throw CompletenessError("encode_bag: duplicate patch for one index");
    *slot = &p.pixels;
  }
  for (int j = 0; j < n; ++j) {
    if (!low[static_cast<std::size_t>(j)]) {
      throw CompletenessError("encode_bag: missing low-magnification patch for tile " + std::to_string(j + 1));
    }
    for (int k = 0; k < kCellsPerTile; ++k) {
      if (!high[static_cast<std::size_t>(j * kCellsPerTile + k)]) {
        throw CompletenessError("encode_bag: missing high-magnification patch (tile " + std::to_string(j + 1) +
                                ", cell " + std::to_string(k + 1) + ")");
      }
    }
  }

  const auto low_encoder = registry.create(spec_low, low[0]->channels);
  const auto high_encoder = registry.create(spec_high, high[0]->channels);
  FeatureBag bag;
  bag.geometry = geometry;
  bag.dim_low = low_encoder->dim_out();
  bag.dim_high = high_encoder->dim_out();
  bag.f_low.resize(n, bag.dim_low);
  bag.f_high.resize(n * kCellsPerTile, bag.dim_high);
  for (int j = 0; j < n; ++j) bag.f_low.row(j) = low_encoder->encode(*low[static_cast<std::size_t>(j)]).transpose();
  for (std::size_t r = 0; r < high.size(); ++r) {
    bag.f_high.row(static_cast<Eigen::Index>(r)) = high_encoder->encode(*high[r]).transpose();
  }
  bag.validate();
  return bag;
}

}  // namespace hmkg::encoder
