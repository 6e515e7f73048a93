#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Multi-scale tiling lattice: every low-magnification tile j of slide i owns a
// 4x4 block of high-magnification cells k = 1..16 in row-major order.
namespace hmkg {

inline constexpr int kGridSide = 4;
inline constexpr int kCellsPerTile = kGridSide * kGridSide;

struct CellPosition {
  int row = 0;
  int col = 0;
  bool operator==(const CellPosition&) const = default;
};

// k = 4 * row + col + 1
CellPosition cell_position(int cell);
int cell_number(CellPosition pos);

struct GridIndex {
  int slide = 1;
  int tile = 1;
  std::optional<int> cell;  // absent for low-magnification tiles

  int row() const;
  int col() const;
  bool operator==(const GridIndex&) const = default;
};

struct PixelOffset {
  long x = 0;
  long y = 0;
  bool operator==(const PixelOffset&) const = default;
};

struct SlideGeometry {
  std::string slide_id;
  int n_tiles = 0;
  int low_patch_px = 224;
  int region_px = 896;
  std::vector<PixelOffset> tile_origins;  // low-magnification pixels, one per tile

  // Throws AlignmentError / DomainError when an invariant is broken.
  void validate() const;
  // Top-left of the tile's 4x4 region at high magnification.
  PixelOffset region_origin(int tile) const;
  bool operator==(const SlideGeometry&) const = default;
};

struct OriginLayout {
  enum class Kind { kRow, kGrid, kExplicit };
  Kind kind = Kind::kRow;
  int columns = 1;                        // kGrid only
  std::vector<PixelOffset> explicit_origins;  // kExplicit only, in lattice pixels

  static OriginLayout row() { return {}; }
  static OriginLayout grid(int columns) { return {Kind::kGrid, columns, {}}; }
  static OriginLayout explicit_list(std::vector<PixelOffset> origins) {
    return {Kind::kExplicit, 1, std::move(origins)};
  }
};

SlideGeometry build_geometry(int n_tiles, int low_patch_px, const OriginLayout& layout,
                             std::string slide_id = "slide");

// Offset of the cell inside its tile's high-magnification region.
PixelOffset cell_offset(const GridIndex& index, const SlideGeometry& geometry);

// Per-slide features. Row j of f_low is tile j (0-based); rows 16j..16j+15 of
// f_high are cells k = 1..16 of tile j.
struct FeatureBag {
  SlideGeometry geometry;
  int dim_low = 0;
  int dim_high = 0;
  Eigen::MatrixXd f_low;
  Eigen::MatrixXd f_high;

  int n_tiles() const { return geometry.n_tiles; }
  auto tile_cells(int tile) const { return f_high.middleRows(tile * kCellsPerTile, kCellsPerTile); }
  // Throws ShapeError / DomainError if shapes or finiteness are violated.
  void validate() const;
  bool operator==(const FeatureBag& other) const;
};

struct SurvivalRecord {
  std::string slide_id;
  double time = 0.0;  // months, > 0
  bool event = false;  // true = death observed
  std::optional<int> bin;
};

struct ManifestEntry {
  std::string slide_id;
  std::filesystem::path geometry_file;
  std::filesystem::path feature_file;
};

struct CohortManifest {
  std::string cohort_id;
  std::vector<ManifestEntry> slides;
  std::vector<SurvivalRecord> labels;
  std::uint64_t seed = 0;
  int dim_low = 0;
  int dim_high = 0;

  void validate() const;
};

struct Cohort {
  CohortManifest manifest;
  std::vector<FeatureBag> bags;          // parallel to manifest.slides
  std::vector<SurvivalRecord> records;   // parallel to manifest.slides
};

// Geometry JSON (<id>.geom.json).
void save_geometry(const SlideGeometry& geometry, const std::filesystem::path& path);
SlideGeometry load_geometry(const std::filesystem::path& path);

// Feature file (<id>.feat.bin): ASCII-JSON header line padded with spaces to a
// multiple of 64 bytes, then f_low and f_high as little-endian row-major f32.
std::string encode_feature_file(const FeatureBag& bag);
void save_feature_bag(const FeatureBag& bag, const std::filesystem::path& path);
FeatureBag decode_feature_file(const std::string& bytes, const SlideGeometry& geometry);
FeatureBag load_feature_bag(const ManifestEntry& entry);

// Manifest (cohort.json), paths stored relative to the cohort directory.
void save_manifest(const CohortManifest& manifest, const std::filesystem::path& dir);
CohortManifest load_manifest(const std::filesystem::path& dir);
Cohort load_cohort(const std::filesystem::path& dir);

}  // namespace hmkg
