#include "hmkg/slide_geometry.hpp"

#include "hmkg/errors.hpp"

#include <cmath>
#include <set>
#include <string>

namespace hmkg {

CellPosition cell_position(int cell) {
  if (cell < 1 || cell > kCellsPerTile) {
    throw DomainError("cell index " + std::to_string(cell) + " outside 1..16");
  }
  return {(cell - 1) / kGridSide, (cell - 1) % kGridSide};
}

int cell_number(CellPosition pos) {
  if (pos.row < 0 || pos.row >= kGridSide || pos.col < 0 || pos.col >= kGridSide) {
    throw DomainError("cell position outside the 4x4 grid");
  }
  return kGridSide * pos.row + pos.col + 1;
}

int GridIndex::row() const {
  if (!cell) throw DomainError("grid index has no cell component");
  return cell_position(*cell).row;
}

int GridIndex::col() const {
  if (!cell) throw DomainError("grid index has no cell component");
  return cell_position(*cell).col;
}

void SlideGeometry::validate() const {
  if (n_tiles < 1) throw DomainError("slide " + slide_id + ": n_tiles must be >= 1");
  if (low_patch_px < 1) throw DomainError("slide " + slide_id + ": low_patch_px must be >= 1");
  if (region_px != kGridSide * low_patch_px) {
    throw AlignmentError("slide " + slide_id + ": region_px must equal 4 * low_patch_px");
  }
  if (static_cast<int>(tile_origins.size()) != n_tiles) {
    throw AlignmentError("slide " + slide_id + ": expected " + std::to_string(n_tiles) +
                         " tile origins, got " + std::to_string(tile_origins.size()));
  }
  std::set<std::pair<long, long>> seen;
  for (const PixelOffset& o : tile_origins) {
    if (o.x % low_patch_px != 0 || o.y % low_patch_px != 0) {
      throw AlignmentError("slide " + slide_id + ": tile origin (" + std::to_string(o.x) + "," +
                           std::to_string(o.y) + ") is off the low-magnification lattice");
    }
    if (!seen.emplace(o.x, o.y).second) {
      throw AlignmentError("slide " + slide_id + ": overlapping tile origin (" +
                           std::to_string(o.x) + "," + std::to_string(o.y) + ")");
    }
  }
}

PixelOffset SlideGeometry::region_origin(int tile) const {
  if (tile < 1 || tile > n_tiles) throw DomainError("tile index out of range");
  const PixelOffset& o = tile_origins[static_cast<std::size_t>(tile - 1)];
  return {o.x * kGridSide, o.y * kGridSide};
}

SlideGeometry build_geometry(int n_tiles, int low_patch_px, const OriginLayout& layout,
                             std::string slide_id) {
  if (n_tiles < 1) throw DomainError("build_geometry: n_tiles must be >= 1");
  if (low_patch_px < 1) throw DomainError("build_geometry: low_patch_px must be >= 1");

  SlideGeometry g;
  g.slide_id = std::move(slide_id);
  g.n_tiles = n_tiles;
  g.low_patch_px = low_patch_px;
  g.region_px = kGridSide * low_patch_px;
  switch (layout.kind) {
    case OriginLayout::Kind::kRow:
      for (int j = 0; j < n_tiles; ++j) g.tile_origins.push_back({long{j} * low_patch_px, 0});
      break;
    case OriginLayout::Kind::kGrid:
      if (layout.columns < 1) throw DomainError("build_geometry: grid layout needs columns >= 1");
      for (int j = 0; j < n_tiles; ++j) {
        g.tile_origins.push_back({long{j % layout.columns} * low_patch_px,
                                  long{j / layout.columns} * low_patch_px});
      }
      break;
    case OriginLayout::Kind::kExplicit:
      g.tile_origins = layout.explicit_origins;
      break;
  }
  g.validate();
  return g;
}

PixelOffset cell_offset(const GridIndex& index, const SlideGeometry& geometry) {
  if (!index.cell) throw DomainError("cell_offset: index has no cell component");
  if (index.tile < 1 || index.tile > geometry.n_tiles) {
    throw DomainError("cell_offset: tile " + std::to_string(index.tile) + " outside 1.." +
                      std::to_string(geometry.n_tiles));
  }
  const CellPosition pos = cell_position(*index.cell);
  // High-magnification cells have the same pixel size as low-magnification tiles.
  return {long{pos.col} * geometry.low_patch_px, long{pos.row} * geometry.low_patch_px};
}

void FeatureBag::validate() const {
  geometry.validate();
  if (dim_low < 1 || dim_high < 1) throw ShapeError("slide " + geometry.slide_id + ": dims must be >= 1");
  if (f_low.rows() != n_tiles() || f_low.cols() != dim_low) {
    throw ShapeError("slide " + geometry.slide_id + ": f_low shape mismatch");
  }
  if (f_high.rows() != n_tiles() * kCellsPerTile || f_high.cols() != dim_high) {
    throw ShapeError("slide " + geometry.slide_id + ": f_high shape mismatch");
  }
  if (!f_low.allFinite() || !f_high.allFinite()) {
    throw DomainError("slide " + geometry.slide_id + ": non-finite feature value");
  }
}

bool FeatureBag::operator==(const FeatureBag& other) const {
  return geometry == other.geometry && dim_low == other.dim_low && dim_high == other.dim_high &&
         f_low.rows() == other.f_low.rows() && f_low.cols() == other.f_low.cols() &&
         f_high.rows() == other.f_high.rows() && f_high.cols() == other.f_high.cols() &&
         f_low == other.f_low && f_high == other.f_high;
}

void CohortManifest::validate() const {
  std::set<std::string> slide_ids;
  for (const ManifestEntry& e : slides) {
    if (!slide_ids.insert(e.slide_id).second) {
      throw IngestionError("cohort " + cohort_id + ": duplicate slide id " + e.slide_id);
    }
  }
  std::set<std::string> labelled;
  for (const SurvivalRecord& r : labels) {
    if (!labelled.insert(r.slide_id).second) {
      throw IngestionError("cohort " + cohort_id + ": duplicate label for " + r.slide_id);
    }
    if (!slide_ids.contains(r.slide_id)) {
      throw IngestionError("cohort " + cohort_id + ": label " + r.slide_id + " has no feature files");
    }
    if (!(r.time > 0.0) || !std::isfinite(r.time)) {
      throw IngestionError("cohort " + cohort_id + ": slide " + r.slide_id + " has non-positive time");
    }
  }
  for (const std::string& id : slide_ids) {
    if (!labelled.contains(id)) {
      throw IngestionError("cohort " + cohort_id + ": slide " + id + " has no label");
    }
  }
}

}  // namespace hmkg
