#include "binary_io.hpp"
#include "hmkg/errors.hpp"
#include "hmkg/slide_geometry.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace hmkg {

namespace detail {

std::string frame_header(const nlohmann::json& header) {
  std::string line = header.dump();
  const std::size_t total = ((line.size() + 1 + kHeaderAlign - 1) / kHeaderAlign) * kHeaderAlign;
  line.append(total - line.size() - 1, ' ');
  line.push_back('\n');
  return line;
}

ParsedHeader parse_header(std::string_view bytes) {
  const std::size_t newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw std::runtime_error("missing header line");
  if ((newline + 1) % kHeaderAlign != 0) {
    throw std::runtime_error("header length is not a multiple of 64 bytes");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("header is not valid JSON: ") + e.what());
  }
  return {std::move(header), newline + 1};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace detail

namespace {

using nlohmann::json;

json geometry_to_json(const SlideGeometry& g) {
  json origins = json::array();
  for (const PixelOffset& o : g.tile_origins) origins.push_back({o.x, o.y});
  return {{"slide_id", g.slide_id},
          {"n_tiles", g.n_tiles},
          {"low_patch_px", g.low_patch_px},
          {"region_px", g.region_px},
          {"tile_origins", origins}};
}

}  // namespace

void save_geometry(const SlideGeometry& geometry, const std::filesystem::path& path) {
  detail::write_file(path, geometry_to_json(geometry).dump(2) + "\n");
}

SlideGeometry load_geometry(const std::filesystem::path& path) {
  SlideGeometry g;
  try {
    const json j = json::parse(detail::read_file(path));
    g.slide_id = j.at("slide_id").get<std::string>();
    g.n_tiles = j.at("n_tiles").get<int>();
    g.low_patch_px = j.at("low_patch_px").get<int>();
    g.region_px = j.at("region_px").get<int>();
    for (const json& o : j.at("tile_origins")) {
      g.tile_origins.push_back({o.at(0).get<long>(), o.at(1).get<long>()});
    }
  } catch (const std::exception& e) {
    throw IngestionError("geometry file " + path.string() + ": " + e.what());
  }
  g.validate();
  return g;
}

std::string encode_feature_file(const FeatureBag& bag) {
  bag.validate();
  const json header = {{"n_tiles", bag.n_tiles()},   {"dim_low", bag.dim_low},
                       {"dim_high", bag.dim_high},   {"dtype", "f32"},
                       {"order", "row-major"},       {"endian", "little"}};
  std::string out = detail::frame_header(header);
  out.reserve(out.size() + sizeof(float) * static_cast<std::size_t>(bag.f_low.size() + bag.f_high.size()));
  for (Eigen::Index r = 0; r < bag.f_low.rows(); ++r) {
    for (Eigen::Index c = 0; c < bag.f_low.cols(); ++c) {
      detail::append_le(out, static_cast<float>(bag.f_low(r, c)));
    }
  }
  for (Eigen::Index r = 0; r < bag.f_high.rows(); ++r) {
    for (Eigen::Index c = 0; c < bag.f_high.cols(); ++c) {
      detail::append_le(out, static_cast<float>(bag.f_high(r, c)));
    }
  }
  return out;
}

void save_feature_bag(const FeatureBag& bag, const std::filesystem::path& path) {
  detail::write_file(path, encode_feature_file(bag));
}

FeatureBag decode_feature_file(const std::string& bytes, const SlideGeometry& geometry) {
  const std::string& id = geometry.slide_id;
  auto fail = [&id](const std::string& field, const std::string& what) -> IngestionError {
    return IngestionError("slide " + id + ", " + field + ": " + what);
  };

  detail::ParsedHeader parsed;
  try {
    parsed = detail::parse_header(bytes);
  } catch (const std::exception& e) {
    throw fail("header", e.what());
  }
  const json& h = parsed.header;
  int n_tiles = 0, dim_low = 0, dim_high = 0;
  try {
    n_tiles = h.at("n_tiles").get<int>();
    dim_low = h.at("dim_low").get<int>();
    dim_high = h.at("dim_high").get<int>();
    if (h.at("dtype") != "f32") throw fail("header", "dtype must be f32");
    if (h.at("order") != "row-major") throw fail("header", "order must be row-major");
    if (h.at("endian") != "little") throw fail("header", "endian must be little");
  } catch (const json::exception& e) {
    throw fail("header", e.what());
  }
  if (n_tiles != geometry.n_tiles) {
    throw fail("n_tiles", "header says " + std::to_string(n_tiles) + " but geometry says " +
                              std::to_string(geometry.n_tiles));
  }
  if (dim_low < 1 || dim_high < 1) throw fail("header", "dims must be >= 1");

  const std::size_t low_count = static_cast<std::size_t>(n_tiles) * dim_low;
  const std::size_t high_count = static_cast<std::size_t>(n_tiles) * kCellsPerTile * dim_high;
  const std::size_t expected = parsed.payload_offset + sizeof(float) * (low_count + high_count);
  if (bytes.size() != expected) {
    throw fail("payload", "expected " + std::to_string(expected) + " bytes, file has " +
                              std::to_string(bytes.size()));
  }

  FeatureBag bag;
  bag.geometry = geometry;
  bag.dim_low = dim_low;
  bag.dim_high = dim_high;
  bag.f_low.resize(n_tiles, dim_low);
  bag.f_high.resize(static_cast<Eigen::Index>(n_tiles) * kCellsPerTile, dim_high);
  const char* at = bytes.data() + parsed.payload_offset;
  for (int j = 0; j < n_tiles; ++j) {
    for (int c = 0; c < dim_low; ++c, at += sizeof(float)) {
      const float v = detail::read_le<float>(at);
      if (!std::isfinite(v)) {
        throw fail("f_low[" + std::to_string(j) + "][" + std::to_string(c) + "]", "non-finite value");
      }
      bag.f_low(j, c) = v;
    }
  }
  for (int j = 0; j < n_tiles; ++j) {
    for (int k = 0; k < kCellsPerTile; ++k) {
      for (int c = 0; c < dim_high; ++c, at += sizeof(float)) {
        const float v = detail::read_le<float>(at);
        if (!std::isfinite(v)) {
          throw fail("f_high[" + std::to_string(j) + "][" + std::to_string(k) + "][" +
                         std::to_string(c) + "]",
                     "non-finite value");
        }
        bag.f_high(j * kCellsPerTile + k, c) = v;
      }
    }
  }
  return bag;
}

FeatureBag load_feature_bag(const ManifestEntry& entry) {
  if (!std::filesystem::exists(entry.geometry_file)) {
    throw IngestionError("slide " + entry.slide_id + ", geometry: missing file " +
                         entry.geometry_file.string());
  }
  if (!std::filesystem::exists(entry.feature_file)) {
    throw IngestionError("slide " + entry.slide_id + ", features: missing file " +
                         entry.feature_file.string());
  }
  SlideGeometry geometry = load_geometry(entry.geometry_file);
  if (geometry.slide_id != entry.slide_id) {
    throw IngestionError("slide " + entry.slide_id + ", geometry: file names slide " + geometry.slide_id);
  }
  std::string bytes;
  try {
    bytes = detail::read_file(entry.feature_file);
  } catch (const std::exception& e) {
    throw IngestionError("slide " + entry.slide_id + ", features: " + e.what());
  }
  return decode_feature_file(bytes, geometry);
}

void save_manifest(const CohortManifest& manifest, const std::filesystem::path& dir) {
  manifest.validate();
  json slides = json::array();
  for (const ManifestEntry& e : manifest.slides) {
    slides.push_back({{"slide_id", e.slide_id},
                      {"geometry", e.geometry_file.lexically_relative(dir).generic_string()},
                      {"features", e.feature_file.lexically_relative(dir).generic_string()}});
  }
  json labels = json::array();
  for (const SurvivalRecord& r : manifest.labels) {
    labels.push_back({{"slide_id", r.slide_id}, {"time", r.time}, {"event", r.event}});
  }
  const json j = {{"cohort_id", manifest.cohort_id}, {"seed", manifest.seed},
                  {"dim_low", manifest.dim_low},     {"dim_high", manifest.dim_high},
                  {"slides", slides},                {"labels", labels}};
  detail::write_file(dir / "cohort.json", j.dump(2) + "\n");
}

CohortManifest load_manifest(const std::filesystem::path& dir) {
  CohortManifest m;
  try {
    const json j = json::parse(detail::read_file(dir / "cohort.json"));
    m.cohort_id = j.at("cohort_id").get<std::string>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.dim_low = j.at("dim_low").get<int>();
    m.dim_high = j.at("dim_high").get<int>();
    for (const json& s : j.at("slides")) {
      m.slides.push_back({s.at("slide_id").get<std::string>(),
                          dir / s.at("geometry").get<std::string>(),
                          dir / s.at("features").get<std::string>()});
    }
    for (const json& l : j.at("labels")) {
      m.labels.push_back({l.at("slide_id").get<std::string>(), l.at("time").get<double>(),
                          l.at("event").get<bool>(), std::nullopt});
    }
  } catch (const std::exception& e) {
    throw IngestionError("manifest " + (dir / "cohort.json").string() + ": " + e.what());
  }
  m.validate();
  return m;
}

Cohort load_cohort(const std::filesystem::path& dir) {
  Cohort cohort;
  cohort.manifest = load_manifest(dir);
  std::map<std::string, const SurvivalRecord*> by_id;
  for (const SurvivalRecord& r : cohort.manifest.labels) by_id[r.slide_id] = &r;
  for (const ManifestEntry& e : cohort.manifest.slides) {
    FeatureBag bag = load_feature_bag(e);
    if (bag.dim_low != cohort.manifest.dim_low || bag.dim_high != cohort.manifest.dim_high) {
      throw IngestionError("slide " + e.slide_id + ", dims: feature file disagrees with manifest");
    }
    cohort.bags.push_back(std::move(bag));
    cohort.records.push_back(*by_id.at(e.slide_id));
  }
  return cohort;
}

}  // namespace hmkg
