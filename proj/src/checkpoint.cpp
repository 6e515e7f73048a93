#include "binary_io.hpp"
#include "hmkg/errors.hpp"
#include "hmkg/hmkg_model.hpp"

namespace hmkg::model {

namespace {

constexpr const char* kFormat = "hmkg-checkpoint";
constexpr int kVersion = 1;

}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  nlohmann::json tensors = nlohmann::json::array();
  checkpoint.params.for_each([&tensors](const std::string& name, const ad::Matrix& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  nlohmann::json header = {{"format", kFormat},
                           {"version", kVersion},
                           {"dtype", "f64"},
                           {"order", "row-major"},
                           {"endian", "little"},
                           {"model", checkpoint.params.config.to_json()},
                           {"tensors", tensors}};
  if (checkpoint.binning) {
    header["binning"] = {{"bins", checkpoint.binning->bins}, {"cut_points", checkpoint.binning->cut_points}};
  }
  std::string out = detail::frame_header(header);
  checkpoint.params.for_each([&out](const std::string&, const ad::Matrix& m) {
    for (ad::Index r = 0; r < m.rows(); ++r) {
      for (ad::Index c = 0; c < m.cols(); ++c) detail::append_le(out, m(r, c));
    }
  });
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  detail::ParsedHeader parsed;
  try {
    parsed = detail::parse_header(bytes);
  } catch (const std::exception& e) {
    throw IngestionError(std::string("checkpoint: ") + e.what());
  }
  const nlohmann::json& h = parsed.header;
  Checkpoint ck;
  try {
    if (h.at("format") != kFormat) throw IngestionError("checkpoint: not an hmkg checkpoint");
    if (h.at("version").get<int>() != kVersion) {
      throw IngestionError("checkpoint: unsupported version " + h.at("version").dump());
    }
    if (h.at("dtype") != "f64" || h.at("order") != "row-major" || h.at("endian") != "little") {
      throw IngestionError("checkpoint: unsupported tensor encoding");
    }
    // Shapes come from re-initialising the architecture; values are overwritten below.
    ck.params = HmkgParams::init(ModelConfig::from_json(h.at("model")), 0);
    if (h.contains("binning")) {
      survival::TimeBinning b;
      b.bins = h["binning"].at("bins").get<int>();
      b.cut_points = h["binning"].at("cut_points").get<std::vector<double>>();
      b.validate();
      ck.binning = b;
    }
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("checkpoint header: ") + e.what());
  }

  const nlohmann::json& table = h.at("tensors");
  std::size_t index = 0;
  std::size_t at = parsed.payload_offset;
  ck.params.for_each([&](const std::string& name, ad::Matrix& m) {
    if (index >= table.size()) throw IngestionError("checkpoint: tensor table is missing " + name);
    const nlohmann::json& entry = table[index++];
    if (entry.at("name") != name || entry.at("rows").get<ad::Index>() != m.rows() ||
        entry.at("cols").get<ad::Index>() != m.cols()) {
      throw IngestionError("checkpoint: tensor " + name + " does not match the declared architecture");
    }
    const std::size_t need = sizeof(double) * static_cast<std::size_t>(m.size());
    if (at + need > bytes.size()) throw IngestionError("checkpoint: truncated tensor " + name);
    for (ad::Index r = 0; r < m.rows(); ++r) {
      for (ad::Index c = 0; c < m.cols(); ++c, at += sizeof(double)) m(r, c) = detail::read_le<double>(bytes.data() + at);
    }
  });
  if (index != table.size()) throw IngestionError("checkpoint: unexpected extra tensors");
  if (at != bytes.size()) throw IngestionError("checkpoint: trailing bytes after the last tensor");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const std::exception& e) {
    throw IngestionError(std::string("checkpoint: ") + e.what());
  }
  return decode_checkpoint(bytes);
}

}  // namespace hmkg::model
