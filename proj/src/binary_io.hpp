#pragma once

// Shared framing for feature and checkpoint files: one ASCII-JSON header line
// padded with spaces to a multiple of 64 bytes, followed by little-endian data.

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

namespace hmkg::detail {

inline constexpr std::size_t kHeaderAlign = 64;

std::string frame_header(const nlohmann::json& header);

struct ParsedHeader {
  nlohmann::json header;
  std::size_t payload_offset = 0;
};

// Throws the supplied error type's message via std::runtime_error; callers wrap it.
ParsedHeader parse_header(std::string_view bytes);

template <class T>
void append_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.append(raw, sizeof(T));
}

template <class T>
T read_le(const char* at) {
  char raw[sizeof(T)];
  std::memcpy(raw, at, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace hmkg::detail
