#pragma once

/// Field archives: a JSON manifest next to a raw little-endian float64
/// payload whose SHA-256 digest is stored in the manifest and checked on load.

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "ymlab/fields.hpp"

namespace ymlab {

struct ArchiveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Lowercase hex SHA-256 of a byte buffer.
inline std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) != 1) throw ArchiveError("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[md[i] >> 4];
    out[2 * i + 1] = hex[md[i] & 15];
  }
  return out;
}

namespace detail {

inline std::string to_le_bytes(std::span<const double> v) {
  std::string bytes(v.size() * 8, '\0');
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t u = std::bit_cast<std::uint64_t>(v[i]);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
    std::memcpy(bytes.data() + 8 * i, &u, 8);
  }
  return bytes;
}

inline void from_le_bytes(const std::string& bytes, std::span<double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t u;
    std::memcpy(&u, bytes.data() + 8 * i, 8);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
    v[i] = std::bit_cast<double>(u);
  }
}

inline std::filesystem::path payload_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

}  // namespace detail

/// Writes <base>.json and <base>.bin. Extra metadata lands under "meta".
/// Returns the manifest path.
template <FormKind K>
std::filesystem::path save_field(const LatticeForm<K>& form, const std::filesystem::path& base,
                                 const nlohmann::json& meta = nlohmann::json::object()) {
  auto manifest = base;
  manifest.replace_extension(".json");
  const auto payload = detail::payload_path(manifest);
  if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
  const std::string bytes = detail::to_le_bytes(form.data());
  {
    std::ofstream out(payload, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ArchiveError("cannot write " + payload.string());
  }
  const Grid& g = form.grid();
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = kind_name(K);
  j["n"] = g.n();
  j["m"] = g.m();
  j["R"] = g.R();
  j["r"] = form.rank();
  j["layout"] = "point-major, component, row-major r x r block, float64 little-endian";
  j["payload_file"] = payload.filename().string();
  j["values"] = form.data().size();
  j["payload_sha256"] = sha256_hex(bytes.data(), bytes.size());
  j["meta"] = meta;
  std::ofstream out(manifest);
  out << j.dump(2) << '\n';
  if (!out) throw ArchiveError("cannot write " + manifest.string());
  return manifest;
}

inline nlohmann::json read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ArchiveError("cannot open " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(manifest.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format_version", 0) != 1 || !j.contains("payload_file")) throw ArchiveError(manifest.string() + " is not a field archive");
  return j;
}

/// Loads an archive written by save_field, verifying kind, sizes and digest.
template <FormKind K>
LatticeForm<K> load_field(const std::filesystem::path& manifest_path) {
  auto manifest = manifest_path;
  if (manifest.extension() != ".json") manifest.replace_extension(".json");
  const nlohmann::json j = read_manifest(manifest);
  if (j["kind"].get<std::string>() != kind_name(K))
    throw ArchiveError("archive holds a " + j["kind"].get<std::string>() + ", expected " + kind_name(K));
  const Grid g(j["n"].get<int>(), j["m"].get<int>(), j["R"].get<double>());
  LatticeForm<K> form(g, j["r"].get<int>());
  const auto payload = manifest.parent_path() / j["payload_file"].get<std::string>();
  std::ifstream in(payload, std::ios::binary);
  if (!in) throw ArchiveError("cannot open " + payload.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != form.data().size() * 8 || j["values"].get<std::size_t>() != form.data().size())
    throw ArchiveError(payload.string() + ": payload size does not match the grid");
  if (sha256_hex(bytes.data(), bytes.size()) != j["payload_sha256"].get<std::string>())
    throw ArchiveError(payload.string() + ": SHA-256 mismatch");
  detail::from_le_bytes(bytes, form.storage());
  return form;
}

}  // namespace ymlab
