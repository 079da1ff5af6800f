#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pft/numerics/tensor.hpp"

namespace pft {

// Binary container used for checkpoints, profiles.bin and per-subject sample
// files. Layout, all integers little-endian:
//
//   "PFT1" | u16 version | u64 payload bytes | payload | u32 CRC-32 of payload
//   payload = u32 entry count, then per entry:
//             u32 name bytes | UTF-8 name | u32 rank | rank x u32 extents | f64 values
//
// Decoding checks, in order: magic (FormatError), version (VersionError),
// length (TruncatedError), checksum (ChecksumError), entry structure
// (FormatError). Nothing is returned unless every check passes.

inline constexpr std::uint16_t kContainerVersion = 1;

struct Entry {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

class Container {
 public:
  void put(std::string name, std::vector<std::size_t> shape, std::vector<double> values);
  void put(std::string name, const Tensor& t);
  void put_scalar(std::string name, double v);
  /// Bytes of a string stored one per value; used for hashes and labels.
  void put_text(std::string name, const std::string& text);

  bool has(const std::string& name) const;
  const Entry& get(const std::string& name) const;
  Tensor tensor(const std::string& name) const;
  double scalar(const std::string& name) const;
  std::string text(const std::string& name) const;

  /// Names starting with `prefix`, in insertion order.
  std::vector<std::string> names(const std::string& prefix = {}) const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  std::vector<Entry> entries_;
};

std::vector<std::uint8_t> encode(const Container& c);
Container decode(std::span<const std::uint8_t> bytes);

void save_container(const Container& c, const std::filesystem::path& path);
Container load_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace pft
