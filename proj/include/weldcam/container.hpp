#pragma once

// Length-prefixed tensor container shared by frozen models and classifiers.
//
// Layout (all integers little-endian):
//   magic            8 bytes
//   version          u32
//   metadata_length  u64, then that many bytes of "key=value\n" lines (sorted by key)
//   tensor_count     u32
//   per tensor:
//     name_length u32, name bytes
//     dtype       u8 (1 = float64)
//     rank        u32, then rank x u64 extents
//     byte_length u64, then raw little-endian values
//   crc32            u32 over every preceding byte
//
// Decoding checks magic, then version, then walks the structure with bounds
// checks (any length reaching past the end is a TruncatedFileError), then
// verifies the checksum. Nothing is returned unless every check passes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "weldcam/tensor.hpp"

namespace weldcam::io {

using Magic = std::array<char, 8>;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Container {
  std::map<std::string, std::string> metadata;
  std::vector<NamedTensor> tensors;

  const Tensor& tensor(const std::string& name) const;
  const std::string& meta(const std::string& key) const;
};

std::vector<std::uint8_t> encode_container(const Magic& magic, std::uint32_t version,
                                           const Container& container);
Container decode_container(std::span<const std::uint8_t> bytes, const Magic& magic,
                           std::uint32_t version);

void write_container(const std::filesystem::path& path, const Magic& magic, std::uint32_t version,
                     const Container& container);
Container read_container(const std::filesystem::path& path, const Magic& magic,
                         std::uint32_t version);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace weldcam::io
