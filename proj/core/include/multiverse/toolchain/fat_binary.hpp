#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "multiverse/hrt/image.hpp"

namespace multiverse::toolchain {

// Container layout, all integers little-endian:
//   0..7   magic "MVFATBIN"
//   8..11  version (u32)
//   12..15 app descriptor length (u32)
//   16..19 image length (u32)
//   app descriptor: u32 name length, name, u32 ref length, ref
//   image: u32 entry length, entry, u64 payload size, u32 symbol count,
//          then per symbol u32 name length, name, u64 address
// Payloads follow the header with no padding.
inline constexpr std::string_view kFatBinaryMagic = "MVFATBIN";
inline constexpr std::uint32_t kFatBinaryVersion = 1;
inline constexpr std::size_t kFatBinaryHeaderSize = 20;

struct AppDescriptor {
  std::string name;
  std::string workload_ref;

  friend bool operator==(const AppDescriptor&, const AppDescriptor&) = default;
};

struct FatBinary {
  AppDescriptor app;
  hrt::AeroKernelImage image;

  friend bool operator==(const FatBinary&, const FatBinary&) = default;
};

std::vector<std::uint8_t> embed(const AppDescriptor& app,
                                const hrt::AeroKernelImage& image);

// Strict inverse of embed(). Throws FormatError carrying the byte offset of
// the first inconsistency.
FatBinary parse_fat_binary(std::span<const std::uint8_t> bytes);

}  // namespace multiverse::toolchain
