#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multiverse/common.hpp"
#include "multiverse/mem/address.hpp"

namespace multiverse::hrt {

// Link address of the AeroKernel image inside the HRT higher half.
inline constexpr std::uint64_t kImageLinkBase = 0xFFFF'FFFF'8000'0000ULL;
inline constexpr std::uint64_t kSymbolStride = 64;

struct AeroKernelImage {
  std::string entry;
  std::map<std::string, mem::VirtAddr> symbols;
  std::uint64_t payload_size = 0;

  friend bool operator==(const AeroKernelImage&, const AeroKernelImage&) = default;
};

// Lays `names` out at kImageLinkBase in order, one stride apart. `entry`
// must be among them.
AeroKernelImage link_image(const std::string& entry,
                           std::span<const std::string> names);

// Declarative stand-in for a function body.
struct FunctionBehavior {
  Cycles cycles = 0;
  std::uint64_t returns = 0;
  std::vector<std::uint64_t> touches;  // addresses written, in order
  bool starts_thread = false;           // first argument is the thread entry

  friend bool operator==(const FunctionBehavior&, const FunctionBehavior&) = default;
};

// AeroKernel functions that exist in every image.
const std::map<std::string, FunctionBehavior>& builtin_functions();
inline constexpr const char* kImageEntry = "nk_main";

class FunctionTable {
 public:
  struct Entry {
    mem::VirtAddr addr;
    FunctionBehavior behavior;
  };

  void add(const std::string& name, mem::VirtAddr addr, FunctionBehavior b);
  const Entry* find(const std::string& name) const;
  std::optional<std::string> name_at(mem::VirtAddr addr) const;
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

// The function-linkage step: every image symbol becomes a table entry whose
// behavior comes from `behaviors` (built-ins and defaults otherwise).
FunctionTable link_functions(
    const AeroKernelImage& image,
    const std::map<std::string, FunctionBehavior>& behaviors);

}  // namespace multiverse::hrt
