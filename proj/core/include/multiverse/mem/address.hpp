#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>

namespace multiverse::mem {

inline constexpr std::uint64_t kPageSize = 4096;
inline constexpr std::uint64_t kPageShift = 12;
inline constexpr std::size_t kEntriesPerTable = 512;
inline constexpr std::size_t kLowerHalfEntries = 256;
inline constexpr int kLevels = 4;

// Start of the canonical higher half; physical memory is identity-mapped here
// inside the HRT.
inline constexpr std::uint64_t kHigherHalfBase = 0xFFFF'8000'0000'0000ULL;
inline constexpr std::uint64_t kLowerHalfEnd = 0x0000'8000'0000'0000ULL;

enum class Half { Lower, Higher };

class VirtAddr {
 public:
  constexpr VirtAddr() = default;

  // Throws UsageError when `value` is not canonical.
  static VirtAddr from(std::uint64_t value);

  static constexpr bool is_canonical(std::uint64_t value) noexcept {
    const std::uint64_t top = value >> 47;
    return top == 0 || top == 0x1FFFF;
  }

  constexpr std::uint64_t value() const noexcept { return value_; }
  constexpr Half half() const noexcept {
    return (value_ >> 47) & 1 ? Half::Higher : Half::Lower;
  }
  constexpr bool lower() const noexcept { return half() == Half::Lower; }
  constexpr bool page_aligned() const noexcept {
    return (value_ & (kPageSize - 1)) == 0;
  }
  constexpr VirtAddr page_base() const noexcept {
    return VirtAddr(value_ & ~(kPageSize - 1));
  }
  constexpr std::uint64_t page_offset() const noexcept {
    return value_ & (kPageSize - 1);
  }

  // Table index used at `level` (4 = PML4 ... 1 = page table).
  constexpr std::size_t index(int level) const noexcept {
    return static_cast<std::size_t>(
        (value_ >> (kPageShift + 9 * (level - 1))) & 0x1FF);
  }

  friend constexpr auto operator<=>(VirtAddr, VirtAddr) = default;

 private:
  constexpr explicit VirtAddr(std::uint64_t v) : value_(v) {}
  std::uint64_t value_ = 0;
};

std::string to_hex(std::uint64_t v);

enum class FrameOwner { RosVisible, HrtOnly };

struct PhysFrame {
  std::uint64_t number = 0;
  FrameOwner owner = FrameOwner::RosVisible;

  constexpr std::uint64_t base() const noexcept { return number << kPageShift; }
  friend constexpr bool operator==(const PhysFrame&, const PhysFrame&) = default;
};

struct PhysAddr {
  std::uint64_t value = 0;
  friend constexpr auto operator<=>(PhysAddr, PhysAddr) = default;
};

enum class AccessKind { Read, Write, Execute };
enum class Ring { Ring0, Ring3 };

const char* to_string(AccessKind a);
char access_letter(AccessKind a);

}  // namespace multiverse::mem
