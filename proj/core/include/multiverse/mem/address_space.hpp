#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <variant>

#include "multiverse/mem/address.hpp"
#include "multiverse/mem/physical_memory.hpp"

namespace multiverse::mem {

struct ControlState {
  bool cr0_wp = true;
  std::uint64_t cr3 = 0;
  Ring ring = Ring::Ring3;
};

enum class FaultReason { NotPresent, WriteProtect, Privilege };

struct FaultInfo {
  VirtAddr addr;
  AccessKind access = AccessKind::Read;
  FaultReason reason = FaultReason::NotPresent;

  friend constexpr bool operator==(const FaultInfo&, const FaultInfo&) = default;
};

using Translation = std::variant<PhysAddr, FaultInfo>;

inline bool faulted(const Translation& t) {
  return std::holds_alternative<FaultInfo>(t);
}

// A four-level page-table hierarchy rooted at `cr3()`. The object is a view:
// the tables themselves live in PhysicalMemory, which must outlive it.
class AddressSpace {
 public:
  // Allocates a fresh, empty root table from `table_partition`.
  AddressSpace(PhysicalMemory& memory, FrameOwner table_partition);

  // Views an existing hierarchy rooted at `cr3`.
  static AddressSpace attach(PhysicalMemory& memory, std::uint64_t cr3,
                             FrameOwner table_partition);

  std::uint64_t cr3() const noexcept { return root_; }
  PhysicalMemory& memory() const noexcept { return *memory_; }
  FrameOwner table_partition() const noexcept { return partition_; }

  ControlState control(Ring ring, bool cr0_wp) const {
    return ControlState{cr0_wp, root_, ring};
  }

  // Walks the hierarchy. Non-canonical input and a cr3 that does not match
  // this space are usage errors, not faults.
  Translation translate(const ControlState& ctl, VirtAddr addr,
                        AccessKind access) const;
  Translation translate(const ControlState& ctl, std::uint64_t addr,
                        AccessKind access) const;

  // Last writer wins. Intermediate tables come from table_partition().
  void map_page(VirtAddr vaddr, PhysFrame frame, bool writable);
  // Unmapping an unmapped page is a no-op. Returns the frame that was mapped.
  std::optional<std::uint64_t> unmap_page(VirtAddr vaddr);

  // Leaf entry for `vaddr`, if every level above it is present.
  std::optional<PageTableEntry> leaf(VirtAddr vaddr) const;

  const PageTable& root_table() const { return memory_->table(root_); }
  PageTable& root_table() { return memory_->table(root_); }

  // Visits every present leaf as (vaddr, entry) in ascending address order.
  void for_each_mapping(
      const std::function<void(VirtAddr, const PageTableEntry&)>& fn) const;

 private:
  AddressSpace(PhysicalMemory& memory, std::uint64_t root, FrameOwner part)
      : memory_(&memory), root_(root), partition_(part) {}

  PhysicalMemory* memory_;
  std::uint64_t root_;
  FrameOwner partition_;
};

// Maps HIGHER_BASE + f * 4096 -> f for every f < phys_frame_count.
void identity_map_higher_half(AddressSpace& hrt_space,
                              std::uint64_t phys_frame_count);

// Copies root entries 0..255 of `ros_space` into `hrt_space`. Sub-tables are
// shared, not duplicated, so only root-level changes need a re-merge.
void merge_lower_half(AddressSpace& hrt_space, const AddressSpace& ros_space);

bool lower_halves_consistent(const AddressSpace& hrt_space,
                             const AddressSpace& ros_space);

}  // namespace multiverse::mem
