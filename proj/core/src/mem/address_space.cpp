#include "multiverse/mem/address_space.hpp"

#include "multiverse/errors.hpp"

namespace multiverse::mem {

AddressSpace::AddressSpace(PhysicalMemory& memory, FrameOwner table_partition)
    : memory_(&memory),
      root_(memory.allocate_table(table_partition).number),
      partition_(table_partition) {}

AddressSpace AddressSpace::attach(PhysicalMemory& memory, std::uint64_t cr3,
                                  FrameOwner table_partition) {
  if (!memory.is_table(cr3)) {
    throw UsageError("cr3 " + std::to_string(cr3) + " is not a page table");
  }
  return AddressSpace(memory, cr3, table_partition);
}

Translation AddressSpace::translate(const ControlState& ctl,
                                    std::uint64_t addr,
                                    AccessKind access) const {
  return translate(ctl, VirtAddr::from(addr), access);
}

Translation AddressSpace::translate(const ControlState& ctl, VirtAddr addr,
                                    AccessKind access) const {
  if (ctl.cr3 != root_) {
    throw UsageError("control state cr3 does not match address space");
  }
  std::uint64_t table = root_;
  bool writable = true;
  bool user = true;
  const PageTableEntry* e = nullptr;
  for (int level = kLevels; level >= 1; --level) {
    e = &memory_->table(table)[addr.index(level)];
    if (!e->present) {
      return FaultInfo{addr, access, FaultReason::NotPresent};
    }
    writable = writable && e->writable;
    user = user && e->user;
    table = e->target_frame;
  }
  if (ctl.ring == Ring::Ring3 && !user) {
    return FaultInfo{addr, access, FaultReason::Privilege};
  }
  if (access == AccessKind::Write && !writable) {
    // Ring 0 ignores the read-only bit unless CR0.WP is set.
    if (ctl.ring == Ring::Ring3 || ctl.cr0_wp) {
      return FaultInfo{addr, access, FaultReason::WriteProtect};
    }
  }
  return PhysAddr{(e->target_frame << kPageShift) | addr.page_offset()};
}

void AddressSpace::map_page(VirtAddr vaddr, PhysFrame frame, bool writable) {
  if (!vaddr.page_aligned()) {
    throw UsageError("map_page: unaligned address " + to_hex(vaddr.value()));
  }
  if (frame.number >= memory_->frame_count()) {
    throw UsageError("map_page: frame out of range");
  }
  const bool user = vaddr.lower();
  std::uint64_t table = root_;
  for (int level = kLevels; level > 1; --level) {
    PageTableEntry& e = memory_->table(table)[vaddr.index(level)];
    if (!e.present) {
      const PhysFrame t = memory_->allocate_table(partition_);
      e = PageTableEntry{true, true, user, t.number};
      table = t.number;
    } else {
      table = e.target_frame;
    }
  }
  memory_->table(table)[vaddr.index(1)] =
      PageTableEntry{true, writable, user, frame.number};
}

std::optional<std::uint64_t> AddressSpace::unmap_page(VirtAddr vaddr) {
  if (!vaddr.page_aligned()) {
    throw UsageError("unmap_page: unaligned address " + to_hex(vaddr.value()));
  }
  std::uint64_t table = root_;
  for (int level = kLevels; level > 1; --level) {
    const PageTableEntry& e = memory_->table(table)[vaddr.index(level)];
    if (!e.present) return std::nullopt;
    table = e.target_frame;
  }
  PageTableEntry& leaf_entry = memory_->table(table)[vaddr.index(1)];
  if (!leaf_entry.present) return std::nullopt;
  const std::uint64_t frame = leaf_entry.target_frame;
  leaf_entry = PageTableEntry{};
  return frame;
}

std::optional<PageTableEntry> AddressSpace::leaf(VirtAddr vaddr) const {
  std::uint64_t table = root_;
  for (int level = kLevels; level > 1; --level) {
    const PageTableEntry& e = memory_->table(table)[vaddr.index(level)];
    if (!e.present) return std::nullopt;
    table = e.target_frame;
  }
  const PageTableEntry& e = memory_->table(table)[vaddr.index(1)];
  if (!e.present) return std::nullopt;
  return e;
}

namespace {

void walk(const PhysicalMemory& memory, std::uint64_t table, int level,
          std::uint64_t prefix,
          const std::function<void(VirtAddr, const PageTableEntry&)>& fn) {
  const PageTable& t = memory.table(table);
  for (std::size_t i = 0; i < kEntriesPerTable; ++i) {
    const PageTableEntry& e = t[i];
    if (!e.present) continue;
    std::uint64_t va = prefix | (static_cast<std::uint64_t>(i)
                                 << (kPageShift + 9 * (level - 1)));
    if (level == kLevels && i >= kLowerHalfEntries) {
      va |= 0xFFFF'0000'0000'0000ULL;  // sign-extend into the higher half
    }
    if (level == 1) {
      fn(VirtAddr::from(va), e);
    } else {
      walk(memory, e.target_frame, level - 1, va, fn);
    }
  }
}

}  // namespace

void AddressSpace::for_each_mapping(
    const std::function<void(VirtAddr, const PageTableEntry&)>& fn) const {
  walk(*memory_, root_, kLevels, 0, fn);
}

void identity_map_higher_half(AddressSpace& hrt_space,
                              std::uint64_t phys_frame_count) {
  PhysicalMemory& memory = hrt_space.memory();
  for (std::uint64_t f = 0; f < phys_frame_count; ++f) {
    hrt_space.map_page(VirtAddr::from(kHigherHalfBase + (f << kPageShift)),
                       PhysFrame{f, memory.owner_of(f)}, true);
  }
}

void merge_lower_half(AddressSpace& hrt_space, const AddressSpace& ros_space) {
  if (&hrt_space.memory() != &ros_space.memory()) {
    throw UsageError("merge across distinct physical memories");
  }
  const PageTable& src = ros_space.root_table();
  PageTable& dst = hrt_space.root_table();
  for (std::size_t i = 0; i < kLowerHalfEntries; ++i) dst[i] = src[i];
}

bool lower_halves_consistent(const AddressSpace& hrt_space,
                             const AddressSpace& ros_space) {
  const PageTable& a = hrt_space.root_table();
  const PageTable& b = ros_space.root_table();
  for (std::size_t i = 0; i < kLowerHalfEntries; ++i) {
    if (!(a[i] == b[i])) return false;
  }
  return true;
}

}  // namespace multiverse::mem
