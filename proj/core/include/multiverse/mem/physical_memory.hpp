#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "multiverse/mem/address.hpp"

namespace multiverse::mem {

struct PageTableEntry {
  bool present = false;
  bool writable = false;
  bool user = false;
  std::uint64_t target_frame = 0;

  friend constexpr bool operator==(const PageTableEntry&,
                                   const PageTableEntry&) = default;
};

using PageTable = std::array<PageTableEntry, kEntriesPerTable>;

// Machine physical memory, split into a ROS-visible prefix and an HRT-only
// suffix. Page-table pages live here so that two hierarchies can share
// sub-tables by frame number, exactly like hardware.
class PhysicalMemory {
 public:
  PhysicalMemory(std::uint64_t frame_count, std::uint64_t ros_frame_count);

  std::uint64_t frame_count() const noexcept { return frame_count_; }
  std::uint64_t ros_frame_count() const noexcept { return ros_frames_; }
  FrameOwner owner_of(std::uint64_t frame) const;

  // Throws AllocationError when the partition is exhausted.
  PhysFrame allocate(FrameOwner partition);
  void release(std::uint64_t frame);
  std::uint64_t free_frames(FrameOwner partition) const;

  // Allocates a zeroed page-table page in `partition`.
  PhysFrame allocate_table(FrameOwner partition);
  bool is_table(std::uint64_t frame) const noexcept;
  PageTable& table(std::uint64_t frame);
  const PageTable& table(std::uint64_t frame) const;

 private:
  struct Pool {
    std::uint64_t next;
    std::uint64_t end;
    std::vector<std::uint64_t> free_list;
  };
  Pool& pool(FrameOwner owner) {
    return owner == FrameOwner::RosVisible ? ros_pool_ : hrt_pool_;
  }
  const Pool& pool(FrameOwner owner) const {
    return owner == FrameOwner::RosVisible ? ros_pool_ : hrt_pool_;
  }

  std::uint64_t frame_count_;
  std::uint64_t ros_frames_;
  Pool ros_pool_;
  Pool hrt_pool_;
  std::unordered_map<std::uint64_t, PageTable> tables_;
};

}  // namespace multiverse::mem
