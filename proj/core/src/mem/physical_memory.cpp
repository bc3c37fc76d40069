#include "multiverse/mem/physical_memory.hpp"

#include <algorithm>
#include <string>

#include "multiverse/errors.hpp"

namespace multiverse::mem {

PhysicalMemory::PhysicalMemory(std::uint64_t frame_count,
                               std::uint64_t ros_frame_count)
    : frame_count_(frame_count),
      ros_frames_(ros_frame_count),
      ros_pool_{0, ros_frame_count, {}},
      hrt_pool_{ros_frame_count, frame_count, {}} {
  if (ros_frame_count == 0 || ros_frame_count >= frame_count) {
    throw UsageError("both memory partitions need at least one frame");
  }
}

FrameOwner PhysicalMemory::owner_of(std::uint64_t frame) const {
  if (frame >= frame_count_) {
    throw UsageError("frame " + std::to_string(frame) + " out of range");
  }
  return frame < ros_frames_ ? FrameOwner::RosVisible : FrameOwner::HrtOnly;
}

PhysFrame PhysicalMemory::allocate(FrameOwner partition) {
  Pool& p = pool(partition);
  std::uint64_t frame;
  if (!p.free_list.empty()) {
    frame = p.free_list.back();
    p.free_list.pop_back();
  } else if (p.next < p.end) {
    frame = p.next++;
  } else {
    throw AllocationError(partition == FrameOwner::RosVisible
                              ? "out of ROS-visible frames"
                              : "out of HRT-only frames");
  }
  return PhysFrame{frame, partition};
}

void PhysicalMemory::release(std::uint64_t frame) {
  const FrameOwner owner = owner_of(frame);
  tables_.erase(frame);
  pool(owner).free_list.push_back(frame);
}

std::uint64_t PhysicalMemory::free_frames(FrameOwner partition) const {
  const Pool& p = pool(partition);
  return (p.end - p.next) + p.free_list.size();
}

PhysFrame PhysicalMemory::allocate_table(FrameOwner partition) {
  PhysFrame f = allocate(partition);
  tables_[f.number] = PageTable{};
  return f;
}

bool PhysicalMemory::is_table(std::uint64_t frame) const noexcept {
  return tables_.contains(frame);
}

PageTable& PhysicalMemory::table(std::uint64_t frame) {
  auto it = tables_.find(frame);
  if (it == tables_.end()) {
    throw UsageError("frame " + std::to_string(frame) + " is not a page table");
  }
  return it->second;
}

const PageTable& PhysicalMemory::table(std::uint64_t frame) const {
  auto it = tables_.find(frame);
  if (it == tables_.end()) {
    throw UsageError("frame " + std::to_string(frame) + " is not a page table");
  }
  return it->second;
}

}  // namespace multiverse::mem
