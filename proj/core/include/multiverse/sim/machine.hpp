#pragma once

#include <cstdint>
#include <vector>

#include "multiverse/common.hpp"
#include "multiverse/mem/physical_memory.hpp"

namespace multiverse::sim {

enum class Partition { RosCore, HrtCore };

struct MachineConfig {
  std::uint32_t cores = 8;
  std::uint32_t ros_cores = 4;        // cores [0, ros_cores) belong to the ROS
  std::uint64_t phys_frames = 16384;  // 64 MiB
  double ros_memory_fraction = 0.75;  // ROS-visible prefix of physical memory
  std::uint32_t socket_size = 4;
  double clock_hz = 2.2e9;
};

struct Core {
  CoreId id;
  Partition partition;
};

// The partitioned machine: ROS cores first, then HRT cores. Partition tags
// never change after construction.
class Machine {
 public:
  explicit Machine(const MachineConfig& config);

  const MachineConfig& config() const noexcept { return config_; }
  const std::vector<Core>& cores() const noexcept { return cores_; }
  Partition partition_of(CoreId core) const;
  std::uint32_t socket_of(CoreId core) const;
  bool same_socket(CoreId a, CoreId b) const {
    return socket_of(a) == socket_of(b);
  }
  std::vector<CoreId> cores_in(Partition p) const;

  mem::PhysicalMemory& memory() noexcept { return memory_; }
  const mem::PhysicalMemory& memory() const noexcept { return memory_; }
  double clock_hz() const noexcept { return config_.clock_hz; }

 private:
  MachineConfig config_;
  std::vector<Core> cores_;
  mem::PhysicalMemory memory_;
};

}  // namespace multiverse::sim
