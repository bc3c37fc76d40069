#include "multiverse/sim/machine.hpp"

#include <cmath>
#include <string>

#include "multiverse/errors.hpp"

namespace multiverse::sim {

namespace {

std::uint64_t ros_frames_for(const MachineConfig& c) {
  if (!(c.ros_memory_fraction > 0.0 && c.ros_memory_fraction < 1.0)) {
    throw UsageError("ros_memory_fraction must lie in (0, 1)");
  }
  const auto n = static_cast<std::uint64_t>(
      std::floor(static_cast<double>(c.phys_frames) * c.ros_memory_fraction));
  return n;
}

}  // namespace

Machine::Machine(const MachineConfig& config)
    : config_(config), memory_(config.phys_frames, ros_frames_for(config)) {
  if (config.ros_cores == 0 || config.ros_cores >= config.cores) {
    throw UsageError("need at least one core in each partition");
  }
  if (config.socket_size == 0) throw UsageError("socket_size must be positive");
  cores_.reserve(config.cores);
  for (std::uint32_t i = 0; i < config.cores; ++i) {
    cores_.push_back(Core{CoreId{i}, i < config.ros_cores ? Partition::RosCore
                                                          : Partition::HrtCore});
  }
}

Partition Machine::partition_of(CoreId core) const {
  if (raw(core) >= cores_.size()) {
    throw UsageError("no such core " + to_string(core));
  }
  return cores_[raw(core)].partition;
}

std::uint32_t Machine::socket_of(CoreId core) const {
  partition_of(core);
  return raw(core) / config_.socket_size;
}

std::vector<CoreId> Machine::cores_in(Partition p) const {
  std::vector<CoreId> out;
  for (const Core& c : cores_) {
    if (c.partition == p) out.push_back(c.id);
  }
  return out;
}

}  // namespace multiverse::sim
