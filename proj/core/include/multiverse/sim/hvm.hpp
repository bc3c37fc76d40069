#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "multiverse/channel/channel.hpp"
#include "multiverse/common.hpp"
#include "multiverse/hrt/aerokernel.hpp"
#include "multiverse/ros/process.hpp"
#include "multiverse/sim/cost_model.hpp"
#include "multiverse/sim/machine.hpp"
#include "multiverse/toolchain/symbol_cache.hpp"

namespace multiverse::sim {

// One hybrid virtual machine: the partitioned machine, the VMM's event
// channel, the AeroKernel on the HRT cores and one ROS process.
struct Hvm {
  Hvm(const MachineConfig& machine_config, const CostModel& cost_model,
      hrt::HrtOptions hrt_options = {})
      : cost(cost_model),
        machine(machine_config),
        channel(cost),
        hrt(machine, channel, ids, hrt_options),
        ros(machine, channel, ids) {}

  Hvm(const Hvm&) = delete;
  Hvm& operator=(const Hvm&) = delete;

  CostModel cost;
  Machine machine;
  channel::Channel channel;
  ThreadIdAllocator ids;
  hrt::AeroKernel hrt;
  ros::RosProcess ros;
  toolchain::SymbolCache cache;
};

}  // namespace multiverse::sim
