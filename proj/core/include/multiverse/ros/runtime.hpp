#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "multiverse/hrt/aerokernel.hpp"
#include "multiverse/ros/process.hpp"
#include "multiverse/toolchain/fat_binary.hpp"

namespace multiverse::ros {

// The Multiverse runtime's pre-main hooks, in order: register signal handlers,
// hook process exit for HRT shutdown, link AeroKernel functions, install the
// embedded image, boot the HRT cores, merge the address spaces. Any failing
// step aborts with that step's error; a corrupt container is an InstallError.
toolchain::FatBinary init_runtime(
    RosProcess& process, hrt::AeroKernel& hrt,
    std::span<const std::uint8_t> fat_binary,
    const std::map<std::string, hrt::FunctionBehavior>& behaviors = {});

}  // namespace multiverse::ros
