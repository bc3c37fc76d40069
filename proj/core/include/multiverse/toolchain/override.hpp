#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "multiverse/common.hpp"
#include "multiverse/hrt/aerokernel.hpp"
#include "multiverse/toolchain/override_config.hpp"

namespace multiverse::toolchain {

enum class OverrideOutcome { Executed, FellThrough };

struct OverrideResult {
  OverrideOutcome outcome = OverrideOutcome::FellThrough;
  std::string aero;                 // empty on fall-through
  std::vector<std::uint64_t> args;  // permuted for the AeroKernel variant
  std::uint64_t value = 0;
  bool starts_thread = false;       // caller creates the thread named by args[0]
};

// Rearranges `args` per the entry's mapping; unmapped target slots are zero.
std::vector<std::uint64_t> permute_args(const OverrideEntry& entry,
                                        std::span<const std::uint64_t> args);

// The generated wrapper: looks up the AeroKernel variant (cache-aware) and
// runs it in place, with no event-channel traffic. Disabled or unknown names
// are logged as a fall-through and left to the caller's legacy path.
OverrideResult invoke_override(hrt::AeroKernel& hrt, const OverrideMap& map,
                               const std::string& legacy,
                               std::span<const std::uint64_t> args,
                               ThreadId origin);

}  // namespace multiverse::toolchain
