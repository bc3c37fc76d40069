#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multiverse/channel/event_log.hpp"
#include "multiverse/common.hpp"
#include "multiverse/hrt/aerokernel.hpp"
#include "multiverse/sim/cost_model.hpp"
#include "multiverse/sim/machine.hpp"
#include "multiverse/sim/report.hpp"
#include "multiverse/sim/workload.hpp"
#include "multiverse/toolchain/override_config.hpp"

namespace multiverse::sim {

// Picks which ready context steps next. Without a policy the driver runs
// strict rounds: ROS contexts, then HRT contexts, each in creation order.
class SchedulePolicy {
 public:
  virtual ~SchedulePolicy() = default;
  // `ready` lists the thread ids able to make progress, in round order.
  virtual std::size_t pick(std::span<const ThreadId> ready) = 0;
};

struct RunOptions {
  Mode mode = Mode::Native;
  CostModel cost;
  MachineConfig machine;
  toolchain::OverrideMap overrides = toolchain::default_overrides();
  bool symbol_cache = false;
  hrt::HrtOptions hrt;
  SchedulePolicy* policy = nullptr;
  std::size_t max_steps = 50'000'000;
};

struct RunResult {
  Mode mode = Mode::Native;
  bool ok = true;
  std::string failure;  // segfault or lifecycle diagnostic when !ok
  std::vector<channel::LogEntry> log;
  TraceReport report;
  std::string output;   // bytes "written" by the write() model
  std::size_t steps = 0;

  std::string log_text() const;
};

// Runs `program` to completion. Throws DeadlockError (with a dump of every
// context and outstanding event) when nothing can make progress, and
// DoubleFaultError when a fault survives re-merge and re-forward.
RunResult run(const WorkloadProgram& program, const RunOptions& options);

// The fat binary a Multiverse build of `program` would produce.
std::vector<std::uint8_t> build_fat_binary(const WorkloadProgram& program,
                                           const std::string& app_name = "app");

}  // namespace multiverse::sim
