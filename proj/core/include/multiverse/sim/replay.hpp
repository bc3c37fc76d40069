#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "multiverse/common.hpp"
#include "multiverse/sim/cost_model.hpp"

namespace multiverse::sim {

// One row of the Racket system-utilization table. Context switches are
// carried for completeness; nothing in the simulator consumes them.
struct BenchmarkProfile {
  std::string name;
  std::uint64_t syscalls = 0;
  double user_seconds = 0.0;
  double sys_seconds = 0.0;
  std::uint64_t max_rss_kb = 0;
  std::uint64_t page_faults = 0;
  std::uint64_t context_switches = 0;
  std::uint64_t forwarded_events = 0;

  friend bool operator==(const BenchmarkProfile&, const BenchmarkProfile&) = default;
};

struct ReplayResult {
  BenchmarkProfile profile;
  Cycles overhead_cycles = 0;
  double overhead_seconds = 0.0;
  double relative = 0.0;  // overhead_seconds / user_seconds
};

// CSV with the header
//   name,syscalls,user_s,sys_s,max_rss_kb,page_faults,ctx_switches,forwarded
// `#` lines and blank lines are skipped. ParseError carries the line number.
std::vector<BenchmarkProfile> load_profiles(std::string_view text);

ReplayResult replay_benchmark(const BenchmarkProfile& profile, const CostModel& cost);

std::string format_replay(const std::vector<ReplayResult>& results);
std::string format_replay_metrics(const std::vector<ReplayResult>& results);

}  // namespace multiverse::sim
