#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "multiverse/channel/event_log.hpp"
#include "multiverse/common.hpp"

namespace multiverse::sim {

enum class Mode { Native, Virtual, Multiverse };

const char* to_string(Mode m);
// Throws UsageError for anything but native, virtual or multiverse.
Mode parse_mode(std::string_view s);

struct TraceReport {
  Mode mode = Mode::Native;
  std::uint64_t syscalls = 0;
  std::uint64_t page_faults = 0;
  std::uint64_t thread_creates = 0;
  std::uint64_t exit_signals = 0;
  std::uint64_t sync_invokes = 0;
  std::uint64_t forwarded_syscalls = 0;
  std::uint64_t forwarded_page_faults = 0;
  std::uint64_t forwarded_exit_signals = 0;
  std::uint64_t forwarded_total = 0;
  std::uint64_t local_faults = 0;
  std::uint64_t remerges = 0;
  std::uint64_t symbol_lookups = 0;
  std::uint64_t overrides = 0;
  std::uint64_t fallthroughs = 0;
  Cycles total_cycles = 0;
  Cycles compute_cycles = 0;
  double clock_hz = 2.2e9;
  double wall_seconds = 0.0;
  std::map<std::string, std::uint64_t> by_kind;  // record count per kind
  std::map<std::string, Cycles> cycles_by_kind;

  friend bool operator==(const TraceReport&, const TraceReport&) = default;
};

TraceReport summarize(const std::vector<channel::LogEntry>& log, Mode mode,
                      double clock_hz);

// Aligned two-column table.
std::string format_table(const TraceReport& r);
// `metric=<name> value=<number>` lines.
std::string format_metrics(const TraceReport& r);
std::vector<std::pair<std::string, double>> metrics(const TraceReport& r);

// (address, access letter) of every ROS-visible page fault, in log order.
std::vector<std::pair<std::uint64_t, char>> fault_sequence(
    const std::vector<channel::LogEntry>& log);

}  // namespace multiverse::sim
