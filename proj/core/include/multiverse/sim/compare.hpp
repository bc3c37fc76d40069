#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "multiverse/common.hpp"
#include "multiverse/sim/simulator.hpp"

namespace multiverse::sim {

// Per-call cost of one application syscall name in two runs.
struct SyscallDelta {
  std::string name;
  std::uint64_t calls_virtual = 0;
  std::uint64_t calls_multiverse = 0;
  Cycles cycles_virtual = 0;
  Cycles cycles_multiverse = 0;

  double per_call_virtual() const;
  double per_call_multiverse() const;
  double delta() const { return per_call_multiverse() - per_call_virtual(); }
  double ratio() const;
};

struct Comparison {
  RunResult virt;
  RunResult multiverse;
  std::vector<SyscallDelta> syscalls;  // application syscalls, by name
  SyscallDelta all;                    // every application syscall together

  std::int64_t total_delta() const {
    return static_cast<std::int64_t>(multiverse.report.total_cycles) -
           static_cast<std::int64_t>(virt.report.total_cycles);
  }
};

// Runs `program` in Virtual and Multiverse mode with the same options and
// breaks application syscalls down by name.
Comparison compare(const WorkloadProgram& program, RunOptions options);

std::string format_comparison(const Comparison& c);
std::string format_comparison_metrics(const Comparison& c);

}  // namespace multiverse::sim
