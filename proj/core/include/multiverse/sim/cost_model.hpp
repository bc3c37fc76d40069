#pragma once

#include <string>
#include <string_view>

#include "multiverse/common.hpp"

namespace multiverse::sim {

// Cycle costs of every chargeable interaction. The event-channel figures are
// measured round-trip latencies; syscall_base and pagefault_base are fitted so
// that forwarding roughly doubles the per-call cost.
struct CostModel {
  double clock_hz = 2.2e9;
  Cycles hypercall = 700;
  Cycles forward_overhead = 1500;
  Cycles merger = 33000;
  Cycles async_call = 25000;
  Cycles sync_call_same_socket = 790;
  Cycles sync_call_diff_socket = 1060;
  Cycles syscall_base = 1500;
  Cycles pagefault_base = 1500;
  Cycles symbol_lookup = 400;
  Cycles cache_hit = 40;

  double seconds(Cycles c) const { return static_cast<double>(c) / clock_hz; }

  // Throws UsageError if the latency ordering
  // sync_same <= sync_diff <= async_call <= merger is violated or clock_hz <= 0.
  void validate() const;
};

// Parses `key = value` lines (`#` comments). Missing keys keep defaults;
// unknown keys, malformed numbers and negative values raise ParseError.
CostModel load_cost_model(std::string_view text);

std::string format_cost_model(const CostModel& cost);

}  // namespace multiverse::sim
