#include "multiverse/sim/compare.hpp"

#include <map>

#include <fmt/format.h>

namespace multiverse::sim {

namespace {

void accumulate(const std::vector<channel::LogEntry>& log, bool multiverse,
                std::map<std::string, SyscallDelta>& by_name, SyscallDelta& all) {
  for (const channel::LogEntry& e : log) {
    if (e.kind != channel::EventKind::Syscall || e.detail.get("src") != "app") continue;
    const std::string name(e.detail.get("nr").value_or("?"));
    SyscallDelta& d = by_name[name];
    d.name = name;
    for (SyscallDelta* t : {&d, &all}) {
      if (multiverse) {
        t->calls_multiverse++;
        t->cycles_multiverse += e.cost;
      } else {
        t->calls_virtual++;
        t->cycles_virtual += e.cost;
      }
    }
  }
}

}  // namespace

double SyscallDelta::per_call_virtual() const {
  return calls_virtual ? static_cast<double>(cycles_virtual) / calls_virtual : 0.0;
}

double SyscallDelta::per_call_multiverse() const {
  return calls_multiverse ? static_cast<double>(cycles_multiverse) / calls_multiverse
                          : 0.0;
}

double SyscallDelta::ratio() const {
  const double v = per_call_virtual();
  return v > 0 ? per_call_multiverse() / v : 0.0;
}

Comparison compare(const WorkloadProgram& program, RunOptions options) {
  Comparison c;
  options.mode = Mode::Virtual;
  c.virt = run(program, options);
  options.mode = Mode::Multiverse;
  c.multiverse = run(program, options);

  std::map<std::string, SyscallDelta> by_name;
  c.all.name = "all";
  accumulate(c.virt.log, false, by_name, c.all);
  accumulate(c.multiverse.log, true, by_name, c.all);
  for (auto& [name, d] : by_name) c.syscalls.push_back(d);
  return c;
}

std::string format_comparison(const Comparison& c) {
  std::string out = fmt::format("{:<18} {:>8} {:>12} {:>12} {:>10} {:>7}\n", "syscall",
                                "calls", "virtual/call", "mverse/call", "delta", "ratio");
  auto row = [&](const SyscallDelta& d) {
    out += fmt::format("{:<18} {:>8} {:>12.1f} {:>12.1f} {:>10.1f} {:>7.3f}\n", d.name,
                       d.calls_multiverse, d.per_call_virtual(), d.per_call_multiverse(),
                       d.delta(), d.ratio());
  };
  for (const SyscallDelta& d : c.syscalls) row(d);
  row(c.all);
  out += fmt::format("{:<18} {:>12} {:>12} {:>12}\n", "total_cycles",
                     c.virt.report.total_cycles, c.multiverse.report.total_cycles,
                     c.total_delta());
  return out;
}

std::string format_comparison_metrics(const Comparison& c) {
  std::string out;
  for (const SyscallDelta& d : c.syscalls) {
    out += fmt::format("metric=syscall.{}.delta_per_call value={}\n", d.name, d.delta());
    out += fmt::format("metric=syscall.{}.ratio value={}\n", d.name, d.ratio());
  }
  out += fmt::format("metric=syscall.all.delta_per_call value={}\n", c.all.delta());
  out += fmt::format("metric=syscall.all.ratio value={}\n", c.all.ratio());
  out += fmt::format("metric=virtual.total_cycles value={}\n", c.virt.report.total_cycles);
  out += fmt::format("metric=multiverse.total_cycles value={}\n",
                     c.multiverse.report.total_cycles);
  out += fmt::format("metric=total_delta value={}\n", c.total_delta());
  return out;
}

}  // namespace multiverse::sim
