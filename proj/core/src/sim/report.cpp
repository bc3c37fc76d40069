#include "multiverse/sim/report.hpp"

#include <fmt/format.h>

#include "multiverse/errors.hpp"

namespace multiverse::sim {

using channel::EventKind;

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Native:
      return "native";
    case Mode::Virtual:
      return "virtual";
    case Mode::Multiverse:
      return "multiverse";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "native") return Mode::Native;
  if (s == "virtual") return Mode::Virtual;
  if (s == "multiverse") return Mode::Multiverse;
  throw UsageError("unknown mode `" + std::string(s) + "`");
}

TraceReport summarize(const std::vector<channel::LogEntry>& log, Mode mode,
                      double clock_hz) {
  TraceReport r;
  r.mode = mode;
  r.clock_hz = clock_hz;
  for (const channel::LogEntry& e : log) {
    const bool fwd = e.forwarded();
    r.by_kind[channel::to_string(e.kind)]++;
    r.cycles_by_kind[channel::to_string(e.kind)] += e.cost;
    r.total_cycles += e.cost;
    switch (e.kind) {
      case EventKind::Syscall:
        r.syscalls++;
        r.forwarded_syscalls += fwd;
        break;
      case EventKind::PageFault:
        r.page_faults++;
        r.forwarded_page_faults += fwd;
        break;
      case EventKind::ThreadCreate:
        r.thread_creates++;
        break;
      case EventKind::ThreadExitSignal:
        r.exit_signals++;
        r.forwarded_exit_signals += fwd;
        break;
      case EventKind::SyncInvoke:
        r.sync_invokes++;
        break;
      case EventKind::LocalFault:
        r.local_faults++;
        break;
      case EventKind::Remerge:
        r.remerges++;
        break;
      case EventKind::SymbolLookup:
        r.symbol_lookups++;
        break;
      case EventKind::OverrideCall:
        r.overrides++;
        break;
      case EventKind::Fallthrough:
        r.fallthroughs++;
        break;
      case EventKind::Compute:
        r.compute_cycles += e.cost;
        break;
      default:
        break;
    }
  }
  r.forwarded_total =
      r.forwarded_syscalls + r.forwarded_page_faults + r.forwarded_exit_signals;
  r.wall_seconds = static_cast<double>(r.total_cycles) / clock_hz;
  return r;
}

std::vector<std::pair<std::string, double>> metrics(const TraceReport& r) {
  auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  return {
      {"syscalls", d(r.syscalls)},
      {"page_faults", d(r.page_faults)},
      {"thread_creates", d(r.thread_creates)},
      {"exit_signals", d(r.exit_signals)},
      {"sync_invokes", d(r.sync_invokes)},
      {"forwarded_syscalls", d(r.forwarded_syscalls)},
      {"forwarded_page_faults", d(r.forwarded_page_faults)},
      {"forwarded_exit_signals", d(r.forwarded_exit_signals)},
      {"forwarded_total", d(r.forwarded_total)},
      {"local_faults", d(r.local_faults)},
      {"remerges", d(r.remerges)},
      {"symbol_lookups", d(r.symbol_lookups)},
      {"overrides", d(r.overrides)},
      {"fallthroughs", d(r.fallthroughs)},
      {"compute_cycles", d(r.compute_cycles)},
      {"total_cycles", d(r.total_cycles)},
      {"wall_seconds", r.wall_seconds},
  };
}

std::string format_table(const TraceReport& r) {
  std::string out = fmt::format("{:<24} {:>18}\n", "mode", to_string(r.mode));
  for (const auto& [name, value] : metrics(r)) {
    if (name == "wall_seconds") {
      out += fmt::format("{:<24} {:>18.9f}\n", name, value);
    } else {
      out += fmt::format("{:<24} {:>18.0f}\n", name, value);
    }
  }
  return out;
}

std::string format_metrics(const TraceReport& r) {
  std::string out;
  for (const auto& [name, value] : metrics(r)) {
    out += fmt::format("metric={} value={}\n", name, value);
  }
  return out;
}

std::vector<std::pair<std::uint64_t, char>> fault_sequence(
    const std::vector<channel::LogEntry>& log) {
  std::vector<std::pair<std::uint64_t, char>> out;
  for (const channel::LogEntry& e : log) {
    if (e.kind != EventKind::PageFault) continue;
    const auto access = e.detail.get("access");
    out.emplace_back(e.detail.get_u64("addr"), access ? (*access)[0] : '?');
  }
  return out;
}

}  // namespace multiverse::sim
