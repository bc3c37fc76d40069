#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "multiverse/common.hpp"

namespace multiverse::channel {

// Everything that can appear in the event log. The first seven are the
// channel-level event kinds; the rest are accounting and lifecycle records.
enum class EventKind {
  Syscall,
  PageFault,
  ThreadCreate,
  ThreadExitSignal,
  MergeRequest,
  Reboot,
  SyncInvoke,
  AsyncCall,
  SyncSetup,
  Install,
  Boot,
  Init,
  Compute,
  LocalFault,
  Remerge,
  SymbolLookup,
  OverrideCall,
  Fallthrough,
  FunctionExec,
  ThreadExit,
  PartnerExit,
  Join,
  ProcessExit,
  Shutdown,
};

const char* to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

// Ordered key:value pairs rendered as `k:v,k:v`. Keys and values never
// contain spaces, commas or colons.
class Detail {
 public:
  Detail() = default;
  Detail(std::initializer_list<std::pair<std::string, std::string>> kv)
      : kv_(kv) {}

  Detail& add(std::string key, std::string value);
  Detail& add(std::string key, std::uint64_t value);
  Detail& append(const Detail& other);
  std::optional<std::string_view> get(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback = 0) const;
  bool empty() const noexcept { return kv_.empty(); }
  const auto& items() const noexcept { return kv_; }

  std::string format() const;
  static Detail parse(std::string_view text);

  friend bool operator==(const Detail&, const Detail&) = default;

 private:
  std::vector<std::pair<std::string, std::string>> kv_;
};

struct LogEntry {
  Cycles cycle = 0;
  EventKind kind = EventKind::Compute;
  ThreadId origin = kNoThread;
  Detail detail;
  Cycles cost = 0;

  bool forwarded() const { return detail.get("fwd") == "1"; }
  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

// `cycle=<n> kind=<k> origin=<tid> detail=<...> cost=<n>`
std::string format_log_line(const LogEntry& e);
// Throws ParseError (line 0) on malformed input.
LogEntry parse_log_line(std::string_view line);

// Append-only log that doubles as the global cycle clock: every charged cycle
// is attributed to exactly one entry, so the clock equals the sum of costs.
class EventLog {
 public:
  Cycles now() const noexcept { return clock_; }
  const LogEntry& charge(EventKind kind, ThreadId origin, Detail detail,
                         Cycles cost);
  const std::vector<LogEntry>& entries() const noexcept { return entries_; }

  void write(std::ostream& out) const;
  std::string text() const;

 private:
  Cycles clock_ = 0;
  std::vector<LogEntry> entries_;
};

}  // namespace multiverse::channel
