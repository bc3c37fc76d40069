#include "multiverse/channel/event_log.hpp"

#include <array>
#include <charconv>
#include <ostream>
#include <sstream>

#include "multiverse/errors.hpp"

namespace multiverse::channel {

namespace {

constexpr std::array<std::pair<EventKind, const char*>, 24> kKindNames{{
    {EventKind::Syscall, "Syscall"},
    {EventKind::PageFault, "PageFault"},
    {EventKind::ThreadCreate, "ThreadCreate"},
    {EventKind::ThreadExitSignal, "ThreadExitSignal"},
    {EventKind::MergeRequest, "MergeRequest"},
    {EventKind::Reboot, "Reboot"},
    {EventKind::SyncInvoke, "SyncInvoke"},
    {EventKind::AsyncCall, "AsyncCall"},
    {EventKind::SyncSetup, "SyncSetup"},
    {EventKind::Install, "Install"},
    {EventKind::Boot, "Boot"},
    {EventKind::Init, "Init"},
    {EventKind::Compute, "Compute"},
    {EventKind::LocalFault, "LocalFault"},
    {EventKind::Remerge, "Remerge"},
    {EventKind::SymbolLookup, "SymbolLookup"},
    {EventKind::OverrideCall, "OverrideCall"},
    {EventKind::Fallthrough, "Fallthrough"},
    {EventKind::FunctionExec, "FunctionExec"},
    {EventKind::ThreadExit, "ThreadExit"},
    {EventKind::PartnerExit, "PartnerExit"},
    {EventKind::Join, "Join"},
    {EventKind::ProcessExit, "ProcessExit"},
    {EventKind::Shutdown, "Shutdown"},
}};

std::uint64_t parse_u64(std::string_view s, const char* what) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError(std::string("bad ") + what + " `" + std::string(s) + "`",
                     0);
  }
  return v;
}

std::string_view field(std::string_view& rest, std::string_view key) {
  const auto sp = rest.find(' ');
  std::string_view tok = rest.substr(0, sp);
  rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
  if (tok.size() <= key.size() || tok.substr(0, key.size()) != key ||
      tok[key.size()] != '=') {
    throw ParseError("expected field `" + std::string(key) + "=`", 0);
  }
  return tok.substr(key.size() + 1);
}

}  // namespace

const char* to_string(EventKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (s == name) return kind;
  }
  return std::nullopt;
}

Detail& Detail::add(std::string key, std::string value) {
  kv_.emplace_back(std::move(key), std::move(value));
  return *this;
}

Detail& Detail::add(std::string key, std::uint64_t value) {
  return add(std::move(key), std::to_string(value));
}

Detail& Detail::append(const Detail& other) {
  kv_.insert(kv_.end(), other.kv_.begin(), other.kv_.end());
  return *this;
}

std::optional<std::string_view> Detail::get(std::string_view key) const {
  for (const auto& [k, v] : kv_) {
    if (k == key) return std::string_view(v);
  }
  return std::nullopt;
}

std::uint64_t Detail::get_u64(std::string_view key,
                              std::uint64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (v->starts_with("0x")) {
    std::uint64_t out = 0;
    std::from_chars(v->data() + 2, v->data() + v->size(), out, 16);
    return out;
  }
  return parse_u64(*v, "detail value");
}

std::string Detail::format() const {
  if (kv_.empty()) return "-";
  std::string out;
  for (const auto& [k, v] : kv_) {
    if (!out.empty()) out += ',';
    out += k;
    out += ':';
    out += v;
  }
  return out;
}

Detail Detail::parse(std::string_view text) {
  Detail d;
  if (text == "-") return d;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{}
                                           : text.substr(comma + 1);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError("detail item without ':'", 0);
    }
    d.add(std::string(item.substr(0, colon)),
          std::string(item.substr(colon + 1)));
  }
  return d;
}

std::string format_log_line(const LogEntry& e) {
  std::string out = "cycle=" + std::to_string(e.cycle);
  out += " kind=";
  out += to_string(e.kind);
  out += " origin=" + to_string(e.origin);
  out += " detail=" + e.detail.format();
  out += " cost=" + std::to_string(e.cost);
  return out;
}

LogEntry parse_log_line(std::string_view line) {
  LogEntry e;
  std::string_view rest = line;
  e.cycle = parse_u64(field(rest, "cycle"), "cycle");
  const auto kind = parse_event_kind(field(rest, "kind"));
  if (!kind) throw ParseError("unknown event kind", 0);
  e.kind = *kind;
  e.origin = ThreadId{static_cast<std::uint32_t>(
      parse_u64(field(rest, "origin"), "origin"))};
  e.detail = Detail::parse(field(rest, "detail"));
  e.cost = parse_u64(field(rest, "cost"), "cost");
  if (!rest.empty()) throw ParseError("trailing text in log line", 0);
  return e;
}

const LogEntry& EventLog::charge(EventKind kind, ThreadId origin,
                                 Detail detail, Cycles cost) {
  entries_.push_back(LogEntry{clock_, kind, origin, std::move(detail), cost});
  clock_ += cost;
  return entries_.back();
}

void EventLog::write(std::ostream& out) const {
  for (const LogEntry& e : entries_) out << format_log_line(e) << '\n';
}

std::string EventLog::text() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

}  // namespace multiverse::channel
