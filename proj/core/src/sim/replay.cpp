#include "multiverse/sim/replay.hpp"

#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "multiverse/errors.hpp"

namespace multiverse::sim {

namespace {

constexpr std::string_view kHeader =
    "name,syscalls,user_s,sys_s,max_rss_kb,page_faults,ctx_switches,forwarded";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t count(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError("invalid count `" + s + "`", line);
  }
  return v;
}

double seconds(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError("invalid seconds `" + s + "`", line);
  }
  if (used != s.size() || v < 0) throw ParseError("invalid seconds `" + s + "`", line);
  return v;
}

}  // namespace

std::vector<BenchmarkProfile> load_profiles(std::string_view text) {
  std::vector<BenchmarkProfile> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line = 0;
  bool header = false;
  while (std::getline(in, raw)) {
    ++line;
    const std::string l = trim(raw);
    if (l.empty() || l.starts_with('#')) continue;
    if (!header) {
      if (l != kHeader) throw ParseError("expected header `" + std::string(kHeader) + "`", line);
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(l);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(trim(cell));
    if (f.size() != 8) throw ParseError("expected 8 fields", line);
    BenchmarkProfile p;
    p.name = f[0];
    if (p.name.empty()) throw ParseError("empty benchmark name", line);
    p.syscalls = count(f[1], line);
    p.user_seconds = seconds(f[2], line);
    p.sys_seconds = seconds(f[3], line);
    p.max_rss_kb = count(f[4], line);
    p.page_faults = count(f[5], line);
    p.context_switches = count(f[6], line);
    p.forwarded_events = count(f[7], line);
    out.push_back(std::move(p));
  }
  if (!header) throw ParseError("missing header", line);
  return out;
}

ReplayResult replay_benchmark(const BenchmarkProfile& profile, const CostModel& cost) {
  ReplayResult r;
  r.profile = profile;
  r.overhead_cycles = profile.forwarded_events * cost.forward_overhead;
  r.overhead_seconds = cost.seconds(r.overhead_cycles);
  r.relative = profile.user_seconds > 0 ? r.overhead_seconds / profile.user_seconds : 0.0;
  return r;
}

std::string format_replay(const std::vector<ReplayResult>& results) {
  std::string out = fmt::format("{:<16} {:>10} {:>14} {:>12} {:>10}\n", "benchmark",
                                "forwarded", "overhead_cyc", "overhead_ms", "relative");
  for (const ReplayResult& r : results) {
    out += fmt::format("{:<16} {:>10} {:>14} {:>12.1f} {:>9.3f}%\n", r.profile.name,
                       r.profile.forwarded_events, r.overhead_cycles,
                       r.overhead_seconds * 1e3, r.relative * 100.0);
  }
  return out;
}

std::string format_replay_metrics(const std::vector<ReplayResult>& results) {
  std::string out;
  for (const ReplayResult& r : results) {
    out += fmt::format("metric={}.overhead_cycles value={}\n", r.profile.name,
                       r.overhead_cycles);
    out += fmt::format("metric={}.overhead_seconds value={}\n", r.profile.name,
                       r.overhead_seconds);
    out += fmt::format("metric={}.relative value={}\n", r.profile.name, r.relative);
  }
  return out;
}

}  // namespace multiverse::sim
