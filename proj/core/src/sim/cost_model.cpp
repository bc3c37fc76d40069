#include "multiverse/sim/cost_model.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <utility>

#include "multiverse/errors.hpp"

namespace multiverse::sim {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Cycles* field(CostModel& c, std::string_view key) {
  static const std::pair<const char*, Cycles CostModel::*> kFields[] = {
      {"hypercall", &CostModel::hypercall},
      {"forward_overhead", &CostModel::forward_overhead},
      {"merger", &CostModel::merger},
      {"async_call", &CostModel::async_call},
      {"sync_call_same_socket", &CostModel::sync_call_same_socket},
      {"sync_call_diff_socket", &CostModel::sync_call_diff_socket},
      {"syscall_base", &CostModel::syscall_base},
      {"pagefault_base", &CostModel::pagefault_base},
      {"symbol_lookup", &CostModel::symbol_lookup},
      {"cache_hit", &CostModel::cache_hit},
  };
  for (const auto& [name, member] : kFields) {
    if (key == name) return &(c.*member);
  }
  return nullptr;
}

}  // namespace

void CostModel::validate() const {
  if (!(clock_hz > 0.0) || !std::isfinite(clock_hz)) {
    throw UsageError("clock_hz must be positive");
  }
  if (!(sync_call_same_socket <= sync_call_diff_socket &&
        sync_call_diff_socket <= async_call && async_call <= merger)) {
    throw UsageError(
        "latency ordering violated: need sync_call_same_socket <= "
        "sync_call_diff_socket <= async_call <= merger");
  }
}

CostModel load_cost_model(std::string_view text) {
  CostModel cost;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("expected `key = value`", line_no);
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (value.empty()) throw ParseError("missing value for " + std::string(key), line_no);
    if (value.front() == '-') {
      throw ParseError("negative value for " + std::string(key), line_no);
    }

    if (key == "clock_hz") {
      // std::from_chars for double is unavailable on older libstdc++.
      std::string v(value);
      std::size_t used = 0;
      double hz = 0;
      try {
        hz = std::stod(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != v.size() || !(hz > 0.0)) {
        throw ParseError("bad clock_hz `" + v + "`", line_no);
      }
      cost.clock_hz = hz;
      continue;
    }

    Cycles* slot = field(cost, key);
    if (slot == nullptr) {
      throw ParseError("unknown cost key `" + std::string(key) + "`", line_no);
    }
    Cycles parsed = 0;
    const auto [ptr, ec] =
        std::from_chars(value.data(), value.data() + value.size(), parsed);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
      throw ParseError("bad cycle count `" + std::string(value) + "`", line_no);
    }
    *slot = parsed;
  }
  try {
    cost.validate();
  } catch (const UsageError& e) {
    throw ParseError(e.what(), line_no);
  }
  return cost;
}

std::string format_cost_model(const CostModel& c) {
  std::ostringstream out;
  out << "clock_hz = " << c.clock_hz << '\n'
      << "hypercall = " << c.hypercall << '\n'
      << "forward_overhead = " << c.forward_overhead << '\n'
      << "merger = " << c.merger << '\n'
      << "async_call = " << c.async_call << '\n'
      << "sync_call_same_socket = " << c.sync_call_same_socket << '\n'
      << "sync_call_diff_socket = " << c.sync_call_diff_socket << '\n'
      << "syscall_base = " << c.syscall_base << '\n'
      << "pagefault_base = " << c.pagefault_base << '\n'
      << "symbol_lookup = " << c.symbol_lookup << '\n'
      << "cache_hit = " << c.cache_hit << '\n';
  return out.str();
}

}  // namespace multiverse::sim
