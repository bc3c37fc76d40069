#include "multiverse/toolchain/override_config.hpp"

#include <regex>
#include <set>
#include <sstream>

#include "multiverse/errors.hpp"

namespace multiverse::toolchain {

namespace {

const std::regex& line_pattern() {
  static const std::regex re(
      R"(^override\s+(\S+)\s*->\s*(\S+?)\s+args\(([^()]*)\)(?:\s+(\S+))?$)");
  return re;
}

bool is_identifier(const std::string& s) {
  static const std::regex re(R"([A-Za-z_][A-Za-z0-9_]*)");
  return std::regex_match(s, re);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<ArgMapping> parse_args(const std::string& body, std::size_t line) {
  std::vector<ArgMapping> out;
  if (trim(body).empty()) return out;
  static const std::regex pair(R"(^\s*(\d+)\s*:\s*(\d+)\s*$)");
  std::set<int> sources;
  std::set<int> targets;
  std::stringstream ss(body);
  std::string item;
  std::size_t commas = 0;
  for (char c : body) commas += c == ',';
  std::size_t items = 0;
  while (std::getline(ss, item, ',')) {
    ++items;
    std::smatch m;
    if (!std::regex_match(item, m, pair)) {
      throw ParseError("malformed argument mapping `" + trim(item) + "`", line);
    }
    if (m[1].length() > 1 || m[2].length() > 1) {
      throw ParseError("argument position out of range 0-5", line);
    }
    const int src = std::stoi(m[1]);
    const int dst = std::stoi(m[2]);
    if (src > kMaxArgPosition || dst > kMaxArgPosition) {
      throw ParseError("argument position out of range 0-5", line);
    }
    if (!sources.insert(src).second) {
      throw ParseError("legacy argument " + std::to_string(src) + " mapped twice", line);
    }
    if (!targets.insert(dst).second) {
      throw ParseError("AeroKernel argument " + std::to_string(dst) + " mapped twice",
                       line);
    }
    out.push_back(ArgMapping{src, dst});
  }
  if (items != commas + 1) throw ParseError("empty argument mapping", line);
  return out;
}

}  // namespace

OverrideMap default_overrides() {
  OverrideMap m;
  auto add = [&](std::string legacy, std::string aero, std::vector<ArgMapping> args) {
    m.entries[legacy] = OverrideEntry{legacy, std::move(aero), std::move(args), true};
  };
  add("pthread_create", "nk_thread_start", {{2, 0}, {3, 1}});
  add("pthread_self", "nk_get_tid", {});
  add("pthread_mutex_lock", "nk_mutex_lock", {{0, 0}});
  add("pthread_mutex_unlock", "nk_mutex_unlock", {{0, 0}});
  return m;
}

OverrideMap parse_override_config(std::string_view text) {
  OverrideMap map = default_overrides();
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw_line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;

    if (auto hash = raw_line.find('#'); hash != std::string_view::npos) {
      raw_line = raw_line.substr(0, hash);
    }
    const std::string line = trim(raw_line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }

    std::smatch m;
    if (!std::regex_match(line, m, line_pattern())) {
      if (line.rfind("override", 0) != 0) {
        throw ParseError("expected `override` directive", line_no);
      }
      if (line.find("->") == std::string::npos) {
        throw ParseError("missing `->` between legacy and AeroKernel names", line_no);
      }
      if (line.find("args(") == std::string::npos) {
        throw ParseError("missing args(...) mapping", line_no);
      }
      throw ParseError("malformed override directive", line_no);
    }
    OverrideEntry e;
    e.legacy = m[1];
    e.aero = m[2];
    if (!is_identifier(e.legacy)) {
      throw ParseError("invalid legacy function name `" + e.legacy + "`", line_no);
    }
    if (!is_identifier(e.aero)) {
      throw ParseError("invalid AeroKernel symbol `" + e.aero + "`", line_no);
    }
    e.args = parse_args(m[3], line_no);
    if (m[4].matched) {
      if (m[4] == "disabled") {
        e.enabled = false;
      } else if (m[4] != "enabled") {
        throw ParseError("unknown attribute `" + std::string(m[4]) + "`", line_no);
      }
    }
    if (!seen.insert(e.legacy).second) {
      map.warnings.push_back("line " + std::to_string(line_no) +
                             ": duplicate override for `" + e.legacy +
                             "`; the later entry wins");
    }
    map.entries[e.legacy] = std::move(e);
    if (end == text.size()) break;
  }
  return map;
}

std::string format_override(const OverrideEntry& e) {
  std::string out = "override " + e.legacy + " -> " + e.aero + " args(";
  for (std::size_t i = 0; i < e.args.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(e.args[i].source) + ":" + std::to_string(e.args[i].target);
  }
  out += ')';
  if (!e.enabled) out += " disabled";
  return out;
}

}  // namespace multiverse::toolchain
