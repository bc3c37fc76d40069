#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace multiverse::toolchain {

inline constexpr int kMaxArgPosition = 5;

struct ArgMapping {
  int source = 0;  // legacy argument position
  int target = 0;  // AeroKernel argument position

  friend bool operator==(const ArgMapping&, const ArgMapping&) = default;
};

struct OverrideEntry {
  std::string legacy;
  std::string aero;
  std::vector<ArgMapping> args;
  bool enabled = true;

  friend bool operator==(const OverrideEntry&, const OverrideEntry&) = default;
};

struct OverrideMap {
  std::map<std::string, OverrideEntry> entries;
  std::vector<std::string> warnings;

  const OverrideEntry* find(const std::string& legacy) const {
    auto it = entries.find(legacy);
    return it == entries.end() ? nullptr : &it->second;
  }
};

// The pthread interpositions every Multiverse program gets.
OverrideMap default_overrides();

// Grammar, one directive per line:
//   override <legacy> -> <aero> args(<i:j>,...) [disabled|enabled]
// `#` starts a comment; blank lines are ignored. Entries are layered over the
// defaults. A legacy name repeated in the file keeps the last entry and adds a
// warning. Malformed lines raise ParseError with their 1-based line number.
OverrideMap parse_override_config(std::string_view text);

std::string format_override(const OverrideEntry& e);

}  // namespace multiverse::toolchain
