#include "multiverse/toolchain/override.hpp"

#include <algorithm>

#include "multiverse/errors.hpp"

namespace multiverse::toolchain {

namespace {

std::string join(std::span<const std::uint64_t> args) {
  if (args.empty()) return "none";
  std::string out;
  for (std::uint64_t a : args) {
    if (!out.empty()) out += '/';
    out += std::to_string(a);
  }
  return out;
}

}  // namespace

std::vector<std::uint64_t> permute_args(const OverrideEntry& entry,
                                        std::span<const std::uint64_t> args) {
  int width = 0;
  for (const ArgMapping& m : entry.args) width = std::max(width, m.target + 1);
  std::vector<std::uint64_t> out(static_cast<std::size_t>(width), 0);
  for (const ArgMapping& m : entry.args) {
    if (static_cast<std::size_t>(m.source) < args.size()) {
      out[static_cast<std::size_t>(m.target)] = args[static_cast<std::size_t>(m.source)];
    }
  }
  return out;
}

OverrideResult invoke_override(hrt::AeroKernel& hrt, const OverrideMap& map,
                               const std::string& legacy,
                               std::span<const std::uint64_t> args,
                               ThreadId origin) {
  auto& log = hrt.channel().log();
  const OverrideEntry* entry = map.find(legacy);
  if (entry == nullptr || !entry->enabled) {
    log.charge(channel::EventKind::Fallthrough, origin,
               channel::Detail{{"legacy", legacy},
                               {"reason", entry == nullptr ? "unknown" : "disabled"}},
               0);
    return OverrideResult{};
  }

  OverrideResult r;
  r.outcome = OverrideOutcome::Executed;
  r.aero = entry->aero;
  r.args = permute_args(*entry, args);
  hrt.resolve_symbol(entry->aero, origin);
  const hrt::FunctionTable::Entry* fn = hrt.functions().find(entry->aero);
  r.value = fn->behavior.returns;
  r.starts_thread = fn->behavior.starts_thread;
  log.charge(channel::EventKind::OverrideCall, origin,
             channel::Detail{{"legacy", legacy},
                             {"aero", entry->aero},
                             {"args", join(r.args)}},
             fn->behavior.cycles);
  return r;
}

}  // namespace multiverse::toolchain
