#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "multiverse/ros/runtime.hpp"
#include "multiverse/sim/hvm.hpp"
#include "multiverse/sim/simulator.hpp"
#include "multiverse/toolchain/fat_binary.hpp"

namespace mvtest {

using namespace multiverse;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string data_path(const std::string& rel) {
  return std::string(MULTIVERSE_DATA_DIR) + "/" + rel;
}

inline mem::VirtAddr va(std::uint64_t v) { return mem::VirtAddr::from(v); }

// An HVM whose runtime is initialized with a small image: the built-ins plus
// the names given.
struct Booted {
  explicit Booted(std::vector<std::string> extra = {"worker", "child", "grandchild"},
                  std::map<std::string, hrt::FunctionBehavior> behaviors = {},
                  sim::MachineConfig machine = {}, sim::CostModel cost = {},
                  hrt::HrtOptions options = {})
      : hvm(machine, cost, options) {
    std::vector<std::string> names{hrt::kImageEntry};
    for (const auto& [name, b] : hrt::builtin_functions()) names.push_back(name);
    names.insert(names.end(), extra.begin(), extra.end());
    const auto image = hrt::link_image(hrt::kImageEntry, names);
    const auto bytes = toolchain::embed({"test", "unit"}, image);
    ros::init_runtime(hvm.ros, hvm.hrt, bytes, behaviors);
  }

  ThreadId main() const { return hvm.ros.main(); }

  // Spawns a partner and drives it until its HRT twin exists.
  std::pair<ThreadId, ThreadId> group(const std::string& fn = "worker") {
    const ThreadId p = hvm.ros.spawn_hrt(main(), fn);
    hvm.ros.step_partner(p);
    hvm.ros.step_partner(p);
    return {p, *hvm.ros.thread(p).hrt_thread};
  }

  // Lets the partner serve everything queued for it.
  void pump(ThreadId partner) {
    while (hvm.channel.has_injected(partner)) hvm.ros.step_partner(partner);
  }

  std::size_t count(channel::EventKind k) const {
    std::size_t n = 0;
    for (const auto& e : hvm.channel.log().entries()) n += e.kind == k;
    return n;
  }

  std::size_t forwarded(channel::EventKind k) const {
    std::size_t n = 0;
    for (const auto& e : hvm.channel.log().entries()) n += e.kind == k && e.forwarded();
    return n;
  }

  Cycles cycles_of(channel::EventKind k) const {
    Cycles c = 0;
    for (const auto& e : hvm.channel.log().entries()) c += e.kind == k ? e.cost : 0;
    return c;
  }

  sim::Hvm hvm;
};

inline Cycles cost_sum(const std::vector<channel::LogEntry>& log) {
  Cycles s = 0;
  for (const auto& e : log) s += e.cost;
  return s;
}

inline sim::RunResult run_text(const std::string& text, sim::Mode mode,
                               sim::RunOptions options = {}) {
  options.mode = mode;
  return sim::run(sim::parse_workload(text), options);
}

}  // namespace mvtest
