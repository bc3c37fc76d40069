#include <benchmark/benchmark.h>

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "multiverse/mem/address_space.hpp"
#include "multiverse/sim/replay.hpp"
#include "multiverse/sim/simulator.hpp"

namespace mv = multiverse;

namespace {

std::string slurp(const std::string& rel) {
  std::ifstream in(std::string(MULTIVERSE_DATA_DIR) + "/" + rel, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void BM_Translate(benchmark::State& state) {
  mv::mem::PhysicalMemory memory(8192, 6144);
  mv::mem::AddressSpace space(memory, mv::mem::FrameOwner::RosVisible);
  std::vector<std::uint64_t> addrs;
  for (std::uint64_t i = 0; i < 1024; ++i) {
    const std::uint64_t a = 0x1000'0000'0000ULL + i * 0x21000;
    space.map_page(mv::mem::VirtAddr::from(a), mv::mem::PhysFrame{i}, true);
    addrs.push_back(a);
  }
  const auto ctl = space.control(mv::mem::Ring::Ring3, true);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(space.translate(ctl, addrs[i++ & 1023], mv::mem::AccessKind::Write));
  }
}
BENCHMARK(BM_Translate);

void BM_Merge(benchmark::State& state) {
  mv::mem::PhysicalMemory memory(8192, 6144);
  mv::mem::AddressSpace ros(memory, mv::mem::FrameOwner::RosVisible);
  mv::mem::AddressSpace hrt(memory, mv::mem::FrameOwner::HrtOnly);
  for (std::uint64_t i = 0; i < 256; ++i) {
    ros.map_page(mv::mem::VirtAddr::from(i << 39), mv::mem::PhysFrame{i}, true);
  }
  for (auto _ : state) mv::mem::merge_lower_half(hrt, ros);
}
BENCHMARK(BM_Merge);

void BM_RunWorkload(benchmark::State& state) {
  const auto program = mv::sim::parse_workload(slurp("workloads/alloc_lazy.wl"));
  mv::sim::RunOptions o;
  o.mode = static_cast<mv::sim::Mode>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mv::sim::run(program, o).report.total_cycles);
}
BENCHMARK(BM_RunWorkload)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

void BM_Replay(benchmark::State& state) {
  const auto text = slurp("racket_profiles.csv");
  const mv::sim::CostModel cost;
  for (auto _ : state) {
    for (const auto& p : mv::sim::load_profiles(text)) {
      benchmark::DoNotOptimize(mv::sim::replay_benchmark(p, cost));
    }
  }
}
BENCHMARK(BM_Replay);

}  // namespace

BENCHMARK_MAIN();
