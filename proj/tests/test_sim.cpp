#include <gtest/gtest.h>

#include <random>

#include "criteria.hpp"
#include "multiverse/errors.hpp"
#include "multiverse/sim/compare.hpp"
#include "multiverse/sim/replay.hpp"
#include "support.hpp"

using namespace mvtest;
using channel::EventKind;

namespace {

const std::string kFourTouches =
    "thread main ros\n spawn w\n join w\n exit\nend\n"
    "thread w hrt\n mmap 16384{} as b\n touch @b w\n touch @b+4096 w\n"
    " touch @b+8192 w\n touch @b+12288 w\n exit\nend\n";

std::string four_touches(bool populate) {
  std::string s = kFourTouches;
  s.replace(s.find("{}"), 2, populate ? " populate" : "");
  return s;
}

std::size_t forwarded_faults(const sim::RunResult& r) {
  std::size_t n = 0;
  for (const auto& e : r.log) n += e.kind == EventKind::PageFault && e.forwarded();
  return n;
}

Cycles fault_cycles(const sim::RunResult& r) {
  Cycles c = 0;
  for (const auto& e : r.log) c += e.kind == EventKind::PageFault ? e.cost : 0;
  return c;
}

}  // namespace

// ---- cost model -------------------------------------------------------------

TEST(CostModel, EmptyTextGivesDefaults) {
  const auto c = sim::load_cost_model("# nothing\n\n");
  EXPECT_EQ(c.forward_overhead, 1500u);
  EXPECT_EQ(c.merger, 33000u);
  EXPECT_DOUBLE_EQ(c.clock_hz, 2.2e9);
}

TEST(CostModel, OverrideOneKey) {
  const auto c = sim::load_cost_model("forward_overhead = 900\nclock_hz = 3e9\n");
  EXPECT_EQ(c.forward_overhead, 900u);
  EXPECT_DOUBLE_EQ(c.clock_hz, 3e9);
  EXPECT_EQ(c.syscall_base, 1500u);
}

TEST(CostModel, RejectsBadInput) {
  try {
    sim::load_cost_model("merger = 33000\nsyscall_base = -1\n");
    FAIL() << "negative value accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(sim::load_cost_model("warp_speed = 1\n"), ParseError);
  EXPECT_THROW(sim::load_cost_model("merger 5\n"), ParseError);
  EXPECT_THROW(sim::load_cost_model("merger = 5x\n"), ParseError);
}

TEST(CostModel, FormatRoundTrips) {
  sim::CostModel c;
  c.hypercall = 123;
  c.sync_call_same_socket = 500;
  c.clock_hz = 1.5e9;
  const auto back = sim::load_cost_model(sim::format_cost_model(c));
  EXPECT_EQ(back.hypercall, 123u);
  EXPECT_EQ(back.sync_call_same_socket, 500u);
  EXPECT_DOUBLE_EQ(back.clock_hz, 1.5e9);
}

// ---- workload language -------------------------------------------------------

TEST(Workload, MinimalProgram) {
  const auto p = sim::parse_workload("thread main ros\n  exit\nend\n");
  ASSERT_EQ(p.bodies.size(), 1u);
  EXPECT_EQ(p.main().actions.size(), 1u);
  EXPECT_EQ(p.main().actions[0].kind, sim::ActionKind::Exit);
}

TEST(Workload, RepeatIsUnrolled) {
  const auto p = sim::parse_workload(
      "thread main ros\n repeat 3\n  compute 5\n  syscall getpid\n done\n exit\nend\n");
  EXPECT_EQ(p.main().actions.size(), 7u);
}

TEST(Workload, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      sim::parse_workload(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("thread main ros\n spawn ghost\n exit\nend\n"), 2u);
  EXPECT_EQ(line_of("thread main ros\n compute 5\nend\n"), 1u);
  EXPECT_EQ(line_of("thread main ros\n frobnicate\n exit\nend\n"), 2u);
  EXPECT_EQ(line_of("\n\nthread main ros\n touch 0x1000 q\n exit\nend\n"), 4u);
  EXPECT_THROW(sim::parse_workload("thread w hrt\n exit\nend\n"), ParseError);
}

TEST(Workload, ImageSymbolsIncludeHrtThreadsAndFunctions) {
  const auto p = sim::parse_workload(read_file(data_path("workloads/overrides.wl")));
  const auto names = p.image_symbols();
  for (const char* n : {"nk_main", "worker", "child", "helper"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end()) << n;
  }
}

// ---- runs -------------------------------------------------------------------

TEST(Run, LazyTouchesForwardOneFaultEach) {
  const auto virt = run_text(four_touches(false), sim::Mode::Virtual);
  const auto multi = run_text(four_touches(false), sim::Mode::Multiverse);
  ASSERT_TRUE(virt.ok && multi.ok);
  EXPECT_EQ(forwarded_faults(multi), 4u);
  EXPECT_EQ(fault_cycles(multi) - fault_cycles(virt), 4u * 1500u);
}

TEST(Run, PopulatedTouchesForwardNothing) {
  const auto multi = run_text(four_touches(true), sim::Mode::Multiverse);
  ASSERT_TRUE(multi.ok);
  EXPECT_EQ(forwarded_faults(multi), 0u);
  EXPECT_EQ(multi.report.forwarded_page_faults, 0u);
}

TEST(Run, LogIsTheClock) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    const std::string text = random_workload(rng);
    for (auto mode : {sim::Mode::Native, sim::Mode::Virtual, sim::Mode::Multiverse}) {
      const auto r = run_text(text, mode);
      ASSERT_TRUE(r.ok) << r.failure;
      // Re-parse the serialized log and re-derive every total from it.
      std::vector<channel::LogEntry> parsed;
      std::istringstream in(r.log_text());
      std::string line;
      Cycles clock = 0;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        parsed.push_back(channel::parse_log_line(line));
        clock += parsed.back().cost;
        EXPECT_EQ(parsed.back().cycle + parsed.back().cost, clock);
      }
      EXPECT_EQ(parsed, r.log);
      EXPECT_EQ(cost_sum(parsed), r.report.total_cycles);
      EXPECT_EQ(sim::summarize(parsed, mode, 2.2e9), r.report);
    }
  }
}

TEST(Run, ModesAreOrderedWithoutPopulate) {
  std::mt19937_64 rng(4);
  RandomWorkloadShape shape;
  shape.populate = false;
  for (int i = 0; i < 40; ++i) {
    const std::string text = random_workload(rng, shape);
    const auto n = run_text(text, sim::Mode::Native);
    const auto v = run_text(text, sim::Mode::Virtual);
    const auto m = run_text(text, sim::Mode::Multiverse);
    ASSERT_TRUE(n.ok && v.ok && m.ok);
    EXPECT_LE(n.report.total_cycles, v.report.total_cycles);
    EXPECT_LE(v.report.total_cycles, m.report.total_cycles);
  }
}

TEST(Run, RepeatedRunsAreIdentical) {
  const auto text = read_file(data_path("workloads/overrides.wl"));
  const auto a = run_text(text, sim::Mode::Multiverse);
  const auto b = run_text(text, sim::Mode::Multiverse);
  EXPECT_EQ(a.log_text(), b.log_text());
  EXPECT_EQ(a.report, b.report);
}

TEST(Run, SegfaultFailsTheRun) {
  const std::string text =
      "thread main ros\n spawn w\n join w\n exit\nend\n"
      "thread w hrt\n touch 0x5000000 w\n exit\nend\n";
  for (auto mode : {sim::Mode::Native, sim::Mode::Multiverse}) {
    const auto r = run_text(text, mode);
    EXPECT_FALSE(r.ok);
    EXPECT_NE(r.failure.find("segmentation fault"), std::string::npos) << r.failure;
  }
}

TEST(Run, OverridesRunInPlace) {
  const auto r = run_text(read_file(data_path("workloads/overrides.wl")), sim::Mode::Multiverse);
  ASSERT_TRUE(r.ok) << r.failure;
  EXPECT_GE(r.report.overrides, 42u);
  EXPECT_EQ(r.report.sync_invokes, 1u);
  const auto native = run_text(read_file(data_path("workloads/overrides.wl")), sim::Mode::Native);
  ASSERT_TRUE(native.ok);
  EXPECT_EQ(native.report.overrides, 0u);
}

TEST(Run, DisabledCreateOverrideSpawnsNativeThread) {
  const std::string text =
      "thread main ros\n call_override pthread_create 0 0 &w 0\n join w\n exit\nend\n"
      "thread w hrt\n compute 10\n exit\nend\n";
  sim::RunOptions o;
  o.overrides.entries.at("pthread_create").enabled = false;
  const auto r = run_text(text, sim::Mode::Multiverse, o);
  ASSERT_TRUE(r.ok) << r.failure;
  bool native = false;
  for (const auto& e : r.log) {
    native = native || (e.kind == EventKind::ThreadCreate && e.detail.get("kind") == "native");
  }
  EXPECT_TRUE(native);
  EXPECT_EQ(r.report.exit_signals, 0u);
}

TEST(Run, PrefaultedOverridesBeatVirtual) {
  const auto text = read_file(data_path("workloads/prefault_overrides.wl"));
  const auto v = run_text(text, sim::Mode::Virtual);
  const auto m = run_text(text, sim::Mode::Multiverse);
  ASSERT_TRUE(v.ok && m.ok);
  EXPECT_EQ(m.report.forwarded_page_faults, 0u);
  EXPECT_LT(m.report.total_cycles, v.report.total_cycles);
}

// ---- replay and compare -----------------------------------------------------

TEST(Replay, OverheadIsLinearInForwardedEvents) {
  sim::BenchmarkProfile p;
  p.name = "x";
  p.user_seconds = 1.0;
  p.forwarded_events = 1000;
  const auto r = sim::replay_benchmark(p, sim::CostModel{});
  EXPECT_EQ(r.overhead_cycles, 1'500'000u);
  EXPECT_NEAR(r.relative, 1.5e6 / 2.2e9, 1e-12);
  const auto table = sim::format_replay({r});
  EXPECT_NE(table.find("1500000"), std::string::npos);
  EXPECT_NE(sim::format_replay_metrics({r}).find("metric=x.overhead_cycles value=1500000"),
            std::string::npos);
}

TEST(Replay, RejectsMalformedProfiles) {
  EXPECT_THROW(sim::load_profiles("name,syscalls\nfoo,notanumber\n"), ParseError);
}

TEST(Compare, ReportsPerSyscallDeltas) {
  const auto c = sim::compare(
      sim::parse_workload(read_file(data_path("workloads/mmap_munmap.wl"))), {});
  const auto table = sim::format_comparison(c);
  EXPECT_NE(table.find("mmap"), std::string::npos);
  EXPECT_NE(table.find("2.000"), std::string::npos);
  EXPECT_GT(c.total_delta(), 0);
  EXPECT_NE(sim::format_comparison_metrics(c).find("metric=syscall.mmap.delta_per_call value=1500"),
            std::string::npos);
}
