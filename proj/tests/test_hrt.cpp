#include <gtest/gtest.h>

#include "multiverse/errors.hpp"
#include "support.hpp"

using namespace multiverse;
using namespace mvtest;
using channel::EventKind;
using hrt::CoreStatus;

namespace {

struct Fresh {
  Fresh() : hvm(sim::MachineConfig{}, sim::CostModel{}) {
    std::vector<std::string> names{hrt::kImageEntry, "worker"};
    image = hrt::link_image(hrt::kImageEntry, names);
  }
  sim::Hvm hvm;
  hrt::AeroKernelImage image;
};

}  // namespace

TEST(Lifecycle, InstallBootAndResolve) {
  Fresh f;
  f.hvm.hrt.install_image(f.image);
  f.hvm.hrt.set_functions(hrt::link_functions(f.image, {}));
  EXPECT_THROW(f.hvm.hrt.install_image(f.image), InstallError);
  const CoreId four{4};
  f.hvm.hrt.boot(std::span(&four, 1));
  EXPECT_EQ(f.hvm.hrt.core(four).status, CoreStatus::IdleEventLoop);
  EXPECT_EQ(f.hvm.hrt.core(CoreId{5}).status, CoreStatus::Offline);
  EXPECT_FALSE(f.hvm.hrt.resolve_symbol(hrt::kImageEntry, kNoThread).lower());
  EXPECT_THROW(f.hvm.hrt.resolve_symbol("nope", kNoThread), SymbolError);
}

TEST(Lifecycle, BootOnRosCoreIsPartitionError) {
  Fresh f;
  f.hvm.hrt.install_image(f.image);
  const CoreId one{1};
  EXPECT_THROW(f.hvm.hrt.boot(std::span(&one, 1)), PartitionError);
  EXPECT_FALSE(f.hvm.hrt.booted());
}

TEST(Lifecycle, BootWithoutImageFails) {
  Fresh f;
  EXPECT_THROW(f.hvm.hrt.boot_all(), BootError);
}

TEST(Lifecycle, OversizedImageIsInstallError) {
  Fresh f;
  f.image.payload_size = f.hvm.machine.memory().frame_count() * mem::kPageSize;
  EXPECT_THROW(f.hvm.hrt.install_image(f.image), InstallError);
  EXPECT_FALSE(f.hvm.hrt.installed());
}

TEST(Lifecycle, LowerHalfSymbolIsInstallError) {
  Fresh f;
  f.image.symbols["bad"] = va(0x1000);
  EXPECT_THROW(f.hvm.hrt.install_image(f.image), InstallError);
}

TEST(Lifecycle, LowerHalfUnmappedBeforeMerge) {
  Fresh f;
  f.hvm.hrt.install_image(f.image);
  f.hvm.hrt.boot_all();
  for (std::size_t i = 0; i < mem::kLowerHalfEntries; ++i) {
    EXPECT_FALSE(f.hvm.hrt.space().root_table()[i].present);
  }
  const auto t = f.hvm.hrt.space().translate(f.hvm.hrt.control(),
                                             mem::kHigherHalfBase + 0x1000,
                                             mem::AccessKind::Read);
  EXPECT_EQ(std::get<mem::PhysAddr>(t).value, 0x1000u);
}

TEST(Lifecycle, CreateBeforeMergeIsProtocolError) {
  Fresh f;
  f.hvm.hrt.install_image(f.image);
  f.hvm.hrt.set_functions(hrt::link_functions(f.image, {}));
  f.hvm.hrt.boot_all();
  EXPECT_THROW(f.hvm.hrt.create_top_level_thread("worker", va(0x1000), {}, ThreadId{9}),
               ProtocolError);
}

TEST(Lifecycle, RebootClearsThreadsAndMerge) {
  Booted b;
  auto [partner, tid] = b.group();
  EXPECT_TRUE(b.hvm.hrt.has_thread(tid));
  EXPECT_TRUE(b.hvm.hrt.merged());
  b.hvm.channel.hypercall(b.main(), channel::Side::Ros, channel::Hypercall::reboot());
  EXPECT_FALSE(b.hvm.hrt.has_thread(tid));
  EXPECT_FALSE(b.hvm.hrt.merged());
  for (const auto& c : b.hvm.hrt.cores()) EXPECT_EQ(c.status, CoreStatus::IdleEventLoop);
}

TEST(Runtime, InitLeavesCoresIdleAndHalvesConsistent) {
  Booted b;
  for (const auto& c : b.hvm.hrt.cores()) EXPECT_EQ(c.status, CoreStatus::IdleEventLoop);
  EXPECT_TRUE(mem::lower_halves_consistent(b.hvm.hrt.space(), b.hvm.ros.space()));
  std::vector<EventKind> kinds;
  for (const auto& e : b.hvm.channel.log().entries()) kinds.push_back(e.kind);
  EXPECT_EQ(kinds, (std::vector<EventKind>{EventKind::Init, EventKind::Init, EventKind::Init,
                                           EventKind::Install, EventKind::Boot,
                                           EventKind::MergeRequest}));
}

TEST(Runtime, CorruptImageIsInstallError) {
  sim::Hvm hvm(sim::MachineConfig{}, sim::CostModel{});
  const std::vector<std::string> names{hrt::kImageEntry};
  auto bytes = toolchain::embed({"t", "u"}, hrt::link_image(hrt::kImageEntry, names));
  bytes[0] ^= 0xFF;
  EXPECT_THROW(ros::init_runtime(hvm.ros, hvm.hrt, bytes), InstallError);
  EXPECT_FALSE(hvm.hrt.installed());
}

TEST(Runtime, ProcessExitShutsTheHrtDown) {
  Booted b;
  b.hvm.ros.process_exit(b.main());
  for (const auto& c : b.hvm.hrt.cores()) EXPECT_EQ(c.status, CoreStatus::Offline);
  EXPECT_FALSE(b.hvm.hrt.installed());
  EXPECT_EQ(b.hvm.channel.log().entries().back().kind, EventKind::Shutdown);
  EXPECT_THROW(b.hvm.ros.process_exit(b.main()), LifecycleError);
}

TEST(Threads, SpawnRegistersPartner) {
  Booted b;
  auto [partner, tid] = b.group();
  EXPECT_EQ(b.hvm.ros.partner_map().at(tid), partner);
  EXPECT_EQ(b.hvm.hrt.endpoint_for(tid), partner);
  EXPECT_EQ(b.count(EventKind::AsyncCall), 1u);
  EXPECT_EQ(b.count(EventKind::ThreadCreate), 1u);
  const auto& t = b.hvm.hrt.thread(tid);
  EXPECT_EQ(t.stack_base.value(), b.hvm.ros.thread(partner).stack_region->base);
  EXPECT_EQ(t.superposition.tls_base, t.stack_base);
  EXPECT_EQ(t.superposition.gdt_snapshot.size(), 2u);
  auto [p2, t2] = b.group();
  EXPECT_NE(p2, partner);
  EXPECT_EQ(b.hvm.ros.partner_map().size(), 2u);
}

TEST(Threads, UnknownSpawnTargetFailsBeforeAnyRequest) {
  Booted b;
  const auto before = b.hvm.channel.log().entries().size();
  EXPECT_THROW(b.hvm.ros.spawn_hrt(b.main(), "missing"), SymbolError);
  EXPECT_EQ(b.hvm.channel.log().entries().size(), before);
}

TEST(Threads, FirstStackTouchIsForwardedFault) {
  Booted b;
  auto [partner, tid] = b.group();
  const auto stack = b.hvm.hrt.thread(tid).stack_base;
  EXPECT_EQ(b.hvm.hrt.access(tid, stack, mem::AccessKind::Write), hrt::AccessOutcome::Blocked);
  b.pump(partner);
  EXPECT_EQ(b.hvm.hrt.thread(tid).status, hrt::HrtThreadStatus::Runnable);
  EXPECT_EQ(b.hvm.hrt.access(tid, stack, mem::AccessKind::Write), hrt::AccessOutcome::Done);
  EXPECT_EQ(b.forwarded(EventKind::PageFault), 1u);
  // Visible on both sides through the shared sub-tables.
  const auto r = b.hvm.ros.space().translate(b.hvm.ros.control(), stack, mem::AccessKind::Write);
  const auto h = b.hvm.hrt.space().translate(b.hvm.hrt.control(), stack, mem::AccessKind::Write);
  EXPECT_EQ(std::get<mem::PhysAddr>(r), std::get<mem::PhysAddr>(h));
}

TEST(Threads, NestedRoutesToTopLevelPartner) {
  Booted b;
  auto [partner, tid] = b.group();
  const auto hi = va(mem::kHigherHalfBase + 0x10000);
  const ThreadId n1 = b.hvm.hrt.create_nested_thread(tid, "child", hi);
  const ThreadId n2 = b.hvm.hrt.create_nested_thread(n1, "grandchild", hi);
  const ThreadId n3 = b.hvm.hrt.create_nested_thread(n2, "worker", hi);
  for (ThreadId n : {n1, n2, n3}) EXPECT_EQ(b.hvm.hrt.endpoint_for(n), partner);
  b.hvm.hrt.handle_syscall(n3, {"write", {1, 0, 64}});
  b.pump(partner);
  const auto& e = b.hvm.channel.log().entries().back();
  EXPECT_EQ(e.kind, EventKind::Syscall);
  EXPECT_EQ(e.origin, n3);
  EXPECT_EQ(e.detail.get("ep"), to_string(partner));
  EXPECT_EQ(e.detail.get("ret"), "64");
  EXPECT_EQ(b.hvm.hrt.thread(n3).last_result, 64u);
}

TEST(Threads, NestedFromExitedParentIsLifecycleError) {
  Booted b;
  auto [partner, tid] = b.group();
  const ThreadId n = b.hvm.hrt.create_nested_thread(tid, "child", va(mem::kHigherHalfBase));
  b.hvm.hrt.thread_exit(n);
  EXPECT_THROW(b.hvm.hrt.create_nested_thread(n, "child", va(mem::kHigherHalfBase)),
               LifecycleError);
}

TEST(Threads, ExitSemantics) {
  Booted b;
  auto [partner, tid] = b.group();
  const ThreadId n = b.hvm.hrt.create_nested_thread(tid, "child", va(mem::kHigherHalfBase));
  b.hvm.hrt.thread_exit(n);
  EXPECT_FALSE(b.hvm.channel.has_injected(partner));
  EXPECT_THROW(b.hvm.hrt.thread_exit(n), LifecycleError);
  b.hvm.hrt.thread_exit(tid);
  EXPECT_FALSE(b.hvm.ros.thread(partner).exit_bit);
  EXPECT_EQ(b.hvm.ros.step_partner(partner), ros::PartnerStep::Served);
  EXPECT_TRUE(b.hvm.ros.thread(partner).exit_bit);
  EXPECT_EQ(b.hvm.ros.step_partner(partner), ros::PartnerStep::Exited);
  EXPECT_TRUE(b.hvm.ros.partner_map().empty());
  EXPECT_FALSE(b.hvm.channel.has_endpoint(partner));
  EXPECT_THROW(b.hvm.hrt.thread_exit(tid), LifecycleError);
}

TEST(Faults, LowerHalfFaultForwardedOnce) {
  Booted b;
  auto [partner, tid] = b.group();
  const auto base = static_cast<std::uint64_t>(b.hvm.ros.sys_mmap(16384, false, true));
  for (int i = 0; i < 4; ++i) {
    const auto a = va(base + i * mem::kPageSize);
    ASSERT_EQ(b.hvm.hrt.access(tid, a, mem::AccessKind::Write), hrt::AccessOutcome::Blocked);
    b.pump(partner);
    ASSERT_EQ(b.hvm.hrt.access(tid, a, mem::AccessKind::Write), hrt::AccessOutcome::Done);
  }
  EXPECT_EQ(b.forwarded(EventKind::PageFault), 4u);
  EXPECT_EQ(b.count(EventKind::Remerge), 0u);
}

TEST(Faults, RootLevelChangeTriggersSingleRemerge) {
  Booted b;
  auto [partner, tid] = b.group();
  b.hvm.ros.sys_mmap(0x80'0000'0000ULL, false, true);
  const auto far = static_cast<std::uint64_t>(b.hvm.ros.sys_mmap(4096, true, true));
  EXPECT_FALSE(mem::lower_halves_consistent(b.hvm.hrt.space(), b.hvm.ros.space()));
  EXPECT_EQ(b.hvm.hrt.access(tid, va(far), mem::AccessKind::Write), hrt::AccessOutcome::Blocked);
  b.pump(partner);
  EXPECT_EQ(b.hvm.hrt.access(tid, va(far), mem::AccessKind::Write), hrt::AccessOutcome::Done);
  EXPECT_EQ(b.forwarded(EventKind::PageFault), 1u);
  EXPECT_EQ(b.count(EventKind::Remerge), 1u);
  EXPECT_TRUE(mem::lower_halves_consistent(b.hvm.hrt.space(), b.hvm.ros.space()));
}

TEST(Faults, PersistentFaultIsDoubleFault) {
  Booted b;
  auto [partner, tid] = b.group();
  const auto base = static_cast<std::uint64_t>(b.hvm.ros.sys_mmap(4096, false, true));
  // Writable region, read-only leaf: the ROS sees nothing to fix.
  const auto frame = b.hvm.machine.memory().allocate(mem::FrameOwner::RosVisible);
  b.hvm.ros.space().map_page(va(base), frame, false);
  bool thrown = false;
  for (int i = 0; i < 6 && !thrown; ++i) {
    try {
      if (b.hvm.hrt.access(tid, va(base), mem::AccessKind::Write) == hrt::AccessOutcome::Blocked) {
        b.pump(partner);
      }
    } catch (const DoubleFaultError&) {
      thrown = true;
    }
  }
  EXPECT_TRUE(thrown);
  EXPECT_EQ(b.count(EventKind::Remerge), 1u);
  EXPECT_EQ(b.forwarded(EventKind::PageFault), 2u);
}

TEST(Faults, WriteProtectGateCanBeDisabled) {
  hrt::HrtOptions off;
  off.cr0_wp = false;
  Booted b({"worker"}, {}, {}, {}, off);
  auto [partner, tid] = b.group();
  const auto base = static_cast<std::uint64_t>(b.hvm.ros.sys_mmap(4096, true, false));
  EXPECT_EQ(b.hvm.hrt.access(tid, va(base), mem::AccessKind::Write), hrt::AccessOutcome::Done);
  EXPECT_EQ(b.forwarded(EventKind::PageFault), 0u);
}

TEST(Faults, SegfaultIsReportedToTheThread) {
  Booted b;
  auto [partner, tid] = b.group();
  EXPECT_EQ(b.hvm.hrt.access(tid, va(0x7000'0000'0000ULL), mem::AccessKind::Read),
            hrt::AccessOutcome::Blocked);
  b.pump(partner);
  EXPECT_EQ(b.hvm.hrt.thread(tid).failure, "segfault");
  EXPECT_EQ(b.hvm.hrt.access(tid, va(0x7000'0000'0000ULL), mem::AccessKind::Read),
            hrt::AccessOutcome::Failed);
}

TEST(Faults, HigherHalfFaultStaysLocal) {
  Booted b;
  auto [partner, tid] = b.group();
  // Beyond the identity map: not present, handled without the channel.
  const auto a = va(0xFFFF'C000'0000'0000ULL);
  EXPECT_EQ(b.hvm.hrt.access(tid, a, mem::AccessKind::Write), hrt::AccessOutcome::Done);
  EXPECT_FALSE(b.hvm.channel.has_injected(partner));
  EXPECT_TRUE(b.hvm.channel.outstanding().empty());
  EXPECT_EQ(b.count(EventKind::LocalFault), 1u);
  EXPECT_EQ(b.forwarded(EventKind::PageFault), 0u);
}

TEST(Syscalls, ForwardedModelResults) {
  Booted b;
  auto [partner, tid] = b.group();
  b.hvm.hrt.handle_syscall(tid, {"write", {1, 0x1000, 64}});
  EXPECT_EQ(b.hvm.hrt.thread(tid).status, hrt::HrtThreadStatus::BlockedOnEvent);
  b.pump(partner);
  EXPECT_EQ(b.hvm.hrt.thread(tid).last_result, 64u);
  b.hvm.hrt.handle_syscall(tid, {"frobnicate", {}});
  b.pump(partner);
  EXPECT_EQ(static_cast<std::int64_t>(*b.hvm.hrt.thread(tid).last_result), ros::kENOSYS);
  b.hvm.hrt.handle_syscall(tid, {"mmap", {8192, 0, 1}});
  b.pump(partner);
  const std::uint64_t base = *b.hvm.hrt.thread(tid).last_result;
  EXPECT_NE(b.hvm.ros.region_of(base), nullptr);
  EXPECT_EQ(b.hvm.hrt.access(tid, va(base + 4096), mem::AccessKind::Write),
            hrt::AccessOutcome::Blocked);
  b.pump(partner);
  EXPECT_EQ(b.hvm.hrt.access(tid, va(base + 4096), mem::AccessKind::Write),
            hrt::AccessOutcome::Done);
  b.hvm.hrt.handle_syscall(tid, {"getpid", {}});
  EXPECT_THROW(b.hvm.hrt.handle_syscall(tid, {"getpid", {}}), LifecycleError);
}

TEST(Syscalls, ForwardedCostsBasePlusOverhead) {
  Booted b;
  auto [partner, tid] = b.group();
  b.hvm.hrt.handle_syscall(tid, {"getpid", {}});
  b.pump(partner);
  const auto& e = b.hvm.channel.log().entries().back();
  EXPECT_EQ(e.cost, 1500u + 1500u);
}

TEST(Symbols, LookupChargedPerCallWithoutCache) {
  Booted b;
  const Cycles t0 = b.hvm.channel.now();
  b.hvm.hrt.resolve_symbol("nk_get_tid", b.main());
  b.hvm.hrt.resolve_symbol("nk_get_tid", b.main());
  EXPECT_EQ(b.hvm.channel.now() - t0, 2 * 400u);
}

TEST(Symbols, CacheChargesOnceThenHits) {
  Booted b;
  b.hvm.hrt.set_symbol_cache(&b.hvm.cache);
  const Cycles t0 = b.hvm.channel.now();
  for (int i = 0; i < 5; ++i) b.hvm.hrt.resolve_symbol("nk_get_tid", b.main());
  EXPECT_EQ(b.hvm.channel.now() - t0, 400u + 4 * 40u);
  EXPECT_EQ(b.hvm.cache.hits(), 4u);
  EXPECT_THROW(b.hvm.hrt.resolve_symbol("absent", b.main()), SymbolError);
}

TEST(Sync, InvokeCostsBySocket) {
  Booted b;
  const auto page = static_cast<std::uint64_t>(b.hvm.ros.sys_mmap(4096, true, true));
  const auto fn = channel::FunctionRef{"nk_get_tid", b.hvm.hrt.functions().find("nk_get_tid")->addr};
  const auto same = b.hvm.channel.setup_sync(b.main(), va(page), true);
  Cycles t0 = b.hvm.channel.now();
  b.hvm.channel.sync_invoke(same, fn, {});
  // Function body cycles plus the sync round trip.
  EXPECT_EQ(b.hvm.channel.now() - t0, 20u + 790u);
  const auto diff = b.hvm.channel.setup_sync(ThreadId{99}, va(page), false);
  t0 = b.hvm.channel.now();
  b.hvm.channel.sync_invoke(diff, fn, {});
  EXPECT_EQ(b.hvm.channel.now() - t0, 20u + 1060u);
}

TEST(Sync, UnmappedAddressIsNotReady) {
  Booted b;
  EXPECT_THROW(b.hvm.channel.setup_sync(b.main(), va(0x7000'0000'0000ULL), true), ProtocolError);
}

TEST(Async, InvokeCostsAsyncLatency) {
  Booted b;
  const Cycles t0 = b.hvm.channel.now();
  channel::AsyncCallPayload call{b.hvm.hrt.functions().find("nk_get_tid")->addr, {}};
  b.hvm.channel.hypercall(b.main(), channel::Side::Ros, channel::Hypercall::async_call(call));
  EXPECT_EQ(b.hvm.channel.now() - t0, 20u + 25000u);
  const Cycles t1 = b.hvm.channel.now();
  b.hvm.channel.hypercall(b.main(), channel::Side::Ros, channel::Hypercall::async_call(call, true));
  EXPECT_EQ(b.hvm.channel.now() - t1, 4 * (20u + 25000u));
}
