#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "multiverse/errors.hpp"
#include "multiverse/mem/address_space.hpp"

using namespace multiverse;
using namespace multiverse::mem;

namespace {

ControlState ring3(const AddressSpace& s) { return s.control(Ring::Ring3, true); }
ControlState ring0(const AddressSpace& s, bool wp = true) {
  return s.control(Ring::Ring0, wp);
}

VirtAddr va(std::uint64_t v) { return VirtAddr::from(v); }

}  // namespace

TEST(VirtAddr, CanonicalForms) {
  EXPECT_TRUE(VirtAddr::is_canonical(0));
  EXPECT_TRUE(VirtAddr::is_canonical(0x0000'7FFF'FFFF'F000ULL));
  EXPECT_TRUE(VirtAddr::is_canonical(0xFFFF'8000'0000'0000ULL));
  EXPECT_FALSE(VirtAddr::is_canonical(0x0000'8000'0000'0000ULL));
  EXPECT_FALSE(VirtAddr::is_canonical(0x1234'0000'0000'0000ULL));
  EXPECT_THROW(VirtAddr::from(0x0000'8000'0000'0000ULL), UsageError);
}

TEST(VirtAddr, IndicesAndHalves) {
  const VirtAddr a = va(0x0000'1000'0000'2345ULL);
  EXPECT_TRUE(a.lower());
  EXPECT_EQ(a.page_offset(), 0x345u);
  EXPECT_EQ(a.page_base().value(), 0x0000'1000'0000'2000ULL);
  EXPECT_EQ(a.index(1), 2u);
  EXPECT_EQ(a.index(4), 0x20u);
  EXPECT_EQ(va(kHigherHalfBase).index(4), 256u);
  EXPECT_FALSE(va(kHigherHalfBase).lower());
}

// Closure over canonical form: for random 64-bit inputs from() either throws
// or yields an address whose half matches bit 47.
TEST(VirtAddr, RandomCanonicalClosure) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20000; ++i) {
    std::uint64_t v = rng();
    if (i % 2) v = (v & 0x0000'FFFF'FFFF'FFFFULL) | ((v >> 47) & 1 ? 0xFFFF'0000'0000'0000ULL : 0);
    if (VirtAddr::is_canonical(v)) {
      const VirtAddr a = VirtAddr::from(v);
      EXPECT_EQ(a.value(), v);
      EXPECT_EQ(a.lower(), ((v >> 47) & 1) == 0);
    } else {
      EXPECT_THROW(VirtAddr::from(v), UsageError);
    }
  }
}

TEST(PhysicalMemory, PartitionsAreDisjoint) {
  PhysicalMemory m(64, 48);
  const PhysFrame r = m.allocate(FrameOwner::RosVisible);
  const PhysFrame h = m.allocate(FrameOwner::HrtOnly);
  EXPECT_LT(r.number, 48u);
  EXPECT_GE(h.number, 48u);
  EXPECT_EQ(m.owner_of(r.number), FrameOwner::RosVisible);
  EXPECT_EQ(m.owner_of(h.number), FrameOwner::HrtOnly);
  EXPECT_THROW(PhysicalMemory(8, 8), UsageError);
}

TEST(PhysicalMemory, ExhaustionAndReuse) {
  PhysicalMemory m(4, 2);
  const PhysFrame a = m.allocate(FrameOwner::RosVisible);
  m.allocate(FrameOwner::RosVisible);
  EXPECT_THROW(m.allocate(FrameOwner::RosVisible), AllocationError);
  m.release(a.number);
  EXPECT_EQ(m.allocate(FrameOwner::RosVisible).number, a.number);
}

TEST(Translate, EmptyTableFaultsNotPresent) {
  PhysicalMemory m(256, 128);
  AddressSpace s(m, FrameOwner::RosVisible);
  const Translation t = s.translate(ring3(s), 0x1000, AccessKind::Read);
  ASSERT_TRUE(faulted(t));
  EXPECT_EQ(std::get<FaultInfo>(t).reason, FaultReason::NotPresent);
  EXPECT_EQ(std::get<FaultInfo>(t).addr.value(), 0x1000u);
}

TEST(Translate, WriteProtectGate) {
  PhysicalMemory m(256, 128);
  AddressSpace s(m, FrameOwner::RosVisible);
  s.map_page(va(0x3000), PhysFrame{9}, false);
  const Translation on = s.translate(ring0(s, true), 0x3000, AccessKind::Write);
  ASSERT_TRUE(faulted(on));
  EXPECT_EQ(std::get<FaultInfo>(on).reason, FaultReason::WriteProtect);
  const Translation off = s.translate(ring0(s, false), 0x3010, AccessKind::Write);
  ASSERT_FALSE(faulted(off));
  EXPECT_EQ(std::get<PhysAddr>(off).value, 0x9010u);
  // Ring 3 always honours the read-only bit.
  const ControlState r3{false, s.cr3(), Ring::Ring3};
  EXPECT_TRUE(faulted(s.translate(r3, 0x3000, AccessKind::Write)));
  EXPECT_FALSE(faulted(s.translate(r3, 0x3000, AccessKind::Read)));
}

TEST(Translate, MapUnmapRemap) {
  PhysicalMemory m(256, 128);
  AddressSpace s(m, FrameOwner::RosVisible);
  s.map_page(va(0x2000), PhysFrame{7}, true);
  EXPECT_EQ(std::get<PhysAddr>(s.translate(ring3(s), 0x2000, AccessKind::Read)).value,
            0x7000u);
  s.map_page(va(0x2000), PhysFrame{8}, true);
  EXPECT_EQ(std::get<PhysAddr>(s.translate(ring3(s), 0x2000, AccessKind::Read)).value,
            0x8000u);
  EXPECT_EQ(s.unmap_page(va(0x2000)), 8u);
  EXPECT_TRUE(faulted(s.translate(ring3(s), 0x2000, AccessKind::Read)));
  EXPECT_EQ(s.unmap_page(va(0x5000)), std::nullopt);
  s.map_page(va(0x2000), PhysFrame{10}, true);
  EXPECT_EQ(std::get<PhysAddr>(s.translate(ring3(s), 0x2000, AccessKind::Read)).value,
            0xA000u);
}

TEST(Translate, UsageErrors) {
  PhysicalMemory m(256, 128);
  AddressSpace s(m, FrameOwner::RosVisible);
  EXPECT_THROW(s.map_page(va(0x2001), PhysFrame{1}, true), UsageError);
  EXPECT_THROW(s.map_page(va(0x2000), PhysFrame{999}, true), UsageError);
  ControlState wrong = ring3(s);
  wrong.cr3 += 1;
  EXPECT_THROW((void)s.translate(wrong, 0x1000, AccessKind::Read), UsageError);
  EXPECT_THROW((void)s.translate(ring3(s), 0x0000'8000'0000'0000ULL, AccessKind::Read),
               UsageError);
}

// Unmapping one page leaves every other page of the same leaf table intact.
TEST(Translate, UnmapLeavesNeighboursIntact) {
  PhysicalMemory m(1024, 768);
  AddressSpace s(m, FrameOwner::RosVisible);
  std::map<std::uint64_t, std::uint64_t> expected;
  for (std::uint64_t i = 0; i < 64; ++i) {
    const std::uint64_t v = 0x40'0000 + i * kPageSize;
    s.map_page(va(v), PhysFrame{100 + i}, true);
    expected[v] = 100 + i;
  }
  std::mt19937 rng(3);
  for (int round = 0; round < 32; ++round) {
    auto it = expected.begin();
    std::advance(it, rng() % expected.size());
    s.unmap_page(va(it->first));
    expected.erase(it);
    for (std::uint64_t i = 0; i < 64; ++i) {
      const std::uint64_t v = 0x40'0000 + i * kPageSize;
      const Translation t = s.translate(ring3(s), v, AccessKind::Read);
      if (auto e = expected.find(v); e != expected.end()) {
        ASSERT_FALSE(faulted(t));
        EXPECT_EQ(std::get<PhysAddr>(t).value, e->second << kPageShift);
      } else {
        EXPECT_TRUE(faulted(t));
      }
    }
  }
}

TEST(Translate, ForEachMappingVisitsInOrder) {
  PhysicalMemory m(256, 128);
  AddressSpace s(m, FrameOwner::RosVisible);
  s.map_page(va(0x0000'1000'0000'0000ULL), PhysFrame{3}, true);
  s.map_page(va(0x5000), PhysFrame{2}, true);
  s.map_page(va(0x0000'7F00'0000'0000ULL), PhysFrame{4}, false);
  std::vector<std::uint64_t> seen;
  s.for_each_mapping([&](VirtAddr v, const PageTableEntry&) { seen.push_back(v.value()); });
  EXPECT_EQ(seen, (std::vector<std::uint64_t>{0x5000, 0x0000'1000'0000'0000ULL,
                                              0x0000'7F00'0000'0000ULL}));
}

TEST(IdentityMap, HigherHalfMapsFrames) {
  PhysicalMemory m(64, 32);
  AddressSpace h(m, FrameOwner::HrtOnly);
  identity_map_higher_half(h, 64);
  const ControlState c = ring0(h);
  EXPECT_EQ(std::get<PhysAddr>(h.translate(c, kHigherHalfBase + 0x1000, AccessKind::Read)).value,
            0x1000u);
  EXPECT_EQ(std::get<PhysAddr>(h.translate(c, kHigherHalfBase + 63 * kPageSize,
                                            AccessKind::Write)).value,
            63 * kPageSize);
  EXPECT_TRUE(faulted(h.translate(c, 0x1000, AccessKind::Read)));
  // Kernel-only: ring 3 cannot reach the higher half.
  const Translation u = h.translate(ring3(h), kHigherHalfBase, AccessKind::Read);
  ASSERT_TRUE(faulted(u));
  EXPECT_EQ(std::get<FaultInfo>(u).reason, FaultReason::Privilege);
}

TEST(Merge, EmptyRosLeavesLowerHalfEmpty) {
  PhysicalMemory m(256, 128);
  AddressSpace ros(m, FrameOwner::RosVisible);
  AddressSpace hrt(m, FrameOwner::HrtOnly);
  identity_map_higher_half(hrt, 16);
  merge_lower_half(hrt, ros);
  for (std::size_t i = 0; i < kLowerHalfEntries; ++i) {
    EXPECT_FALSE(hrt.root_table()[i].present);
  }
  EXPECT_TRUE(lower_halves_consistent(hrt, ros));
  EXPECT_FALSE(faulted(hrt.translate(ring0(hrt), kHigherHalfBase, AccessKind::Read)));
}

TEST(Merge, ConsistencyTracksRootChanges) {
  PhysicalMemory m(512, 256);
  AddressSpace ros(m, FrameOwner::RosVisible);
  AddressSpace hrt(m, FrameOwner::HrtOnly);
  identity_map_higher_half(hrt, 512);
  const PageTable higher_before = hrt.root_table();
  ros.map_page(va(0x1000), PhysFrame{5}, true);
  merge_lower_half(hrt, ros);
  EXPECT_TRUE(lower_halves_consistent(hrt, ros));
  // A new page under an existing root entry is visible through shared tables.
  ros.map_page(va(0x2000), PhysFrame{6}, true);
  EXPECT_TRUE(lower_halves_consistent(hrt, ros));
  EXPECT_EQ(std::get<PhysAddr>(hrt.translate(ring0(hrt), 0x2000, AccessKind::Read)).value,
            0x6000u);
  // A new root-level entry is not.
  ros.map_page(va(0x0000'0080'0000'0000ULL), PhysFrame{7}, true);
  EXPECT_FALSE(lower_halves_consistent(hrt, ros));
  EXPECT_TRUE(faulted(hrt.translate(ring0(hrt), 0x0000'0080'0000'0000ULL, AccessKind::Read)));
  merge_lower_half(hrt, ros);
  EXPECT_TRUE(lower_halves_consistent(hrt, ros));
  for (std::size_t i = kLowerHalfEntries; i < kEntriesPerTable; ++i) {
    EXPECT_EQ(hrt.root_table()[i], higher_before[i]);
  }
}

TEST(Merge, AcrossMemoriesIsUsageError) {
  PhysicalMemory a(64, 32), b(64, 32);
  AddressSpace ros(a, FrameOwner::RosVisible);
  AddressSpace hrt(b, FrameOwner::HrtOnly);
  EXPECT_THROW(merge_lower_half(hrt, ros), UsageError);
}
