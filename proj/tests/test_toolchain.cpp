#include <gtest/gtest.h>

#include <random>

#include "multiverse/errors.hpp"
#include "multiverse/toolchain/fat_binary.hpp"
#include "multiverse/toolchain/override.hpp"
#include "multiverse/toolchain/override_config.hpp"
#include "multiverse/toolchain/symbol_cache.hpp"
#include "support.hpp"

using namespace multiverse;
using namespace multiverse::toolchain;
using namespace mvtest;
using channel::EventKind;

namespace {

hrt::AeroKernelImage image_with(std::size_t symbols) {
  std::vector<std::string> names{hrt::kImageEntry};
  for (std::size_t i = 0; i < symbols; ++i) names.push_back("fn_" + std::to_string(i));
  return hrt::link_image(hrt::kImageEntry, names);
}

std::string fixture(const std::string& name) {
  return read_file(std::string(MULTIVERSE_FIXTURE_DIR) + "/overrides/" + name);
}

}  // namespace

TEST(FatBinary, RoundTrip) {
  const AppDescriptor app{"racket", "spectral-norm"};
  const auto image = image_with(3);
  const auto bytes = embed(app, image);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "MVFATBIN");
  const FatBinary fb = parse_fat_binary(bytes);
  EXPECT_EQ(fb.app, app);
  EXPECT_EQ(fb.image, image);
}

TEST(FatBinary, EmptyAndLargeSymbolTables) {
  hrt::AeroKernelImage empty;
  empty.entry = "e";
  EXPECT_EQ(parse_fat_binary(embed({"a", "b"}, empty)).image, empty);
  const auto big = image_with(1000);
  EXPECT_EQ(big.symbols.size(), 1001u);
  EXPECT_EQ(parse_fat_binary(embed({"a", "b"}, big)).image, big);
}

TEST(FatBinary, MissingMagic) {
  auto bytes = embed({"a", "b"}, image_with(1));
  bytes[3] = 'x';
  try {
    parse_fat_binary(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  EXPECT_THROW(parse_fat_binary(std::vector<std::uint8_t>{}), FormatError);
}

TEST(FatBinary, VersionMismatch) {
  auto bytes = embed({"a", "b"}, image_with(1));
  bytes[8] = 2;
  try {
    parse_fat_binary(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
}

TEST(FatBinary, EveryTruncationRejected) {
  const auto bytes = embed({"app", "ref"}, image_with(4));
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + n);
    EXPECT_THROW(parse_fat_binary(cut), FormatError) << n;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(parse_fat_binary(longer), FormatError);
}

TEST(FatBinary, LowerHalfSymbolRejected) {
  auto image = image_with(1);
  image.symbols["low"] = va(0x1000);
  EXPECT_THROW(parse_fat_binary(embed({"a", "b"}, image)), FormatError);
}

TEST(FatBinary, RandomisedRoundTripAndHeaderCorruption) {
  std::mt19937_64 rng(2024);
  auto word = [&](std::size_t max) {
    std::string s;
    const std::size_t n = rng() % max;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<char>('a' + rng() % 26);
    return s;
  };
  for (int round = 0; round < 200; ++round) {
    hrt::AeroKernelImage image;
    image.entry = word(12);
    image.payload_size = rng();
    const std::size_t n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      image.symbols[word(10) + std::to_string(i)] =
          va(mem::kHigherHalfBase | (rng() & 0x7FFF'FFFF'FFFFULL));
    }
    const AppDescriptor app{word(16), word(16)};
    const auto bytes = embed(app, image);
    const FatBinary fb = parse_fat_binary(bytes);
    ASSERT_EQ(fb.image, image);
    ASSERT_EQ(fb.app, app);
    for (std::size_t i = 0; i < kFatBinaryHeaderSize; ++i) {
      auto bad = bytes;
      bad[i] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      EXPECT_THROW(parse_fat_binary(bad), FormatError) << "byte " << i;
    }
  }
}

TEST(OverrideConfig, EmptyFileGivesDefaults) {
  const OverrideMap m = parse_override_config("");
  EXPECT_EQ(m.entries, default_overrides().entries);
  EXPECT_TRUE(m.warnings.empty());
  const auto* pc = m.find("pthread_create");
  ASSERT_NE(pc, nullptr);
  EXPECT_EQ(pc->aero, "nk_thread_start");
  EXPECT_EQ(pc->args, (std::vector<ArgMapping>{{2, 0}, {3, 1}}));
}

TEST(OverrideConfig, DirectiveParses) {
  const OverrideMap m =
      parse_override_config("override pthread_create -> nk_thread_start args(2:0,3:1)\n");
  EXPECT_EQ(m.find("pthread_create")->args, (std::vector<ArgMapping>{{2, 0}, {3, 1}}));
  const OverrideMap d = parse_override_config("override pthread_self -> nk_get_tid args() disabled");
  EXPECT_FALSE(d.find("pthread_self")->enabled);
}

TEST(OverrideConfig, ValidFixture) {
  const OverrideMap m = parse_override_config(fixture("valid.cfg"));
  EXPECT_EQ(m.entries.size(), 7u);
  EXPECT_FALSE(m.find("pthread_yield")->enabled);
  EXPECT_EQ(m.find("memcpy_fast")->args.size(), 6u);
  EXPECT_EQ(m.find("pthread_join")->args, (std::vector<ArgMapping>{{0, 0}, {1, 1}}));
  for (const auto& [name, e] : m.entries) {
    EXPECT_EQ(parse_override_config(format_override(e)).find(name)->args, e.args);
  }
}

TEST(OverrideConfig, DuplicateKeepsLastWithWarning) {
  const OverrideMap m = parse_override_config(
      "override a -> b args(0:0)\n"
      "override a -> c args()\n");
  EXPECT_EQ(m.find("a")->aero, "c");
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("line 2"), std::string::npos);
}

TEST(OverrideConfig, MalformedFixturesReportLines) {
  const std::string index = fixture("expected_lines.txt");
  std::istringstream in(index);
  std::string file;
  std::size_t line = 0;
  int checked = 0;
  while (in >> file) {
    if (file[0] == '#') {
      std::getline(in, file);
      continue;
    }
    in >> line;
    try {
      parse_override_config(fixture(file));
      ADD_FAILURE() << file << " was accepted";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << file << ": " << e.what();
    }
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(Override, PermuteArgs) {
  const OverrideEntry e{"pthread_create", "nk_thread_start", {{2, 0}, {3, 1}}, true};
  const std::uint64_t args[] = {10, 11, 12, 13};
  EXPECT_EQ(permute_args(e, args), (std::vector<std::uint64_t>{12, 13}));
  const std::uint64_t short_args[] = {10};
  EXPECT_EQ(permute_args(e, short_args), (std::vector<std::uint64_t>{0, 0}));
}

TEST(Override, LookupPerCallWithoutCache) {
  Booted b;
  const auto map = default_overrides();
  const std::uint64_t args[] = {0x1000};
  for (int i = 0; i < 5; ++i) {
    const auto r = invoke_override(b.hvm.hrt, map, "pthread_mutex_lock", args, b.main());
    EXPECT_EQ(r.outcome, OverrideOutcome::Executed);
    EXPECT_EQ(r.aero, "nk_mutex_lock");
  }
  EXPECT_EQ(b.count(EventKind::SymbolLookup), 5u);
  EXPECT_EQ(b.cycles_of(EventKind::SymbolLookup), 5 * 400u);
  EXPECT_EQ(b.count(EventKind::OverrideCall), 5u);
  EXPECT_TRUE(b.hvm.channel.outstanding().empty());
}

TEST(Override, CacheChargesOneLookup) {
  Booted b;
  b.hvm.hrt.set_symbol_cache(&b.hvm.cache);
  const auto map = default_overrides();
  for (int i = 0; i < 5; ++i) {
    invoke_override(b.hvm.hrt, map, "pthread_self", {}, b.main());
  }
  EXPECT_EQ(b.cycles_of(EventKind::SymbolLookup), 400u + 4 * 40u);
}

TEST(Override, UnknownAndDisabledFallThrough) {
  Booted b;
  auto map = default_overrides();
  EXPECT_EQ(invoke_override(b.hvm.hrt, map, "malloc", {}, b.main()).outcome,
            OverrideOutcome::FellThrough);
  map.entries["pthread_self"].enabled = false;
  EXPECT_EQ(invoke_override(b.hvm.hrt, map, "pthread_self", {}, b.main()).outcome,
            OverrideOutcome::FellThrough);
  ASSERT_EQ(b.count(EventKind::Fallthrough), 2u);
  const auto& e = b.hvm.channel.log().entries().back();
  EXPECT_EQ(e.detail.get("reason"), "disabled");
  EXPECT_EQ(b.count(EventKind::SymbolLookup), 0u);
}

TEST(Override, ThreadStartIsFlagged) {
  Booted b;
  const std::uint64_t entry = b.hvm.hrt.functions().find("worker")->addr.value();
  const std::uint64_t args[] = {0, 0, entry, 7};
  const auto r = invoke_override(b.hvm.hrt, default_overrides(), "pthread_create", args, b.main());
  EXPECT_TRUE(r.starts_thread);
  EXPECT_EQ(r.args, (std::vector<std::uint64_t>{entry, 7}));
}

TEST(SymbolCache, LruEviction) {
  SymbolCache c(2);
  c.insert("a", va(mem::kHigherHalfBase));
  c.insert("b", va(mem::kHigherHalfBase + 64));
  EXPECT_TRUE(c.find("a"));
  c.insert("c", va(mem::kHigherHalfBase + 128));
  EXPECT_FALSE(c.find("b"));
  EXPECT_TRUE(c.find("a"));
  EXPECT_TRUE(c.find("c"));
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.misses(), 1u);
  EXPECT_THROW(SymbolCache(0), UsageError);
}

// Coherence oracle: after any interleaving of inserts and lookups the cache
// returns exactly what an uncached table would.
TEST(SymbolCache, RandomCoherence) {
  std::mt19937 rng(5);
  SymbolCache c(8);
  std::map<std::string, mem::VirtAddr> truth;
  for (int i = 0; i < 5000; ++i) {
    const std::string name = "s" + std::to_string(rng() % 20);
    if (rng() % 3 == 0) {
      const auto a = va(mem::kHigherHalfBase + 64 * (rng() % 1000));
      truth[name] = a;
      c.insert(name, a);
    } else if (auto hit = c.find(name)) {
      ASSERT_EQ(*hit, truth.at(name));
    }
    ASSERT_LE(c.size(), 8u);
  }
}

TEST(SymbolCache, ClearedOnReinstall) {
  Booted b;
  b.hvm.hrt.set_symbol_cache(&b.hvm.cache);
  b.hvm.hrt.resolve_symbol("nk_get_tid", b.main());
  EXPECT_EQ(b.hvm.cache.size(), 1u);
  b.hvm.ros.process_exit(b.main());
  EXPECT_EQ(b.hvm.cache.size(), 0u);
}
