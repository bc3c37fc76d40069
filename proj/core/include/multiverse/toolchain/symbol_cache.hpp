#pragma once

#include <cstddef>
#include <cstdint>
#include <list>
#include <optional>
#include <string>
#include <unordered_map>

#include "multiverse/mem/address.hpp"

namespace multiverse::toolchain {

// LRU cache of resolved AeroKernel symbol addresses.
class SymbolCache {
 public:
  explicit SymbolCache(std::size_t capacity = 256);

  std::optional<mem::VirtAddr> find(const std::string& name);
  void insert(const std::string& name, mem::VirtAddr addr);
  void clear();

  std::size_t size() const noexcept { return index_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t hits() const noexcept { return hits_; }
  std::uint64_t misses() const noexcept { return misses_; }

 private:
  using Entry = std::pair<std::string, mem::VirtAddr>;
  std::size_t capacity_;
  std::list<Entry> order_;  // most recent first
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

}  // namespace multiverse::toolchain
