#include "multiverse/toolchain/symbol_cache.hpp"

#include "multiverse/errors.hpp"

namespace multiverse::toolchain {

SymbolCache::SymbolCache(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw UsageError("symbol cache capacity must be positive");
}

std::optional<mem::VirtAddr> SymbolCache::find(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

void SymbolCache::insert(const std::string& name, mem::VirtAddr addr) {
  if (auto it = index_.find(name); it != index_.end()) {
    it->second->second = addr;
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  if (index_.size() == capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
  order_.emplace_front(name, addr);
  index_[name] = order_.begin();
}

void SymbolCache::clear() {
  order_.clear();
  index_.clear();
}

}  // namespace multiverse::toolchain
