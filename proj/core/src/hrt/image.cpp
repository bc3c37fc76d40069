#include "multiverse/hrt/image.hpp"

#include "multiverse/errors.hpp"

namespace multiverse::hrt {

AeroKernelImage link_image(const std::string& entry,
                           std::span<const std::string> names) {
  AeroKernelImage image;
  image.entry = entry;
  std::uint64_t offset = 0;
  for (const std::string& name : names) {
    if (image.symbols.contains(name)) continue;
    image.symbols.emplace(name, mem::VirtAddr::from(kImageLinkBase + offset));
    offset += kSymbolStride;
  }
  if (!image.symbols.contains(entry)) {
    throw SymbolError("image entry `" + entry + "` is not among its symbols");
  }
  // Code plus one page of data, rounded up to whole pages.
  image.payload_size =
      ((offset + mem::kPageSize - 1) / mem::kPageSize + 1) * mem::kPageSize;
  return image;
}

const std::map<std::string, FunctionBehavior>& builtin_functions() {
  static const std::map<std::string, FunctionBehavior> kBuiltins = {
      {kImageEntry, FunctionBehavior{}},
      {"nk_thread_start", FunctionBehavior{200, 0, {}, true}},
      {"nk_get_tid", FunctionBehavior{20, 0, {}, false}},
      {"nk_mutex_lock", FunctionBehavior{60, 0, {}, false}},
      {"nk_mutex_unlock", FunctionBehavior{60, 0, {}, false}},
  };
  return kBuiltins;
}

void FunctionTable::add(const std::string& name, mem::VirtAddr addr,
                        FunctionBehavior b) {
  if (addr.lower()) {
    throw SymbolError("function `" + name + "` is not in the higher half");
  }
  entries_[name] = Entry{addr, std::move(b)};
}

const FunctionTable::Entry* FunctionTable::find(const std::string& name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<std::string> FunctionTable::name_at(mem::VirtAddr addr) const {
  for (const auto& [name, e] : entries_) {
    if (e.addr == addr) return name;
  }
  return std::nullopt;
}

FunctionTable link_functions(
    const AeroKernelImage& image,
    const std::map<std::string, FunctionBehavior>& behaviors) {
  FunctionTable table;
  const auto& builtins = builtin_functions();
  for (const auto& [name, addr] : image.symbols) {
    FunctionBehavior b;
    if (auto it = behaviors.find(name); it != behaviors.end()) {
      b = it->second;
    } else if (auto bt = builtins.find(name); bt != builtins.end()) {
      b = bt->second;
    }
    table.add(name, addr, std::move(b));
  }
  return table;
}

}  // namespace multiverse::hrt
