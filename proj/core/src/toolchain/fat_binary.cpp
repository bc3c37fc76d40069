#include "multiverse/toolchain/fat_binary.hpp"

#include <algorithm>

#include "multiverse/errors.hpp"

namespace multiverse::toolchain {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

// Reads within [pos, end) of `bytes`; offsets reported are absolute.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t pos, std::size_t end)
      : bytes_(bytes), pos_(pos), end_(end) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(const char* what) {
    const std::size_t len = u32(what);
    need(len, what);
    std::string s(bytes_.begin() + pos_, bytes_.begin() + pos_ + len);
    pos_ += len;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (end_ - pos_ < n) {
      throw FormatError(std::string("truncated ") + what, pos_);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  std::size_t end_;
};

}  // namespace

std::vector<std::uint8_t> embed(const AppDescriptor& app,
                                const hrt::AeroKernelImage& image) {
  Writer a;
  a.str(app.name);
  a.str(app.workload_ref);

  Writer img;
  img.str(image.entry);
  img.u64(image.payload_size);
  img.u32(static_cast<std::uint32_t>(image.symbols.size()));
  for (const auto& [name, addr] : image.symbols) {
    img.str(name);
    img.u64(addr.value());
  }

  Writer out;
  for (char c : kFatBinaryMagic) out.bytes().push_back(static_cast<std::uint8_t>(c));
  out.u32(kFatBinaryVersion);
  out.u32(static_cast<std::uint32_t>(a.bytes().size()));
  out.u32(static_cast<std::uint32_t>(img.bytes().size()));
  auto& bytes = out.bytes();
  bytes.insert(bytes.end(), a.bytes().begin(), a.bytes().end());
  bytes.insert(bytes.end(), img.bytes().begin(), img.bytes().end());
  return std::move(bytes);
}

FatBinary parse_fat_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFatBinaryMagic.size() ||
      !std::equal(kFatBinaryMagic.begin(), kFatBinaryMagic.end(), bytes.begin())) {
    throw FormatError("missing MVFATBIN magic", 0);
  }
  Reader header(bytes, kFatBinaryMagic.size(), bytes.size());
  const std::uint32_t version = header.u32("header");
  if (version != kFatBinaryVersion) {
    throw FormatError("unsupported version " + std::to_string(version), 8);
  }
  const std::uint64_t app_len = header.u32("header");
  const std::uint64_t image_len = header.u32("header");
  const std::uint64_t expected = kFatBinaryHeaderSize + app_len + image_len;
  if (bytes.size() != expected) {
    const std::size_t at = std::min<std::uint64_t>(bytes.size(), expected);
    throw FormatError("container is " + std::to_string(bytes.size()) +
                          " bytes but header declares " + std::to_string(expected),
                      at);
  }

  FatBinary fb;
  Reader app(bytes, kFatBinaryHeaderSize, kFatBinaryHeaderSize + app_len);
  fb.app.name = app.str("app name");
  fb.app.workload_ref = app.str("workload reference");
  if (!app.done()) throw FormatError("trailing bytes in app descriptor", app.pos());

  Reader img(bytes, kFatBinaryHeaderSize + app_len, bytes.size());
  fb.image.entry = img.str("image entry");
  fb.image.payload_size = img.u64("payload size");
  const std::uint32_t count = img.u32("symbol count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = img.pos();
    std::string name = img.str("symbol name");
    const std::uint64_t addr = img.u64("symbol address");
    if (!mem::VirtAddr::is_canonical(addr) || (addr >> 47) == 0) {
      throw FormatError("symbol `" + name + "` is not a higher-half address", at);
    }
    if (!fb.image.symbols.emplace(std::move(name), mem::VirtAddr::from(addr)).second) {
      throw FormatError("duplicate symbol", at);
    }
  }
  if (!img.done()) throw FormatError("trailing bytes in image", img.pos());
  return fb;
}

}  // namespace multiverse::toolchain
