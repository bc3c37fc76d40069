#include "multiverse/mem/address.hpp"

#include <cstdio>

#include "multiverse/errors.hpp"

namespace multiverse::mem {

VirtAddr VirtAddr::from(std::uint64_t value) {
  if (!is_canonical(value)) {
    throw UsageError("non-canonical virtual address " + to_hex(value));
  }
  return VirtAddr(value);
}

std::string to_hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

const char* to_string(AccessKind a) {
  switch (a) {
    case AccessKind::Read:
      return "read";
    case AccessKind::Write:
      return "write";
    case AccessKind::Execute:
      return "execute";
  }
  return "?";
}

char access_letter(AccessKind a) {
  switch (a) {
    case AccessKind::Read:
      return 'r';
    case AccessKind::Write:
      return 'w';
    case AccessKind::Execute:
      return 'x';
  }
  return '?';
}

}  // namespace multiverse::mem
