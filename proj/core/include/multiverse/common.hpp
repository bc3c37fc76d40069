#pragma once

#include <cstdint>
#include <string>
#include <type_traits>

namespace multiverse {

using Cycles = std::uint64_t;

// Strong integer handles. Thread ids share one space across ROS and HRT
// threads so that event-log origins are unambiguous.
enum class ThreadId : std::uint32_t {};
enum class CoreId : std::uint32_t {};
enum class EventId : std::uint64_t {};

template <typename E>
constexpr auto raw(E e) noexcept {
  return static_cast<std::underlying_type_t<E>>(e);
}

inline constexpr ThreadId kNoThread{0};

inline std::string to_string(ThreadId t) { return std::to_string(raw(t)); }
inline std::string to_string(CoreId c) { return std::to_string(raw(c)); }

class ThreadIdAllocator {
 public:
  ThreadId next() { return ThreadId{++last_}; }

 private:
  std::uint32_t last_ = 0;
};

}  // namespace multiverse
