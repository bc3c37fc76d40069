#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multiverse/common.hpp"
#include "multiverse/hrt/image.hpp"
#include "multiverse/mem/address.hpp"

namespace multiverse::sim {

// A numeric literal, `@var[+n]` (value bound by an earlier `as var`, or the
// thread's own `@stack`), or `&name` (the AeroKernel address of a function).
struct Operand {
  enum class Kind { Literal, Var, FuncRef };
  Kind kind = Kind::Literal;
  std::uint64_t value = 0;  // literal value, or offset added to a variable
  std::string name;

  friend bool operator==(const Operand&, const Operand&) = default;
};

enum class ActionKind {
  Compute,
  Mmap,
  Munmap,
  Touch,
  Syscall,
  Spawn,
  SpawnNested,
  Join,
  CallOverride,
  SyncCall,
  Exit,
};

struct Action {
  ActionKind kind = ActionKind::Exit;
  std::size_t line = 0;
  Cycles cycles = 0;            // compute
  std::uint64_t length = 0;     // mmap
  bool populate = false;        // mmap
  bool writable = true;         // mmap (`ro` clears it)
  mem::AccessKind access = mem::AccessKind::Read;  // touch
  std::string name;             // syscall, override, function or thread name
  std::vector<Operand> args;    // munmap/touch/syscall/override/sync_call
  std::optional<std::string> bind;

  friend bool operator==(const Action&, const Action&) = default;
};

enum class BodySide { Ros, Hrt };

struct ThreadBody {
  std::string name;
  BodySide side = BodySide::Ros;
  std::size_t line = 0;
  std::vector<Action> actions;  // `repeat` blocks are already unrolled
};

struct WorkloadProgram {
  std::map<std::string, hrt::FunctionBehavior> functions;  // `func` lines
  std::vector<ThreadBody> bodies;

  const ThreadBody* find(const std::string& name) const;
  const ThreadBody& main() const;
  // Every AeroKernel symbol the program needs: built-ins, declared functions
  // and HRT thread bodies.
  std::vector<std::string> image_symbols() const;
  // Declared behaviors plus a zero-cost entry for each HRT body.
  std::map<std::string, hrt::FunctionBehavior> behaviors() const;
};

// Line-oriented DSL:
//   func <name> [cycles=<n>] [ret=<n>] [touch=<addr>]...
//   thread <name> ros|hrt
//     compute <cycles>
//     mmap <len> [populate] [ro] [as <var>]
//     munmap <addr> <len>
//     touch <addr> r|w|x
//     syscall <name> <operands...> [as <var>]
//     spawn <thread>            (ROS bodies; target is an HRT body)
//     spawn_nested <thread>     (HRT bodies)
//     join <thread>             (main only; joins the oldest unjoined spawn)
//     call_override <name> <operands...> [as <var>]
//     sync_call <function> <operands...> [as <var>]   (ROS bodies)
//     repeat <n> ... done
//     exit
//   end
// `#` starts a comment. Errors raise ParseError with the 1-based line.
WorkloadProgram parse_workload(std::string_view text);

const char* to_string(ActionKind k);

}  // namespace multiverse::sim
