#include "multiverse/sim/simulator.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

#include "multiverse/errors.hpp"
#include "multiverse/ros/runtime.hpp"
#include "multiverse/sim/hvm.hpp"
#include "multiverse/toolchain/fat_binary.hpp"
#include "multiverse/toolchain/override.hpp"

namespace multiverse::sim {

namespace {

using channel::Detail;
using channel::EventKind;

enum class CtxKind { Main, Worker, Partner, Hrt };
enum class Resume { None, SyscallResult, NestedStack };

const char* to_string(CtxKind k) {
  switch (k) {
    case CtxKind::Main:
      return "main";
    case CtxKind::Worker:
      return "worker";
    case CtxKind::Partner:
      return "partner";
    case CtxKind::Hrt:
      return "hrt";
  }
  return "?";
}

struct PendingTouch {
  std::uint64_t addr;
  mem::AccessKind access;
};

struct Context {
  ThreadId tid;
  CtxKind kind;
  const ThreadBody* body = nullptr;
  std::size_t pc = 0;
  bool done = false;
  std::uint64_t stack = 0;
  bool stack_ready = true;
  std::deque<PendingTouch> pending;
  Resume resume = Resume::None;
  std::optional<std::string> resume_bind;
  std::string nested_target;
  std::vector<ThreadId> children;

  bool hrt() const { return kind == CtxKind::Hrt; }
};

class Driver {
 public:
  Driver(const WorkloadProgram& program, const RunOptions& options)
      : program_(program),
        options_(options),
        hvm_(machine_config(options), options.cost, options.hrt),
        image_(hrt::link_image(hrt::kImageEntry, program.image_symbols())) {}

  RunResult run();

 private:
  static MachineConfig machine_config(const RunOptions& o) {
    MachineConfig c = o.machine;
    c.clock_hz = o.cost.clock_hz;
    return c;
  }
  bool multiverse() const { return options_.mode == Mode::Multiverse; }

  Context& add_context(ThreadId tid, CtxKind kind, const ThreadBody* body,
                       std::uint64_t stack);
  Context& context(ThreadId tid);
  bool ready(const Context& c);
  bool children_done(const Context& c);
  void step(Context& c);
  void step_ros(Context& c);
  void step_hrt(Context& c);
  void execute(Context& c, const Action& a);
  void do_syscall(Context& c, const Action& a, channel::SyscallRequest req,
                  const char* src);
  void spawn_native(Context& parent, const std::string& body, bool joinable);
  void fail(const Context& c, const std::string& why);
  std::uint64_t eval(const Context& c, const Operand& o, std::size_t line) const;
  std::vector<std::uint64_t> eval_all(const Context& c, const Action& a) const;
  void bind(const std::optional<std::string>& var, std::uint64_t value);
  [[noreturn]] void deadlock();

  const WorkloadProgram& program_;
  const RunOptions& options_;
  Hvm hvm_;
  hrt::AeroKernelImage image_;
  std::deque<Context> ctxs_;
  std::map<ThreadId, std::size_t> index_;
  std::map<std::string, std::uint64_t> vars_;
  std::map<std::string, std::deque<ThreadId>> unjoined_;
  bool failed_ = false;
  std::string failure_;
};

Context& Driver::add_context(ThreadId tid, CtxKind kind, const ThreadBody* body,
                             std::uint64_t stack) {
  Context c;
  c.tid = tid;
  c.kind = kind;
  c.body = body;
  c.stack = stack;
  index_[tid] = ctxs_.size();
  ctxs_.push_back(std::move(c));
  return ctxs_.back();
}

Context& Driver::context(ThreadId tid) { return ctxs_[index_.at(tid)]; }

bool Driver::children_done(const Context& c) {
  return std::all_of(c.children.begin(), c.children.end(),
                     [&](ThreadId t) { return context(t).done; });
}

bool Driver::ready(const Context& c) {
  if (c.done) return false;
  auto& ros = hvm_.ros;
  if (c.kind == CtxKind::Partner) {
    const ros::RosThread& p = ros.thread(c.tid);
    switch (p.phase) {
      case ros::PartnerPhase::AllocStack:
      case ros::PartnerPhase::RequestCreate:
        return true;
      case ros::PartnerPhase::Serving:
        return hvm_.channel.has_injected(c.tid) || p.exit_bit;
      case ros::PartnerPhase::Done:
        return false;
    }
    return false;
  }
  if (c.hrt()) {
    if (hvm_.hrt.thread(c.tid).status == hrt::HrtThreadStatus::BlockedOnEvent) {
      return false;
    }
  } else {
    const ros::RosThread& t = ros.thread(c.tid);
    if (t.status == ros::RosStatus::BlockedJoin) {
      return ros.thread(*t.join_target).status == ros::RosStatus::Exited;
    }
    if (!c.stack_ready) return true;
  }
  if (!c.pending.empty() || c.resume != Resume::None) return true;
  if (c.body->actions[c.pc].kind != ActionKind::Exit) return true;
  if (c.kind == CtxKind::Main) {
    return std::all_of(ctxs_.begin(), ctxs_.end(), [&](const Context& o) {
      return o.tid == c.tid || o.done;
    });
  }
  return children_done(c);
}

void Driver::fail(const Context& c, const std::string& why) {
  failed_ = true;
  std::string where;
  if (c.body != nullptr && c.pc < c.body->actions.size()) {
    where = " (`" + c.body->name + "` line " +
            std::to_string(c.body->actions[c.pc].line) + ")";
  }
  failure_ = "thread " + to_string(c.tid) + where + ": " + why;
}

std::uint64_t Driver::eval(const Context& c, const Operand& o,
                           std::size_t line) const {
  switch (o.kind) {
    case Operand::Kind::Literal:
      return o.value;
    case Operand::Kind::Var: {
      if (o.name == "stack") return c.stack + o.value;
      auto it = vars_.find(o.name);
      if (it == vars_.end()) {
        throw UsageError("line " + std::to_string(line) + ": variable `@" +
                         o.name + "` is not bound yet");
      }
      return it->second + o.value;
    }
    case Operand::Kind::FuncRef: {
      auto it = image_.symbols.find(o.name);
      if (it == image_.symbols.end()) {
        throw SymbolError("no AeroKernel symbol `" + o.name + "`");
      }
      return it->second.value();
    }
  }
  return 0;
}

std::vector<std::uint64_t> Driver::eval_all(const Context& c, const Action& a) const {
  std::vector<std::uint64_t> out;
  for (const Operand& o : a.args) out.push_back(eval(c, o, a.line));
  return out;
}

void Driver::bind(const std::optional<std::string>& var, std::uint64_t value) {
  if (var) vars_[*var] = value;
}

void Driver::step(Context& c) {
  if (c.kind == CtxKind::Partner) {
    auto& ros = hvm_.ros;
    switch (ros.step_partner(c.tid)) {
      case ros::PartnerStep::CreatedHrtThread: {
        const ros::RosThread& p = ros.thread(c.tid);
        add_context(*p.hrt_thread, CtxKind::Hrt, program_.find(p.function),
                    hvm_.hrt.thread(*p.hrt_thread).stack_base.value());
        break;
      }
      case ros::PartnerStep::Exited:
        c.done = true;
        break;
      default:
        break;
    }
    return;
  }
  if (c.hrt()) {
    step_hrt(c);
  } else {
    step_ros(c);
  }
}

void Driver::step_ros(Context& c) {
  auto& ros = hvm_.ros;
  if (ros.thread(c.tid).status == ros::RosStatus::BlockedJoin) {
    ros.poll_join(c.tid);
    ++c.pc;
    return;
  }
  if (!c.stack_ready) {
    ros.allocate_native_stack(c.tid);
    c.stack = ros.thread(c.tid).stack_region->base;
    c.stack_ready = true;
    return;
  }
  if (!c.pending.empty()) {
    const PendingTouch t = c.pending.front();
    if (!ros.access(c.tid, mem::VirtAddr::from(t.addr), t.access)) {
      fail(c, "segmentation fault at " + mem::to_hex(t.addr));
      return;
    }
    c.pending.pop_front();
    return;
  }
  execute(c, c.body->actions[c.pc]);
}

void Driver::step_hrt(Context& c) {
  auto& hrt = hvm_.hrt;
  hrt::HrtThread& t = hrt.thread(c.tid);
  if (c.resume == Resume::SyscallResult) {
    bind(c.resume_bind, t.last_result.value_or(0));
    c.resume = Resume::None;
    c.resume_bind.reset();
    ++c.pc;
  } else if (c.resume == Resume::NestedStack) {
    const auto base = static_cast<std::int64_t>(t.last_result.value_or(0));
    c.resume = Resume::None;
    if (base < 0) {
      fail(c, "no stack for nested thread `" + c.nested_target + "`");
      return;
    }
    const ThreadId child = hrt.create_nested_thread(
        c.tid, c.nested_target, mem::VirtAddr::from(static_cast<std::uint64_t>(base)),
        hvm_.cost.syscall_base, "clone");
    c.children.push_back(child);
    add_context(child, CtxKind::Hrt, program_.find(c.nested_target),
                static_cast<std::uint64_t>(base));
    ++c.pc;
  }
  if (!c.pending.empty()) {
    const PendingTouch p = c.pending.front();
    switch (hrt.access(c.tid, mem::VirtAddr::from(p.addr), p.access)) {
      case hrt::AccessOutcome::Done:
        c.pending.pop_front();
        break;
      case hrt::AccessOutcome::Blocked:
        break;
      case hrt::AccessOutcome::Failed:
        fail(c, "segmentation fault at " + mem::to_hex(p.addr));
        break;
    }
    return;
  }
  execute(c, c.body->actions[c.pc]);
}

void Driver::do_syscall(Context& c, const Action& a, channel::SyscallRequest req,
                        const char* src) {
  Detail tags{{"src", src}};
  if (c.hrt()) {
    hvm_.hrt.handle_syscall(c.tid, std::move(req), std::move(tags));
    c.resume = Resume::SyscallResult;
    c.resume_bind = a.bind;
    return;
  }
  const std::int64_t v = hvm_.ros.syscall(c.tid, req, std::move(tags));
  bind(a.bind, static_cast<std::uint64_t>(v));
  ++c.pc;
}

void Driver::spawn_native(Context& parent, const std::string& body, bool joinable) {
  const ThreadId tid = hvm_.ros.spawn_native(parent.tid, body);
  Context& w = add_context(tid, CtxKind::Worker, program_.find(body), 0);
  w.stack_ready = false;
  if (joinable) {
    unjoined_[body].push_back(tid);
  } else {
    context(parent.tid).children.push_back(tid);
  }
}

void Driver::execute(Context& c, const Action& a) {
  auto& ros = hvm_.ros;
  auto& hrt = hvm_.hrt;
  auto& log = hvm_.channel.log();

  switch (a.kind) {
    case ActionKind::Compute:
      log.charge(EventKind::Compute, c.tid, {}, a.cycles);
      ++c.pc;
      return;

    case ActionKind::Mmap:
      do_syscall(c, a,
                 {"mmap", {a.length, a.populate ? 1u : 0u, a.writable ? 1u : 0u}},
                 "app");
      return;

    case ActionKind::Munmap:
      do_syscall(c, a, {"munmap", eval_all(c, a)}, "app");
      return;

    case ActionKind::Syscall:
      do_syscall(c, a, {a.name, eval_all(c, a)}, "app");
      return;

    case ActionKind::Touch: {
      const std::uint64_t addr = eval(c, a.args[0], a.line);
      if (!mem::VirtAddr::is_canonical(addr)) {
        fail(c, "non-canonical address " + mem::to_hex(addr));
        return;
      }
      const auto va = mem::VirtAddr::from(addr);
      if (c.hrt()) {
        switch (hrt.access(c.tid, va, a.access)) {
          case hrt::AccessOutcome::Done:
            ++c.pc;
            break;
          case hrt::AccessOutcome::Blocked:
            break;
          case hrt::AccessOutcome::Failed:
            fail(c, "segmentation fault at " + mem::to_hex(addr));
            break;
        }
      } else if (ros.access(c.tid, va, a.access)) {
        ++c.pc;
      } else {
        fail(c, "segmentation fault at " + mem::to_hex(addr));
      }
      return;
    }

    case ActionKind::Spawn:
      if (multiverse()) {
        const ThreadId partner = ros.spawn_hrt(c.tid, a.name);
        add_context(partner, CtxKind::Partner, nullptr, 0);
        unjoined_[a.name].push_back(partner);
      } else {
        spawn_native(c, a.name, c.kind == CtxKind::Main);
      }
      ++c.pc;
      return;

    case ActionKind::SpawnNested:
      if (c.hrt()) {
        hrt.handle_syscall(
            c.tid, {"mmap", {ros::kDefaultStackSize, 0, 1}}, Detail{{"src", "runtime"}});
        c.resume = Resume::NestedStack;
        c.nested_target = a.name;
        return;
      }
      spawn_native(c, a.name, false);
      ++c.pc;
      return;

    case ActionKind::Join: {
      auto& q = unjoined_[a.name];
      if (q.empty()) throw UsageError("join of `" + a.name + "` with nothing to join");
      const ThreadId target = q.front();
      q.pop_front();
      if (ros.join(c.tid, target)) ++c.pc;
      return;
    }

    case ActionKind::CallOverride: {
      const std::vector<std::uint64_t> args = eval_all(c, a);
      std::string thread_fn;
      for (const Operand& o : a.args) {
        if (o.kind == Operand::Kind::FuncRef && program_.find(o.name)) {
          thread_fn = o.name;
          break;
        }
      }
      const bool is_create = a.name == "pthread_create";

      if (c.hrt()) {
        const auto r = toolchain::invoke_override(hrt, options_.overrides, a.name,
                                                  args, c.tid);
        if (r.outcome == toolchain::OverrideOutcome::FellThrough) {
          if (is_create) {
            hrt.handle_syscall(c.tid, {"mmap", {ros::kDefaultStackSize, 0, 1}},
                               Detail{{"src", "runtime"}});
            c.resume = Resume::NestedStack;
            c.nested_target = thread_fn;
            return;
          }
          do_syscall(c, a, {"legacy:" + a.name, args}, "app");
          return;
        }
        if (r.starts_thread) {
          if (thread_fn.empty()) {
            throw UsageError("line " + std::to_string(a.line) +
                             ": thread start without an &<thread> argument");
          }
          const mem::PhysFrame f = hvm_.machine.memory().allocate(mem::FrameOwner::HrtOnly);
          const auto stack = mem::VirtAddr::from(mem::kHigherHalfBase + f.base());
          const ThreadId child =
              hrt.create_nested_thread(c.tid, thread_fn, stack, 0, "override");
          c.children.push_back(child);
          add_context(child, CtxKind::Hrt, program_.find(thread_fn), stack.value());
        }
        if (const auto* fn = hrt.functions().find(r.aero)) {
          for (std::uint64_t addr : fn->behavior.touches) {
            c.pending.push_back(PendingTouch{addr, mem::AccessKind::Write});
          }
        }
        bind(a.bind, r.value);
        ++c.pc;
        return;
      }

      // ROS context: only thread creation is interposed; everything else is
      // the legacy library call.
      if (is_create) {
        const toolchain::OverrideEntry* e = options_.overrides.find(a.name);
        if (multiverse() && e != nullptr && e->enabled) {
          toolchain::invoke_override(hrt, options_.overrides, a.name, args, c.tid);
          const ThreadId partner = ros.spawn_hrt(c.tid, thread_fn);
          add_context(partner, CtxKind::Partner, nullptr, 0);
          unjoined_[thread_fn].push_back(partner);
        } else {
          spawn_native(c, thread_fn, c.kind == CtxKind::Main);
        }
        bind(a.bind, 0);
        ++c.pc;
        return;
      }
      do_syscall(c, a, {"legacy:" + a.name, args}, "app");
      return;
    }

    case ActionKind::SyncCall: {
      const std::vector<std::uint64_t> args = eval_all(c, a);
      if (!multiverse()) {
        hrt::FunctionBehavior b;
        if (auto it = program_.functions.find(a.name); it != program_.functions.end()) {
          b = it->second;
        } else if (auto bt = hrt::builtin_functions().find(a.name);
                   bt != hrt::builtin_functions().end()) {
          b = bt->second;
        }
        log.charge(EventKind::FunctionExec, c.tid,
                   Detail{{"fn", a.name}, {"fn_cycles", std::to_string(b.cycles)}},
                   b.cycles);
        bind(a.bind, b.returns);
        ++c.pc;
        return;
      }
      auto ep = hvm_.channel.endpoint_for(c.tid);
      if (!ep || !hvm_.channel.is_active(*ep)) {
        const std::int64_t base =
            ros.syscall(c.tid, {"mmap", {mem::kPageSize, 1, 1}}, Detail{{"src", "runtime"}});
        if (base < 0) {
          fail(c, "no memory for the synchronous call page");
          return;
        }
        const auto hrt_cores = hrt.booted_cores();
        const bool same = hvm_.machine.same_socket(ros.thread(c.tid).core, hrt_cores.at(0));
        ep = hvm_.channel.setup_sync(
            c.tid, mem::VirtAddr::from(static_cast<std::uint64_t>(base)), same);
      }
      const auto* fn = hrt.functions().find(a.name);
      const std::uint64_t v =
          hvm_.channel.sync_invoke(*ep, channel::FunctionRef{a.name, fn->addr}, args);
      bind(a.bind, v);
      ++c.pc;
      return;
    }

    case ActionKind::Exit:
      switch (c.kind) {
        case CtxKind::Main:
          ros.process_exit(c.tid);
          break;
        case CtxKind::Worker:
          ros.exit_thread(c.tid);
          break;
        case CtxKind::Hrt:
          hrt.thread_exit(c.tid);
          break;
        case CtxKind::Partner:
          break;
      }
      c.done = true;
      return;
  }
}

void Driver::deadlock() {
  std::ostringstream out;
  out << "deadlock: no context can make progress\n";
  for (const Context& c : ctxs_) {
    if (c.done) continue;
    out << "  thread " << to_string(c.tid) << " [" << to_string(c.kind) << "]";
    if (c.body != nullptr) {
      out << " `" << c.body->name << "` at line " << c.body->actions[c.pc].line;
    }
    out << '\n';
  }
  for (const auto& ev : hvm_.channel.outstanding()) {
    out << "  outstanding " << channel::to_string(ev.kind) << " from thread "
        << to_string(ev.origin) << " to partner " << to_string(ev.endpoint)
        << " requested at cycle " << ev.request_cycle << '\n';
  }
  throw DeadlockError(out.str());
}

RunResult Driver::run() {
  if (multiverse()) {
    if (options_.symbol_cache) hvm_.hrt.set_symbol_cache(&hvm_.cache);
    const auto fat = build_fat_binary(program_);
    ros::init_runtime(hvm_.ros, hvm_.hrt, fat, program_.behaviors());
  }
  add_context(hvm_.ros.main(), CtxKind::Main, &program_.main(), ros::kRegionBase);

  std::size_t steps = 0;
  auto main_done = [&] { return ctxs_.front().done; };
  while (!main_done() && !failed_) {
    if (options_.policy != nullptr) {
      std::vector<ThreadId> ready_ids;
      for (int pass = 0; pass < 2; ++pass) {
        for (const Context& c : ctxs_) {
          if (c.hrt() == (pass == 1) && ready(c)) ready_ids.push_back(c.tid);
        }
      }
      if (ready_ids.empty()) deadlock();
      const std::size_t i = options_.policy->pick(ready_ids);
      step(context(ready_ids.at(i)));
      ++steps;
    } else {
      std::vector<ThreadId> round;
      for (int pass = 0; pass < 2; ++pass) {
        for (const Context& c : ctxs_) {
          if (c.hrt() == (pass == 1)) round.push_back(c.tid);
        }
      }
      bool progressed = false;
      for (ThreadId tid : round) {
        Context& c = context(tid);
        if (!ready(c)) continue;
        step(c);
        ++steps;
        progressed = true;
        if (failed_ || main_done()) break;
      }
      if (!progressed) deadlock();
    }
    if (steps > options_.max_steps) {
      throw SimError("step limit of " + std::to_string(options_.max_steps) +
                     " exceeded");
    }
  }

  RunResult r;
  r.mode = options_.mode;
  r.ok = !failed_;
  r.failure = failure_;
  r.log = hvm_.channel.log().entries();
  r.report = summarize(r.log, options_.mode, options_.cost.clock_hz);
  r.output = hvm_.ros.output();
  r.steps = steps;
  return r;
}

}  // namespace

std::string RunResult::log_text() const {
  std::string out;
  for (const auto& e : log) {
    out += channel::format_log_line(e);
    out += '\n';
  }
  return out;
}

RunResult run(const WorkloadProgram& program, const RunOptions& options) {
  options.cost.validate();
  Driver d(program, options);
  return d.run();
}

std::vector<std::uint8_t> build_fat_binary(const WorkloadProgram& program,
                                           const std::string& app_name) {
  const auto image = hrt::link_image(hrt::kImageEntry, program.image_symbols());
  return toolchain::embed(toolchain::AppDescriptor{app_name, "workload"}, image);
}

}  // namespace multiverse::sim
