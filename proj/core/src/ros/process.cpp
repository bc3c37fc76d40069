#include "multiverse/ros/process.hpp"

#include <algorithm>

#include "multiverse/errors.hpp"

namespace multiverse::ros {

using channel::Detail;
using channel::EventKind;

namespace {

std::uint64_t round_up(std::uint64_t len) {
  return (len + mem::kPageSize - 1) & ~(mem::kPageSize - 1);
}

std::string join_args(std::span<const std::uint64_t> args) {
  if (args.empty()) return "none";
  std::string out;
  for (std::uint64_t a : args) {
    if (!out.empty()) out += '/';
    out += std::to_string(a);
  }
  return out;
}

std::string signed_str(std::int64_t v) { return std::to_string(v); }

// Opaque stand-ins for the user code and data descriptors mirrored into the
// HRT as part of the thread superposition.
constexpr std::uint64_t kGdtCode = 0x00AF'9B00'0000'FFFFULL;
constexpr std::uint64_t kGdtData = 0x00CF'9300'0000'FFFFULL;

}  // namespace

const char* to_string(RosRole r) {
  switch (r) {
    case RosRole::Main:
      return "main";
    case RosRole::Partner:
      return "partner";
    case RosRole::Worker:
      return "worker";
  }
  return "?";
}

const char* to_string(RosStatus s) {
  switch (s) {
    case RosStatus::Runnable:
      return "Runnable";
    case RosStatus::BlockedJoin:
      return "BlockedJoin";
    case RosStatus::Exited:
      return "Exited";
  }
  return "?";
}

RosProcess::RosProcess(sim::Machine& machine, channel::Channel& channel,
                       ThreadIdAllocator& ids, std::uint32_t pid)
    : machine_(machine),
      channel_(channel),
      ids_(ids),
      pid_(pid),
      space_(machine.memory(), mem::FrameOwner::RosVisible),
      ros_cores_(machine.cores_in(sim::Partition::RosCore)) {
  if (ros_cores_.empty()) throw PartitionError("machine has no ROS cores");
  main_ = add_thread(RosRole::Main, "main").tid;
  if (sys_mmap(kProgramImageSize, true, true) < 0) {
    throw AllocationError("no ROS memory for the program image");
  }
}

RosThread& RosProcess::add_thread(RosRole role, const std::string& function) {
  RosThread t;
  t.tid = ids_.next();
  t.role = role;
  t.function = function;
  t.core = ros_cores_[placed_++ % ros_cores_.size()];
  const ThreadId tid = t.tid;
  return threads_.emplace(tid, std::move(t)).first->second;
}

RosThread& RosProcess::thread(ThreadId tid) {
  auto it = threads_.find(tid);
  if (it == threads_.end()) throw UsageError("no ROS thread " + to_string(tid));
  return it->second;
}

const RosThread& RosProcess::thread(ThreadId tid) const {
  auto it = threads_.find(tid);
  if (it == threads_.end()) throw UsageError("no ROS thread " + to_string(tid));
  return it->second;
}

const Region* RosProcess::region_of(std::uint64_t addr) const {
  auto it = regions_.upper_bound(addr);
  if (it == regions_.begin()) return nullptr;
  --it;
  return it->second.contains(addr) ? &it->second : nullptr;
}

// ---- syscall model --------------------------------------------------------------

std::int64_t RosProcess::sys_mmap(std::uint64_t length, bool populate,
                                  bool writable, std::uint64_t* pages_populated) {
  if (pages_populated != nullptr) *pages_populated = 0;
  if (length == 0) return kEINVAL;
  if (length > mem::kLowerHalfEnd) return kENOMEM;
  const std::uint64_t len = round_up(length);
  const std::uint64_t base = next_base_;
  if (len > mem::kLowerHalfEnd - base) return kENOMEM;

  if (populate) {
    auto& memory = machine_.memory();
    std::uint64_t mapped = 0;
    try {
      for (; mapped < len / mem::kPageSize; ++mapped) {
        const mem::PhysFrame f = memory.allocate(mem::FrameOwner::RosVisible);
        space_.map_page(mem::VirtAddr::from(base + mapped * mem::kPageSize), f,
                        writable);
      }
    } catch (const AllocationError&) {
      for (std::uint64_t i = 0; i < mapped; ++i) {
        if (auto f = space_.unmap_page(
                mem::VirtAddr::from(base + i * mem::kPageSize))) {
          memory.release(*f);
        }
      }
      return kENOMEM;
    }
    if (pages_populated != nullptr) *pages_populated = mapped;
  }
  regions_.emplace(base, Region{base, len, populate, writable});
  next_base_ = base + len;
  return static_cast<std::int64_t>(base);
}

std::int64_t RosProcess::sys_munmap(std::uint64_t base, std::uint64_t length) {
  if (length == 0 || (base & (mem::kPageSize - 1)) != 0) return kEINVAL;
  if (base >= mem::kLowerHalfEnd || length > mem::kLowerHalfEnd - base) {
    return kEINVAL;
  }
  const std::uint64_t end = base + round_up(length);

  std::vector<Region> hit;
  for (const auto& [b, r] : regions_) {
    if (r.base < end && base < r.end()) hit.push_back(r);
  }
  if (hit.empty()) return kEINVAL;

  for (const Region& r : hit) {
    regions_.erase(r.base);
    if (r.base < base) {
      Region left = r;
      left.length = base - r.base;
      regions_.emplace(left.base, left);
    }
    if (end < r.end()) {
      Region right = r;
      right.base = end;
      right.length = r.end() - end;
      regions_.emplace(right.base, right);
    }
  }

  std::vector<mem::VirtAddr> present;
  space_.for_each_mapping([&](mem::VirtAddr v, const mem::PageTableEntry&) {
    if (v.value() >= base && v.value() < end) present.push_back(v);
  });
  for (mem::VirtAddr v : present) {
    if (auto f = space_.unmap_page(v)) machine_.memory().release(*f);
  }
  return 0;
}

SyscallOutcome RosProcess::execute_syscall(const channel::SyscallRequest& req) {
  const auto& cost = channel_.cost();
  SyscallOutcome out;
  out.service = cost.syscall_base;
  const auto& a = req.args;

  if (req.name == "write") {
    if (a.size() < 3) {
      out.value = kEINVAL;
    } else {
      output_ += "fd=" + std::to_string(a[0]) + " buf=" + mem::to_hex(a[1]) +
                 " len=" + std::to_string(a[2]) + "\n";
      out.value = static_cast<std::int64_t>(a[2]);
    }
  } else if (req.name == "getpid") {
    out.value = pid_;
  } else if (req.name == "mmap") {
    if (a.empty()) {
      out.value = kEINVAL;
    } else {
      std::uint64_t pages = 0;
      out.value = sys_mmap(a[0], a.size() > 1 && a[1] != 0,
                           a.size() < 3 || a[2] != 0, &pages);
      out.service += pages * cost.pagefault_base;
      if (pages > 0) out.tags.add("populate", pages);
    }
  } else if (req.name == "munmap") {
    out.value = a.size() < 2 ? kEINVAL : sys_munmap(a[0], a[1]);
  } else if (req.name.rfind("legacy:", 0) == 0) {
    out.value = 0;
  } else {
    out.value = kENOSYS;
  }
  return out;
}

FaultOutcome RosProcess::handle_fault(mem::VirtAddr addr, mem::AccessKind access) {
  const Region* r = region_of(addr.value());
  if (r == nullptr) return FaultOutcome::Segfault;
  if (access == mem::AccessKind::Write && !r->writable) return FaultOutcome::Segfault;
  if (auto leaf = space_.leaf(addr); leaf && leaf->present) {
    return FaultOutcome::AlreadyPresent;
  }
  const mem::PhysFrame f = machine_.memory().allocate(mem::FrameOwner::RosVisible);
  space_.map_page(addr.page_base(), f, r->writable);
  return FaultOutcome::Mapped;
}

// ---- charged local operations ---------------------------------------------------

std::int64_t RosProcess::syscall(ThreadId caller,
                                 const channel::SyscallRequest& req,
                                 Detail tags) {
  SyscallOutcome out = execute_syscall(req);
  Detail d{{"nr", req.name}, {"args", join_args(req.args)}};
  d.add("ret", signed_str(out.value));
  d.append(out.tags);
  d.append(tags);
  channel_.log().charge(EventKind::Syscall, caller, std::move(d), out.service);
  return out.value;
}

bool RosProcess::access(ThreadId caller, mem::VirtAddr addr,
                        mem::AccessKind kind) {
  const mem::Translation t = space_.translate(control(), addr, kind);
  if (!mem::faulted(t)) return true;
  const auto& fault = std::get<mem::FaultInfo>(t);
  const FaultOutcome outcome = handle_fault(addr, kind);
  Detail d{{"addr", mem::to_hex(addr.value())},
           {"access", std::string(1, mem::access_letter(kind))},
           {"reason", fault.reason == mem::FaultReason::NotPresent ? "np"
                      : fault.reason == mem::FaultReason::WriteProtect ? "wp"
                                                                       : "priv"}};
  if (outcome == FaultOutcome::Segfault) {
    d.add("state", "segv").add("fail", "segfault");
  } else {
    d.add("state", outcome == FaultOutcome::Mapped ? "mapped" : "present");
  }
  channel_.log().charge(EventKind::PageFault, caller, std::move(d),
                        channel_.cost().pagefault_base);
  return outcome != FaultOutcome::Segfault;
}

void RosProcess::charge_runtime_mmap(ThreadId tid, std::uint64_t length,
                                     Region& out) {
  const std::int64_t base = sys_mmap(length, false, true);
  if (base < 0) throw AllocationError("no address space for a thread stack");
  out = *region_of(static_cast<std::uint64_t>(base));
  channel_.log().charge(EventKind::Syscall, tid,
                        Detail{{"nr", "mmap"},
                               {"args", std::to_string(length) + "/0/1"},
                               {"ret", signed_str(base)},
                               {"src", "runtime"}},
                        channel_.cost().syscall_base);
}

// ---- execution groups -------------------------------------------------------------

ThreadId RosProcess::spawn_hrt(ThreadId caller, const std::string& function) {
  if (hrt_ == nullptr || !hrt_->booted()) {
    throw LifecycleError("spawn before the Multiverse runtime is initialized");
  }
  if (thread(caller).status == RosStatus::Exited) {
    throw LifecycleError("spawn from exited thread " + to_string(caller));
  }
  if (hrt_->functions().find(function) == nullptr) {
    throw SymbolError("unknown HRT function `" + function + "`");
  }
  return add_thread(RosRole::Partner, function).tid;
}

PartnerStep RosProcess::step_partner(ThreadId partner) {
  RosThread& p = thread(partner);
  if (p.role != RosRole::Partner) {
    throw UsageError("thread " + to_string(partner) + " is not a partner");
  }
  switch (p.phase) {
    case PartnerPhase::AllocStack: {
      Region stack;
      charge_runtime_mmap(partner, kDefaultStackSize, stack);
      p.stack_region = stack;
      p.phase = PartnerPhase::RequestCreate;
      return PartnerStep::AllocatedStack;
    }
    case PartnerPhase::RequestCreate: {
      channel_.register_endpoint(partner);
      const auto* fn = hrt_->functions().find(p.function);
      const std::uint64_t stack = p.stack_region->base;
      channel::AsyncCallPayload call;
      call.func = fn->addr;
      call.action = channel::AsyncAction::CreateThread;
      call.args = {stack, stack, raw(partner), kGdtCode, kGdtData};
      const std::uint64_t ret = channel_.hypercall(
          partner, channel::Side::Ros, channel::Hypercall::async_call(call));
      const ThreadId hrt_tid{static_cast<std::uint32_t>(ret)};
      p.hrt_thread = hrt_tid;
      partners_[hrt_tid] = partner;
      p.phase = PartnerPhase::Serving;
      return PartnerStep::CreatedHrtThread;
    }
    case PartnerPhase::Serving: {
      if (channel_.has_injected(partner)) {
        serve_forwarded(partner, channel_.take_injected(partner));
        return PartnerStep::Served;
      }
      if (!p.exit_bit) return PartnerStep::Idle;
      channel_.unregister_endpoint(partner);
      partners_.erase(*p.hrt_thread);
      p.status = RosStatus::Exited;
      p.phase = PartnerPhase::Done;
      channel_.log().charge(EventKind::PartnerExit, partner,
                            Detail{{"hrt", to_string(*p.hrt_thread)}}, 0);
      return PartnerStep::Exited;
    }
    case PartnerPhase::Done:
      return PartnerStep::Idle;
  }
  return PartnerStep::Idle;
}

void RosProcess::serve_forwarded(ThreadId partner, const channel::EventRecord& ev) {
  RosThread& p = thread(partner);
  if (ev.endpoint != partner) {
    throw ProtocolError("event " + std::to_string(raw(ev.id)) +
                        " injected into the wrong partner");
  }
  const auto& cost = channel_.cost();
  switch (ev.kind) {
    case EventKind::PageFault: {
      const auto& f = std::get<mem::FaultInfo>(ev.detail);
      FaultOutcome outcome = FaultOutcome::AlreadyPresent;
      if (mem::faulted(space_.translate(control(), f.addr, f.access))) {
        outcome = handle_fault(f.addr, f.access);
      }
      if (outcome == FaultOutcome::Segfault) {
        channel_.complete_event(ev.id, static_cast<std::uint64_t>(kEFAULT),
                                cost.pagefault_base,
                                Detail{{"state", "segv"}, {"fail", "segfault"}});
      } else {
        channel_.complete_event(
            ev.id, 0, cost.pagefault_base,
            Detail{{"state", outcome == FaultOutcome::Mapped ? "mapped" : "present"}});
      }
      return;
    }
    case EventKind::Syscall: {
      const auto& req = std::get<channel::SyscallRequest>(ev.detail);
      SyscallOutcome out = execute_syscall(req);
      channel_.complete_event(ev.id, static_cast<std::uint64_t>(out.value),
                              out.service, std::move(out.tags));
      return;
    }
    case EventKind::ThreadExitSignal: {
      if (p.exit_bit) {
        throw LifecycleError("partner " + to_string(partner) +
                             " received a second exit signal");
      }
      p.exit_bit = true;
      channel_.complete_event(ev.id, 0, 0);
      return;
    }
    default:
      throw ProtocolError(std::string("partner cannot service ") +
                          channel::to_string(ev.kind) + " events");
  }
}

// ---- native threads -----------------------------------------------------------------

ThreadId RosProcess::spawn_native(ThreadId caller, const std::string& function) {
  if (thread(caller).status == RosStatus::Exited) {
    throw LifecycleError("spawn from exited thread " + to_string(caller));
  }
  const ThreadId tid = add_thread(RosRole::Worker, function).tid;
  channel_.log().charge(EventKind::ThreadCreate, tid,
                        Detail{{"fn", function},
                               {"kind", "native"},
                               {"parent", to_string(caller)},
                               {"via", "clone"}},
                        channel_.cost().syscall_base);
  return tid;
}

void RosProcess::allocate_native_stack(ThreadId worker) {
  RosThread& w = thread(worker);
  if (w.stack_region) throw LifecycleError("stack already allocated");
  Region stack;
  charge_runtime_mmap(worker, kDefaultStackSize, stack);
  w.stack_region = stack;
}

// ---- join / exit ----------------------------------------------------------------------

bool RosProcess::join(ThreadId caller, ThreadId target) {
  RosThread& c = thread(caller);
  if (c.role != RosRole::Main) {
    throw UsageError("only the main thread may join");
  }
  auto it = threads_.find(target);
  if (it == threads_.end() || it->second.role == RosRole::Main) {
    throw UsageError("thread " + to_string(target) + " is not joinable");
  }
  RosThread& t = it->second;
  if (t.joined) throw UsageError("thread " + to_string(target) + " already joined");
  t.joined = true;
  c.join_target = target;
  c.status = RosStatus::BlockedJoin;
  return poll_join(caller);
}

bool RosProcess::poll_join(ThreadId caller) {
  RosThread& c = thread(caller);
  if (c.status != RosStatus::BlockedJoin) return true;
  const RosThread& t = thread(*c.join_target);
  if (t.status != RosStatus::Exited) return false;
  Detail d{{"target", to_string(t.tid)}};
  if (t.hrt_thread) d.add("hrt", to_string(*t.hrt_thread));
  channel_.log().charge(EventKind::Join, caller, std::move(d), 0);
  c.status = RosStatus::Runnable;
  c.join_target.reset();
  return true;
}

void RosProcess::exit_thread(ThreadId tid) {
  RosThread& t = thread(tid);
  if (t.status == RosStatus::Exited) {
    throw LifecycleError("thread " + to_string(tid) + " already exited");
  }
  if (t.role == RosRole::Partner && !t.exit_bit) {
    throw LifecycleError("partner " + to_string(tid) +
                         " cannot exit before its HRT thread");
  }
  t.status = RosStatus::Exited;
  channel_.log().charge(EventKind::ThreadExit, tid,
                        Detail{{"kind", to_string(t.role)}}, 0);
}

void RosProcess::process_exit(ThreadId caller) {
  if (exited_) throw LifecycleError("process already exited");
  exited_ = true;
  RosThread& m = thread(main_);
  m.status = RosStatus::Exited;
  channel_.log().charge(EventKind::ProcessExit, caller,
                        Detail{{"pid", std::to_string(pid_)}}, 0);
  if (exit_hook_) exit_hook_(caller);
}

}  // namespace multiverse::ros
