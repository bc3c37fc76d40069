#include "multiverse/hrt/aerokernel.hpp"

#include <algorithm>
#include <stdexcept>

#include "multiverse/errors.hpp"

namespace multiverse::hrt {

using channel::Detail;
using channel::EventKind;

namespace {

std::string core_list(std::span<const CoreId> cores) {
  std::string out;
  for (CoreId c : cores) {
    if (!out.empty()) out += '/';
    out += to_string(c);
  }
  return out.empty() ? "none" : out;
}

}  // namespace

const char* to_string(CoreStatus s) {
  switch (s) {
    case CoreStatus::Offline:
      return "Offline";
    case CoreStatus::Booting:
      return "Booting";
    case CoreStatus::IdleEventLoop:
      return "IdleEventLoop";
    case CoreStatus::Running:
      return "Running";
  }
  return "?";
}

AeroKernel::AeroKernel(sim::Machine& machine, channel::Channel& channel,
                       ThreadIdAllocator& ids, HrtOptions options)
    : machine_(machine), channel_(channel), ids_(ids), options_(options) {
  for (CoreId id : machine_.cores_in(sim::Partition::HrtCore)) {
    HrtCoreState c;
    c.id = id;
    cores_.emplace(id, c);
  }
  channel_.attach(this);
  channel_.on_completion([this](const channel::EventRecord& ev) { deliver(ev); });
}

// ---- lifecycle --------------------------------------------------------------

void AeroKernel::install_image(const AeroKernelImage& image, ThreadId requester) {
  for (const auto& [id, c] : cores_) {
    if (c.status != CoreStatus::Offline) {
      throw InstallError("cannot install while HRT core " + to_string(id) +
                         " is " + hrt::to_string(c.status));
    }
  }
  if (image_) throw InstallError("an AeroKernel image is already installed");
  for (const auto& [name, addr] : image.symbols) {
    if (addr.lower()) {
      throw InstallError("symbol `" + name + "` lies outside the higher half");
    }
  }
  auto& memory = machine_.memory();
  const std::uint64_t frames =
      std::max<std::uint64_t>(1, (image.payload_size + mem::kPageSize - 1) /
                                     mem::kPageSize);
  if (frames > memory.free_frames(mem::FrameOwner::HrtOnly)) {
    throw InstallError("image of " + std::to_string(image.payload_size) +
                       " bytes does not fit in HRT-only memory");
  }
  image_frames_.clear();
  for (std::uint64_t i = 0; i < frames; ++i) {
    image_frames_.push_back(memory.allocate(mem::FrameOwner::HrtOnly).number);
  }
  image_ = image;
  if (cache_ != nullptr) cache_->clear();
  channel_.log().charge(EventKind::Install, requester,
                        Detail{{"entry", image.entry},
                               {"bytes", std::to_string(image.payload_size)},
                               {"frames", std::to_string(frames)}},
                        channel_.cost().hypercall);
}

void AeroKernel::boot(std::span<const CoreId> cores, ThreadId requester) {
  for (CoreId id : cores) {
    if (machine_.partition_of(id) != sim::Partition::HrtCore) {
      throw PartitionError("core " + to_string(id) +
                           " belongs to the ROS partition");
    }
  }
  if (!image_) throw BootError("no AeroKernel image installed");
  for (CoreId id : cores) {
    if (core_state(id).status != CoreStatus::Offline) {
      throw BootError("core " + to_string(id) + " is already booted");
    }
  }

  if (!space_) {
    auto& memory = machine_.memory();
    space_.emplace(memory, mem::FrameOwner::HrtOnly);
    mem::identity_map_higher_half(*space_, memory.frame_count());
    for (std::size_t i = 0; i < image_frames_.size(); ++i) {
      space_->map_page(mem::VirtAddr::from(kImageLinkBase + i * mem::kPageSize),
                       mem::PhysFrame{image_frames_[i], mem::FrameOwner::HrtOnly},
                       false);
    }
  }
  for (CoreId id : cores) {
    HrtCoreState& c = core_state(id);
    c.status = CoreStatus::Booting;
    c.recent_fault.reset();
    c.status = CoreStatus::IdleEventLoop;
  }
  channel_.log().charge(EventKind::Boot, requester,
                        Detail{{"cores", core_list(cores)}},
                        channel_.cost().hypercall);
}

void AeroKernel::boot_all(ThreadId requester) {
  std::vector<CoreId> ids;
  for (const auto& [id, c] : cores_) ids.push_back(id);
  boot(ids, requester);
}

void AeroKernel::reboot() {
  clear_threads();
  for (auto& [id, c] : cores_) {
    c.recent_fault.reset();
    c.current.reset();
    if (c.status != CoreStatus::Offline) c.status = CoreStatus::IdleEventLoop;
  }
  if (space_) {
    mem::PageTable& root = space_->root_table();
    for (std::size_t i = 0; i < mem::kLowerHalfEntries; ++i) root[i] = {};
  }
  ros_cr3_.reset();
}

void AeroKernel::shutdown(ThreadId requester) {
  clear_threads();
  for (auto& [id, c] : cores_) {
    c.status = CoreStatus::Offline;
    c.recent_fault.reset();
    c.current.reset();
  }
  for (std::uint64_t f : image_frames_) machine_.memory().release(f);
  image_frames_.clear();
  image_.reset();
  space_.reset();
  ros_cr3_.reset();
  if (cache_ != nullptr) cache_->clear();
  channel_.log().charge(EventKind::Shutdown, requester, {}, 0);
}

bool AeroKernel::booted() const {
  return std::any_of(cores_.begin(), cores_.end(), [](const auto& kv) {
    return kv.second.status != CoreStatus::Offline;
  });
}

const HrtCoreState& AeroKernel::core(CoreId id) const {
  auto it = cores_.find(id);
  if (it == cores_.end()) {
    throw PartitionError("core " + to_string(id) + " is not an HRT core");
  }
  return it->second;
}

HrtCoreState& AeroKernel::core_state(CoreId id) {
  return const_cast<HrtCoreState&>(std::as_const(*this).core(id));
}

std::vector<HrtCoreState> AeroKernel::cores() const {
  std::vector<HrtCoreState> out;
  for (const auto& [id, c] : cores_) out.push_back(c);
  return out;
}

std::vector<CoreId> AeroKernel::booted_cores() const {
  std::vector<CoreId> out;
  for (const auto& [id, c] : cores_) {
    if (c.status == CoreStatus::IdleEventLoop || c.status == CoreStatus::Running) {
      out.push_back(id);
    }
  }
  return out;
}

// ---- functions ----------------------------------------------------------------

mem::VirtAddr AeroKernel::resolve_symbol(const std::string& name,
                                         ThreadId origin) {
  const FunctionTable::Entry* entry = functions_.find(name);
  if (entry == nullptr) throw SymbolError("unknown AeroKernel symbol `" + name + "`");
  const auto& cost = channel_.cost();
  if (cache_ == nullptr) {
    channel_.log().charge(EventKind::SymbolLookup, origin,
                          Detail{{"sym", name}, {"cache", "off"}},
                          cost.symbol_lookup);
    return entry->addr;
  }
  if (auto hit = cache_->find(name)) {
    if (*hit != entry->addr) {
      throw std::logic_error("symbol cache incoherent for `" + name + "`");
    }
    channel_.log().charge(EventKind::SymbolLookup, origin,
                          Detail{{"sym", name}, {"cache", "hit"}}, cost.cache_hit);
    return *hit;
  }
  cache_->insert(name, entry->addr);
  channel_.log().charge(EventKind::SymbolLookup, origin,
                        Detail{{"sym", name}, {"cache", "miss"}},
                        cost.symbol_lookup);
  return entry->addr;
}

std::uint64_t AeroKernel::run_function(const std::string& name, ThreadId origin,
                                       Cycles extra_cycles) {
  const FunctionTable::Entry* entry = functions_.find(name);
  if (entry == nullptr) throw SymbolError("unknown AeroKernel symbol `" + name + "`");
  channel_.log().charge(EventKind::FunctionExec, origin,
                        Detail{{"fn", name},
                               {"fn_cycles", std::to_string(entry->behavior.cycles)}},
                        entry->behavior.cycles + extra_cycles);
  return entry->behavior.returns;
}

// ---- address space ------------------------------------------------------------

mem::AddressSpace& AeroKernel::space() {
  if (!space_) throw BootError("HRT address space does not exist before boot");
  return *space_;
}

const mem::AddressSpace& AeroKernel::space() const {
  if (!space_) throw BootError("HRT address space does not exist before boot");
  return *space_;
}

mem::ControlState AeroKernel::control() const {
  return space().control(mem::Ring::Ring0, options_.cr0_wp);
}

void AeroKernel::merge_from(std::uint64_t ros_cr3) {
  if (!booted()) throw BootError("merge requested before the HRT booted");
  auto ros = mem::AddressSpace::attach(machine_.memory(), ros_cr3,
                                       mem::FrameOwner::RosVisible);
  mem::merge_lower_half(space(), ros);
  ros_cr3_ = ros_cr3;
}

void AeroKernel::remerge() {
  if (!ros_cr3_) throw ProtocolError("re-merge without a prior merge");
  merge_from(*ros_cr3_);
}

// ---- threads --------------------------------------------------------------------

CoreId AeroKernel::place_thread() {
  const auto booted = booted_cores();
  if (booted.empty()) throw BootError("no booted HRT core");
  return booted[next_core_++ % booted.size()];
}

void AeroKernel::refresh_core(CoreId id) {
  HrtCoreState& c = core_state(id);
  if (c.status == CoreStatus::Offline) return;
  const bool busy = std::any_of(threads_.begin(), threads_.end(), [&](const auto& kv) {
    return kv.second.core == id && kv.second.status != HrtThreadStatus::Exited;
  });
  c.status = busy ? CoreStatus::Running : CoreStatus::IdleEventLoop;
}

ThreadId AeroKernel::create_top_level_thread(const std::string& function,
                                             mem::VirtAddr stack_base,
                                             Superposition superposition,
                                             ThreadId partner) {
  const CoreId core = place_thread();
  if (!merged()) {
    throw ProtocolError("top-level thread creation requires a merged address space");
  }
  if (!stack_base.lower()) {
    throw UsageError("top-level thread stacks are ROS lower-half allocations");
  }
  if (functions_.find(function) == nullptr) {
    throw SymbolError("unknown thread function `" + function + "`");
  }
  HrtThread t;
  t.id = ids_.next();
  t.kind = HrtThreadKind::TopLevel;
  t.top_level = t.id;
  t.function = function;
  t.stack_base = stack_base;
  t.superposition = std::move(superposition);
  t.partner = partner;
  t.core = core;
  const ThreadId id = t.id;
  threads_.emplace(id, std::move(t));
  refresh_core(core);
  channel_.log().charge(EventKind::ThreadCreate, id,
                        Detail{{"fn", function},
                               {"kind", "top"},
                               {"partner", to_string(partner)},
                               {"core", to_string(core)},
                               {"via", "hvm"}},
                        0);
  return id;
}

ThreadId AeroKernel::create_nested_thread(ThreadId parent,
                                          const std::string& function,
                                          mem::VirtAddr stack_base,
                                          Cycles cost, const std::string& via) {
  const HrtThread& p = thread(parent);
  if (p.status == HrtThreadStatus::Exited) {
    throw LifecycleError("parent thread " + to_string(parent) + " has exited");
  }
  if (functions_.find(function) == nullptr) {
    throw SymbolError("unknown thread function `" + function + "`");
  }
  const CoreId core = place_thread();
  HrtThread t;
  t.id = ids_.next();
  t.kind = HrtThreadKind::Nested;
  t.parent = parent;
  t.top_level = p.top_level;
  t.function = function;
  t.stack_base = stack_base;
  t.superposition = p.superposition;
  t.core = core;
  const ThreadId id = t.id;
  threads_.emplace(id, std::move(t));
  refresh_core(core);
  channel_.log().charge(EventKind::ThreadCreate, id,
                        Detail{{"fn", function},
                               {"kind", "nested"},
                               {"parent", to_string(parent)},
                               {"core", to_string(core)},
                               {"via", via}},
                        cost);
  return id;
}

HrtThread& AeroKernel::thread(ThreadId id) {
  auto it = threads_.find(id);
  if (it == threads_.end()) {
    throw LifecycleError("no HRT thread " + to_string(id));
  }
  return it->second;
}

const HrtThread& AeroKernel::thread(ThreadId id) const {
  auto it = threads_.find(id);
  if (it == threads_.end()) {
    throw LifecycleError("no HRT thread " + to_string(id));
  }
  return it->second;
}

ThreadId AeroKernel::endpoint_for(ThreadId id) const {
  const HrtThread& top = thread(thread(id).top_level);
  return top.partner.value_or(kNoThread);
}

AccessOutcome AeroKernel::access(ThreadId id, mem::VirtAddr addr,
                                 mem::AccessKind kind) {
  HrtThread& t = thread(id);
  if (t.status == HrtThreadStatus::Exited) {
    throw LifecycleError("access from exited thread " + to_string(id));
  }
  if (t.status == HrtThreadStatus::BlockedOnEvent) {
    throw ProtocolError("access from blocked thread " + to_string(id));
  }
  if (t.failure) return AccessOutcome::Failed;
  core_state(t.core).current = id;

  const mem::ControlState ctl = control();
  // Each pass either succeeds or makes progress (local map, re-merge, forward).
  for (int pass = 0; pass < 4; ++pass) {
    const mem::Translation r = space().translate(ctl, addr, kind);
    if (!mem::faulted(r)) {
      t.fault_forwards = 0;
      t.fault_remerged = false;
      return AccessOutcome::Done;
    }
    switch (handle_page_fault(id, std::get<mem::FaultInfo>(r))) {
      case FaultResolution::HandledLocally:
      case FaultResolution::Remerged:
        continue;
      case FaultResolution::Forwarded:
        return AccessOutcome::Blocked;
    }
  }
  throw DoubleFaultError("access to " + mem::to_hex(addr.value()) +
                         " keeps faulting on thread " + to_string(id));
}

FaultResolution AeroKernel::handle_page_fault(ThreadId id,
                                              const mem::FaultInfo& fault) {
  HrtThread& t = thread(id);
  HrtCoreState& core = core_state(t.core);
  const auto& cost = channel_.cost();

  if (!fault.addr.lower()) {
    if (fault.reason != mem::FaultReason::NotPresent) {
      throw DoubleFaultError("protection fault in the HRT higher half at " +
                             mem::to_hex(fault.addr.value()));
    }
    const mem::PhysFrame f = machine_.memory().allocate(mem::FrameOwner::HrtOnly);
    space().map_page(fault.addr.page_base(), f, true);
    channel_.log().charge(EventKind::LocalFault, id,
                          Detail{{"addr", mem::to_hex(fault.addr.value())},
                                 {"access", std::string(1, mem::access_letter(fault.access))}},
                          cost.pagefault_base);
    return FaultResolution::HandledLocally;
  }

  const RecentFault seen{fault.addr, fault.access};
  if (core.recent_fault == seen) {
    if (t.fault_remerged && t.fault_forwards >= 2) {
      throw DoubleFaultError("fault at " + mem::to_hex(fault.addr.value()) +
                             " persists after re-merge and re-forward");
    }
    remerge();
    core.recent_fault.reset();
    t.fault_remerged = true;
    channel_.log().charge(EventKind::Remerge, id,
                          Detail{{"addr", mem::to_hex(fault.addr.value())},
                                 {"access", std::string(1, mem::access_letter(fault.access))},
                                 {"core", to_string(t.core)}},
                          cost.pagefault_base);
    return FaultResolution::Remerged;
  }
  if (t.fault_forwards >= 2) {
    throw DoubleFaultError("fault at " + mem::to_hex(fault.addr.value()) +
                           " persists after re-merge and re-forward");
  }

  core.recent_fault = seen;
  channel::EventRecord ev;
  ev.kind = EventKind::PageFault;
  ev.origin = id;
  ev.endpoint = endpoint_for(id);
  ev.detail = fault;
  const EventId eid = channel_.forward_event(std::move(ev));
  t.fault_forwards++;
  t.waiting_on = eid;
  t.status = HrtThreadStatus::BlockedOnEvent;
  return FaultResolution::Forwarded;
}

EventId AeroKernel::handle_syscall(ThreadId id, channel::SyscallRequest request,
                                   Detail tags) {
  HrtThread& t = thread(id);
  if (t.status != HrtThreadStatus::Runnable) {
    throw LifecycleError("system call from non-runnable thread " + to_string(id));
  }
  channel::EventRecord ev;
  ev.kind = EventKind::Syscall;
  ev.origin = id;
  ev.endpoint = endpoint_for(id);
  ev.detail = std::move(request);
  ev.tags = std::move(tags);
  const EventId eid = channel_.forward_event(std::move(ev));
  t.waiting_on = eid;
  t.status = HrtThreadStatus::BlockedOnEvent;
  return eid;
}

void AeroKernel::thread_exit(ThreadId id) {
  HrtThread& t = thread(id);
  if (t.status == HrtThreadStatus::Exited) {
    throw LifecycleError("thread " + to_string(id) + " already exited");
  }
  if (t.status == HrtThreadStatus::BlockedOnEvent) {
    throw LifecycleError("thread " + to_string(id) + " exits while blocked");
  }
  t.status = HrtThreadStatus::Exited;
  const bool top = t.kind == HrtThreadKind::TopLevel;
  channel_.log().charge(EventKind::ThreadExit, id,
                        Detail{{"kind", top ? "top" : "nested"}}, 0);
  refresh_core(t.core);
  if (!top) return;

  channel::EventRecord ev;
  ev.kind = EventKind::ThreadExitSignal;
  ev.origin = id;
  ev.endpoint = *t.partner;
  ev.tags.add("hrt", to_string(id));
  channel_.forward_event(std::move(ev));
}

void AeroKernel::deliver(const channel::EventRecord& ev) {
  if (ev.kind == EventKind::ThreadExitSignal) return;
  auto it = threads_.find(ev.origin);
  if (it == threads_.end()) return;
  HrtThread& t = it->second;
  if (t.waiting_on != ev.id) return;
  t.waiting_on.reset();
  t.last_result = ev.result;
  if (auto fail = ev.tags.get("fail")) {
    t.failure = std::string(*fail);
  }
  if (t.status == HrtThreadStatus::BlockedOnEvent) {
    t.status = HrtThreadStatus::Runnable;
  }
}

void AeroKernel::clear_threads() {
  threads_.clear();
  next_core_ = 0;
}

// ---- hypercall handling -------------------------------------------------------

void AeroKernel::on_request(channel::Channel& ch,
                            const channel::SharedDataPage& page) {
  using channel::HypercallKind;
  if (page.kind() == HypercallKind::MergeAddressSpace) {
    merge_from(page.merge_cr3());
    ch.hypercall(kNoThread, channel::Side::Hrt, channel::Hypercall::complete(0));
    return;
  }

  const auto name = functions_.name_at(page.func_ptr());
  if (!name) {
    throw SymbolError("no AeroKernel function at " +
                      mem::to_hex(page.func_ptr().value()));
  }
  const auto args = page.args();

  if (page.action() == channel::AsyncAction::CreateThread) {
    if (args.size() < 3) throw ProtocolError("thread creation needs stack, TLS and partner");
    Superposition sp;
    sp.tls_base = mem::VirtAddr::from(args[1]);
    sp.gdt_snapshot.assign(args.begin() + 3, args.end());
    const ThreadId tid = create_top_level_thread(
        *name, mem::VirtAddr::from(args[0]), std::move(sp),
        ThreadId{static_cast<std::uint32_t>(args[2])});
    ch.hypercall(kNoThread, channel::Side::Hrt,
                 channel::Hypercall::complete(raw(tid)));
    return;
  }

  if (!booted()) throw BootError("function call requested before boot");
  if (page.kind() == HypercallKind::AsyncCallParallel) {
    const auto cores = booted_cores();
    std::uint64_t ret = 0;
    for (std::size_t i = 0; i < cores.size(); ++i) {
      ret = run_function(*name, page.requester());
    }
    ch.hypercall(kNoThread, channel::Side::Hrt,
                 channel::Hypercall::complete(
                     ret, static_cast<std::uint32_t>(cores.size())));
    return;
  }
  const std::uint64_t ret = run_function(*name, page.requester());
  ch.hypercall(kNoThread, channel::Side::Hrt, channel::Hypercall::complete(ret));
}

bool AeroKernel::sync_address_ready(mem::VirtAddr vaddr) const {
  if (!merged() || !vaddr.lower() || !space_) return false;
  auto ros = mem::AddressSpace::attach(machine_.memory(), *ros_cr3_,
                                       mem::FrameOwner::RosVisible);
  const auto a = ros.translate(ros.control(mem::Ring::Ring3, true), vaddr,
                               mem::AccessKind::Read);
  const auto b = space_->translate(control(), vaddr, mem::AccessKind::Read);
  return !mem::faulted(a) && !mem::faulted(b) &&
         std::get<mem::PhysAddr>(a) == std::get<mem::PhysAddr>(b);
}

std::uint64_t AeroKernel::on_sync_invoke(const channel::FunctionRef& func,
                                         std::span<const std::uint64_t>,
                                         ThreadId caller) {
  if (!booted()) throw BootError("synchronous call with no booted HRT core");
  return run_function(func.name, caller);
}

}  // namespace multiverse::hrt
