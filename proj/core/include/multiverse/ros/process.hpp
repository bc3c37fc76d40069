#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multiverse/channel/channel.hpp"
#include "multiverse/common.hpp"
#include "multiverse/hrt/aerokernel.hpp"
#include "multiverse/mem/address_space.hpp"
#include "multiverse/sim/machine.hpp"

namespace multiverse::ros {

inline constexpr std::uint64_t kRegionBase = 0x0000'1000'0000'0000ULL;
inline constexpr std::uint64_t kDefaultStackSize = 64 * 1024;
// Pre-populated program image at the bottom of the mmap area, so the process
// owns a root-level entry before the first merge.
inline constexpr std::uint64_t kProgramImageSize = 64 * 1024;

// Errno values returned (negated) by the syscall model.
inline constexpr std::int64_t kEFAULT = -14;
inline constexpr std::int64_t kENOMEM = -12;
inline constexpr std::int64_t kEINVAL = -22;
inline constexpr std::int64_t kENOSYS = -38;

struct Region {
  std::uint64_t base = 0;
  std::uint64_t length = 0;
  bool populated = false;
  bool writable = true;

  std::uint64_t end() const noexcept { return base + length; }
  bool contains(std::uint64_t a) const noexcept { return a >= base && a < end(); }
  friend bool operator==(const Region&, const Region&) = default;
};

enum class RosRole { Main, Partner, Worker };
enum class RosStatus { Runnable, BlockedJoin, Exited };
enum class PartnerPhase { AllocStack, RequestCreate, Serving, Done };

struct RosThread {
  ThreadId tid;
  RosRole role = RosRole::Main;
  RosStatus status = RosStatus::Runnable;
  CoreId core;
  std::string function;  // body the thread (or its HRT twin) runs

  // Partner only.
  std::optional<ThreadId> hrt_thread;
  bool exit_bit = false;
  std::optional<Region> stack_region;
  PartnerPhase phase = PartnerPhase::AllocStack;

  bool joined = false;
  std::optional<ThreadId> join_target;  // while BlockedJoin
};

// HRT thread id -> partner tid, for live top-level threads only.
using PartnerMap = std::map<ThreadId, ThreadId>;

struct SyscallOutcome {
  std::int64_t value = 0;
  Cycles service = 0;    // cycles the ROS kernel spends on the call
  channel::Detail tags;  // e.g. pages populated
};

enum class FaultOutcome { AlreadyPresent, Mapped, Segfault };

// What a partner did in one scheduler step.
enum class PartnerStep { AllocatedStack, CreatedHrtThread, Served, Exited, Idle };

class RosProcess {
 public:
  RosProcess(sim::Machine& machine, channel::Channel& channel,
             ThreadIdAllocator& ids, std::uint32_t pid = 1);

  RosProcess(const RosProcess&) = delete;
  RosProcess& operator=(const RosProcess&) = delete;

  std::uint32_t pid() const noexcept { return pid_; }
  mem::AddressSpace& space() noexcept { return space_; }
  const mem::AddressSpace& space() const noexcept { return space_; }
  mem::ControlState control() const {
    return space_.control(mem::Ring::Ring3, true);
  }
  const std::map<std::uint64_t, Region>& regions() const noexcept { return regions_; }
  const Region* region_of(std::uint64_t addr) const;
  const std::string& output() const noexcept { return output_; }

  // ---- threads
  ThreadId main() const noexcept { return main_; }
  RosThread& thread(ThreadId tid);
  const RosThread& thread(ThreadId tid) const;
  bool has_thread(ThreadId tid) const { return threads_.contains(tid); }
  const std::map<ThreadId, RosThread>& threads() const noexcept { return threads_; }
  const PartnerMap& partner_map() const noexcept { return partners_; }

  // ---- syscall model (no cycle charging)
  std::int64_t sys_mmap(std::uint64_t length, bool populate, bool writable,
                        std::uint64_t* pages_populated = nullptr);
  std::int64_t sys_munmap(std::uint64_t base, std::uint64_t length);
  SyscallOutcome execute_syscall(const channel::SyscallRequest& req);
  // Demand paging: maps the page when `addr` lies in a region that permits
  // `access`.
  FaultOutcome handle_fault(mem::VirtAddr addr, mem::AccessKind access);

  // ---- charged operations for ROS-resident threads
  // Executes a syscall locally and logs it at syscall_base plus service cost.
  std::int64_t syscall(ThreadId caller, const channel::SyscallRequest& req,
                       channel::Detail tags = {});
  // Ring-3 access with local demand paging; false on segfault.
  bool access(ThreadId caller, mem::VirtAddr addr, mem::AccessKind access);

  // ---- Multiverse execution groups
  void attach_hrt(hrt::AeroKernel* hrt) noexcept { hrt_ = hrt; }
  // Creates a partner for `function` (SymbolError before any HVM request if
  // the image lacks it). The partner does the rest in its own steps.
  ThreadId spawn_hrt(ThreadId caller, const std::string& function);
  PartnerStep step_partner(ThreadId partner);
  // Services one injected event. PageFault replicates the access, Syscall runs
  // the model, ThreadExitSignal flips the exit bit.
  void serve_forwarded(ThreadId partner, const channel::EventRecord& ev);

  // ---- native threads
  ThreadId spawn_native(ThreadId caller, const std::string& function);
  // First step of a native thread: allocate its stack.
  void allocate_native_stack(ThreadId worker);

  // ---- join / exit
  // Blocks `caller` (Main) until `target` exits; returns true if it already
  // has. UsageError for non-joinable targets or a second join.
  bool join(ThreadId caller, ThreadId target);
  // Re-checks a blocked joiner; true once it may resume.
  bool poll_join(ThreadId caller);
  void exit_thread(ThreadId tid);

  // Process exit hook, installed by init_runtime.
  void set_exit_hook(std::function<void(ThreadId)> hook) { exit_hook_ = std::move(hook); }
  void process_exit(ThreadId caller);
  bool exited() const noexcept { return exited_; }

 private:
  RosThread& add_thread(RosRole role, const std::string& function);
  void charge_runtime_mmap(ThreadId tid, std::uint64_t length, Region& out);

  sim::Machine& machine_;
  channel::Channel& channel_;
  ThreadIdAllocator& ids_;
  std::uint32_t pid_;
  mem::AddressSpace space_;
  std::map<std::uint64_t, Region> regions_;
  std::uint64_t next_base_ = kRegionBase;
  std::string output_;

  ThreadId main_;
  std::map<ThreadId, RosThread> threads_;
  std::vector<CoreId> ros_cores_;
  std::size_t placed_ = 0;
  PartnerMap partners_;
  hrt::AeroKernel* hrt_ = nullptr;
  std::function<void(ThreadId)> exit_hook_;
  bool exited_ = false;
};

const char* to_string(RosRole r);
const char* to_string(RosStatus s);

}  // namespace multiverse::ros
