#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multiverse/channel/channel.hpp"
#include "multiverse/common.hpp"
#include "multiverse/hrt/image.hpp"
#include "multiverse/mem/address_space.hpp"
#include "multiverse/sim/machine.hpp"
#include "multiverse/toolchain/symbol_cache.hpp"

namespace multiverse::hrt {

enum class CoreStatus { Offline, Booting, IdleEventLoop, Running };

struct RecentFault {
  mem::VirtAddr addr;
  mem::AccessKind access;
  friend constexpr bool operator==(const RecentFault&, const RecentFault&) = default;
};

struct HrtCoreState {
  CoreId id;
  CoreStatus status = CoreStatus::Offline;
  std::optional<RecentFault> recent_fault;  // per-core, at most one
  std::optional<ThreadId> current;
};

enum class HrtThreadKind { TopLevel, Nested };
enum class HrtThreadStatus { Runnable, BlockedOnEvent, Exited };

// Mirrored ROS state carried into an HRT thread. The descriptor table and the
// TLS base are opaque to the simulator.
struct Superposition {
  std::vector<std::uint64_t> gdt_snapshot;
  mem::VirtAddr tls_base;
};

struct HrtThread {
  ThreadId id;
  HrtThreadKind kind = HrtThreadKind::TopLevel;
  std::optional<ThreadId> parent;
  ThreadId top_level;  // itself for top-level threads
  std::string function;
  mem::VirtAddr stack_base;
  Superposition superposition;
  std::optional<ThreadId> partner;  // top-level only
  HrtThreadStatus status = HrtThreadStatus::Runnable;
  CoreId core;

  std::optional<EventId> waiting_on;
  std::optional<std::uint64_t> last_result;
  std::optional<std::string> failure;  // set when the ROS reports a segfault
  int fault_forwards = 0;              // for the access currently retried
  bool fault_remerged = false;
};

enum class AccessOutcome { Done, Blocked, Failed };
enum class FaultResolution { HandledLocally, Remerged, Forwarded };

struct HrtOptions {
  bool cr0_wp = true;  // forced on at boot unless explicitly disabled
};

// The AeroKernel: boots on the HRT partition into an event loop, runs
// top-level and nested threads in ring 0, forwards every system call and every
// lower-half page fault to the partner thread of the thread's execution group.
class AeroKernel final : public channel::HypercallHandler {
 public:
  AeroKernel(sim::Machine& machine, channel::Channel& channel,
             ThreadIdAllocator& ids, HrtOptions options = {});

  AeroKernel(const AeroKernel&) = delete;
  AeroKernel& operator=(const AeroKernel&) = delete;

  // ---- lifecycle
  void install_image(const AeroKernelImage& image, ThreadId requester = kNoThread);
  void boot(std::span<const CoreId> cores, ThreadId requester = kNoThread);
  void boot_all(ThreadId requester = kNoThread);
  void reboot();
  void shutdown(ThreadId requester = kNoThread);

  channel::Channel& channel() noexcept { return channel_; }
  sim::Machine& machine() noexcept { return machine_; }
  const HrtOptions& options() const noexcept { return options_; }

  bool installed() const noexcept { return image_.has_value(); }
  bool booted() const;
  const std::optional<AeroKernelImage>& image() const noexcept { return image_; }
  const HrtCoreState& core(CoreId id) const;
  std::vector<HrtCoreState> cores() const;
  std::vector<CoreId> booted_cores() const;

  // ---- function table
  void set_functions(FunctionTable table) { functions_ = std::move(table); }
  const FunctionTable& functions() const noexcept { return functions_; }
  void set_symbol_cache(toolchain::SymbolCache* cache) noexcept { cache_ = cache; }
  // Charges symbol_lookup, or cache_hit when the cache holds the name.
  mem::VirtAddr resolve_symbol(const std::string& name, ThreadId origin);
  // Executes a function descriptor in place; charges its cycles.
  std::uint64_t run_function(const std::string& name, ThreadId origin,
                             Cycles extra_cycles = 0);

  // ---- address space
  mem::AddressSpace& space();
  const mem::AddressSpace& space() const;
  mem::ControlState control() const;
  bool merged() const noexcept { return ros_cr3_.has_value(); }
  void merge_from(std::uint64_t ros_cr3);
  void remerge();

  // ---- threads
  ThreadId create_top_level_thread(const std::string& function,
                                   mem::VirtAddr stack_base,
                                   Superposition superposition, ThreadId partner);
  // `cost` is what creating the thread costs its parent (a forwarded clone-
  // like call, or an in-kernel thread start); `via` labels the path taken.
  ThreadId create_nested_thread(ThreadId parent, const std::string& function,
                                mem::VirtAddr stack_base, Cycles cost = 0,
                                const std::string& via = "kernel");
  HrtThread& thread(ThreadId id);
  const HrtThread& thread(ThreadId id) const;
  bool has_thread(ThreadId id) const { return threads_.contains(id); }
  const std::map<ThreadId, HrtThread>& threads() const noexcept { return threads_; }
  // Partner thread of the execution group `id` belongs to.
  ThreadId endpoint_for(ThreadId id) const;

  // Performs a memory access from thread `id`, handling any fault. Blocked
  // means an event was forwarded; call again after it completes to retry.
  AccessOutcome access(ThreadId id, mem::VirtAddr addr, mem::AccessKind kind);
  FaultResolution handle_page_fault(ThreadId id, const mem::FaultInfo& fault);
  // Forwards a system call; the thread blocks until the ROS completes it.
  EventId handle_syscall(ThreadId id, channel::SyscallRequest request,
                         channel::Detail tags = {});
  void thread_exit(ThreadId id);

  // ---- channel::HypercallHandler
  void on_reboot() override { reboot(); }
  void on_request(channel::Channel& ch, const channel::SharedDataPage& page) override;
  bool sync_address_ready(mem::VirtAddr vaddr) const override;
  std::uint64_t on_sync_invoke(const channel::FunctionRef& func,
                               std::span<const std::uint64_t> args,
                               ThreadId caller) override;

 private:
  HrtCoreState& core_state(CoreId id);
  CoreId place_thread();
  void refresh_core(CoreId id);
  void deliver(const channel::EventRecord& ev);
  void clear_threads();

  sim::Machine& machine_;
  channel::Channel& channel_;
  ThreadIdAllocator& ids_;
  HrtOptions options_;

  std::optional<AeroKernelImage> image_;
  std::vector<std::uint64_t> image_frames_;
  FunctionTable functions_;
  toolchain::SymbolCache* cache_ = nullptr;

  std::map<CoreId, HrtCoreState> cores_;
  std::optional<mem::AddressSpace> space_;
  std::optional<std::uint64_t> ros_cr3_;
  std::map<ThreadId, HrtThread> threads_;
  std::size_t next_core_ = 0;
};

const char* to_string(CoreStatus s);

}  // namespace multiverse::hrt
