#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "multiverse/channel/event_log.hpp"
#include "multiverse/common.hpp"
#include "multiverse/mem/address_space.hpp"
#include "multiverse/sim/cost_model.hpp"

namespace multiverse::channel {

inline constexpr std::size_t kMaxCallArgs = 6;

enum class Side { Ros, Hrt };

struct FunctionRef {
  std::string name;
  mem::VirtAddr addr;
};

// ---- Hypercalls and the shared data page ----------------------------------

enum class HypercallKind {
  RebootHrt,
  MergeAddressSpace,
  AsyncCallSequential,
  AsyncCallParallel,
  SetupSync,
  CompleteCurrent,
};

enum class AsyncAction { Invoke, CreateThread };

struct AsyncCallPayload {
  mem::VirtAddr func;
  std::vector<std::uint64_t> args;
  AsyncAction action = AsyncAction::Invoke;
};
struct MergePayload {
  std::uint64_t cr3 = 0;
};
struct SyncPayload {
  mem::VirtAddr vaddr;
  bool same_socket = true;
};
struct CompletionPayload {
  std::uint64_t return_code = 0;
  std::uint32_t completions = 1;
};

using HypercallPayload = std::variant<std::monostate, AsyncCallPayload,
                                      MergePayload, SyncPayload, CompletionPayload>;

struct Hypercall {
  HypercallKind kind;
  HypercallPayload payload;

  static Hypercall reboot() { return {HypercallKind::RebootHrt, {}}; }
  static Hypercall merge(std::uint64_t cr3) {
    return {HypercallKind::MergeAddressSpace, MergePayload{cr3}};
  }
  static Hypercall async_call(AsyncCallPayload p, bool parallel = false) {
    return {parallel ? HypercallKind::AsyncCallParallel
                     : HypercallKind::AsyncCallSequential,
            std::move(p)};
  }
  static Hypercall setup_sync(mem::VirtAddr vaddr, bool same_socket) {
    return {HypercallKind::SetupSync, SyncPayload{vaddr, same_socket}};
  }
  static Hypercall complete(std::uint64_t ret, std::uint32_t completions = 1) {
    return {HypercallKind::CompleteCurrent, CompletionPayload{ret, completions}};
  }
};

enum class PageState { Idle, Requested, InProgress, Done };

// The data page shared between the VMM and the HRT. Holds the function and
// arguments of a call request (or the caller's CR3 for a merge) and the return
// code once the HRT signals completion.
class SharedDataPage {
 public:
  PageState state() const noexcept { return state_; }
  HypercallKind kind() const noexcept { return kind_; }
  mem::VirtAddr func_ptr() const noexcept { return func_ptr_; }
  std::span<const std::uint64_t> args() const noexcept { return args_; }
  AsyncAction action() const noexcept { return action_; }
  std::uint64_t merge_cr3() const noexcept { return merge_cr3_; }
  ThreadId requester() const noexcept { return requester_; }
  Cycles request_cycle() const noexcept { return request_cycle_; }
  std::uint32_t completions() const noexcept { return completions_; }
  // ProtocolError unless state() == Done.
  std::uint64_t return_code() const;

 private:
  friend class Channel;
  void transition(PageState to);

  PageState state_ = PageState::Idle;
  HypercallKind kind_ = HypercallKind::AsyncCallSequential;
  mem::VirtAddr func_ptr_;
  std::vector<std::uint64_t> args_;
  AsyncAction action_ = AsyncAction::Invoke;
  std::uint64_t merge_cr3_ = 0;
  std::uint64_t return_code_ = 0;
  std::uint32_t completions_ = 0;
  ThreadId requester_ = kNoThread;
  Cycles request_cycle_ = 0;
};

class Channel;

// The HRT side of the channel. The VMM forwards merge and call requests to it;
// it must finish each with a CompleteCurrent hypercall.
class HypercallHandler {
 public:
  virtual ~HypercallHandler() = default;
  virtual void on_reboot() = 0;
  virtual void on_request(Channel& channel, const SharedDataPage& page) = 0;
  // True once `vaddr` translates identically on both sides of a merge.
  virtual bool sync_address_ready(mem::VirtAddr vaddr) const = 0;
  virtual std::uint64_t on_sync_invoke(const FunctionRef& func,
                                       std::span<const std::uint64_t> args,
                                       ThreadId caller) = 0;
};

// ---- Forwarded events ------------------------------------------------------

struct SyscallRequest {
  std::string name;
  std::vector<std::uint64_t> args;
};

using EventDetail =
    std::variant<std::monostate, SyscallRequest, mem::FaultInfo, FunctionRef>;

struct EventRecord {
  EventId id{0};
  EventKind kind = EventKind::Syscall;
  ThreadId origin = kNoThread;    // HRT thread that raised it
  ThreadId endpoint = kNoThread;  // partner thread that services it
  EventDetail detail;
  Cycles request_cycle = 0;
  std::optional<Cycles> complete_cycle;
  std::optional<std::uint64_t> result;
  Detail tags;  // extra key:value pairs copied into the log entry

  bool completed() const noexcept { return complete_cycle.has_value(); }
};

struct SyncEndpoint {
  ThreadId owner = kNoThread;
  mem::VirtAddr sync_vaddr;
  bool same_socket = true;
  std::uint64_t generation = 0;
};

class Channel {
 public:
  explicit Channel(const sim::CostModel& cost) : cost_(cost) {}

  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  void attach(HypercallHandler* handler) noexcept { handler_ = handler; }
  const sim::CostModel& cost() const noexcept { return cost_; }
  EventLog& log() noexcept { return log_; }
  const EventLog& log() const noexcept { return log_; }
  Cycles now() const noexcept { return log_.now(); }

  // Requests are sequential: a second request while the page is busy raises
  // BusyError. With a handler attached the request round-trips before this
  // returns and the HRT's return code is handed back; without one the page
  // is left Requested for begin_current()/collect().
  std::uint64_t hypercall(ThreadId caller, Side side, const Hypercall& call);
  const SharedDataPage& page() const noexcept { return page_; }
  const SharedDataPage& begin_current();
  std::uint64_t collect();

  void register_endpoint(ThreadId partner);
  void unregister_endpoint(ThreadId partner);
  bool has_endpoint(ThreadId partner) const { return endpoints_.contains(partner); }

  // Queues `ev` for injection into its endpoint. ProtocolError when the
  // endpoint is not live.
  EventId forward_event(EventRecord ev);
  bool has_injected(ThreadId partner) const;
  EventRecord take_injected(ThreadId partner);
  // Charges service_cost + forward_overhead and stamps complete_cycle.
  // ProtocolError if the event is not outstanding.
  EventRecord complete_event(EventId id, std::uint64_t result,
                             Cycles service_cost, Detail tags = {});
  void on_completion(std::function<void(const EventRecord&)> fn) {
    completion_listener_ = std::move(fn);
  }
  std::vector<EventRecord> outstanding() const;
  const std::vector<EventRecord>& completed_events() const noexcept {
    return completed_;
  }

  SyncEndpoint setup_sync(ThreadId caller, mem::VirtAddr sync_vaddr,
                          bool same_socket);
  bool is_active(const SyncEndpoint& ep) const;
  std::optional<SyncEndpoint> endpoint_for(ThreadId owner) const;
  std::uint64_t sync_invoke(const SyncEndpoint& ep, const FunctionRef& func,
                            std::span<const std::uint64_t> args);

 private:
  void charge_completion(const SharedDataPage& page);
  void reset_page() noexcept;

  const sim::CostModel& cost_;
  HypercallHandler* handler_ = nullptr;
  EventLog log_;
  SharedDataPage page_;

  std::uint64_t next_event_ = 0;
  std::set<ThreadId> endpoints_;
  std::map<ThreadId, std::deque<EventId>> queues_;
  std::map<EventId, EventRecord> outstanding_;
  std::vector<EventRecord> completed_;
  std::function<void(const EventRecord&)> completion_listener_;

  std::uint64_t sync_generation_ = 0;
  std::map<ThreadId, SyncEndpoint> sync_endpoints_;
};

Detail describe(const EventRecord& ev);

}  // namespace multiverse::channel
