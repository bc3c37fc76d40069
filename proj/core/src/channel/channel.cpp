#include "multiverse/channel/channel.hpp"

#include <algorithm>

#include "multiverse/errors.hpp"

namespace multiverse::channel {

namespace {

const char* page_state_name(PageState s) {
  switch (s) {
    case PageState::Idle:
      return "Idle";
    case PageState::Requested:
      return "Requested";
    case PageState::InProgress:
      return "InProgress";
    case PageState::Done:
      return "Done";
  }
  return "?";
}

const char* reason_code(mem::FaultReason r) {
  switch (r) {
    case mem::FaultReason::NotPresent:
      return "np";
    case mem::FaultReason::WriteProtect:
      return "wp";
    case mem::FaultReason::Privilege:
      return "priv";
  }
  return "?";
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

}  // namespace

std::uint64_t SharedDataPage::return_code() const {
  if (state_ != PageState::Done) {
    throw ProtocolError(std::string("return code read in state ") +
                        page_state_name(state_));
  }
  return return_code_;
}

void SharedDataPage::transition(PageState to) {
  const bool ok = (state_ == PageState::Idle && to == PageState::Requested) ||
                  (state_ == PageState::Requested && to == PageState::InProgress) ||
                  (state_ == PageState::InProgress && to == PageState::Done) ||
                  (state_ == PageState::Done && to == PageState::Idle);
  if (!ok) {
    throw ProtocolError(std::string("illegal shared page transition ") +
                        page_state_name(state_) + " -> " + page_state_name(to));
  }
  state_ = to;
}

void Channel::reset_page() noexcept {
  page_ = SharedDataPage{};
}

std::uint64_t Channel::hypercall(ThreadId caller, Side side,
                                 const Hypercall& call) {
  if (call.kind == HypercallKind::CompleteCurrent) {
    if (side != Side::Hrt) {
      throw ProtocolError("CompleteCurrent issued from the ROS side");
    }
    const auto* done = std::get_if<CompletionPayload>(&call.payload);
    if (done == nullptr) throw ProtocolError("CompleteCurrent without payload");
    if (page_.state_ != PageState::InProgress) {
      throw ProtocolError("CompleteCurrent with no request in progress");
    }
    page_.return_code_ = done->return_code;
    page_.completions_ = done->completions;
    page_.transition(PageState::Done);
    return 0;
  }

  if (side != Side::Ros) {
    throw ProtocolError("hypercall requests must come from the ROS side");
  }
  if (page_.state_ != PageState::Idle) {
    throw BusyError(std::string("shared data page busy (") +
                    page_state_name(page_.state_) + ")");
  }

  switch (call.kind) {
    case HypercallKind::RebootHrt: {
      log_.charge(EventKind::Reboot, caller, {}, cost_.hypercall);
      sync_endpoints_.clear();
      if (handler_ != nullptr) handler_->on_reboot();
      return 0;
    }
    case HypercallKind::SetupSync: {
      const auto* p = std::get_if<SyncPayload>(&call.payload);
      if (p == nullptr) throw ProtocolError("SetupSync without a sync address");
      if (handler_ == nullptr || !handler_->sync_address_ready(p->vaddr)) {
        throw ProtocolError(
            "synchronous setup requires a merged address space with " +
            mem::to_hex(p->vaddr.value()) + " mapped on both sides");
      }
      log_.charge(EventKind::SyncSetup, caller,
                  Detail{{"vaddr", mem::to_hex(p->vaddr.value())},
                         {"socket", p->same_socket ? "same" : "diff"}},
                  cost_.hypercall);
      const SyncEndpoint ep{caller, p->vaddr, p->same_socket, ++sync_generation_};
      sync_endpoints_[caller] = ep;
      return ep.generation;
    }
    case HypercallKind::MergeAddressSpace: {
      const auto* p = std::get_if<MergePayload>(&call.payload);
      if (p == nullptr) throw ProtocolError("merge request without a CR3");
      page_.kind_ = call.kind;
      page_.merge_cr3_ = p->cr3;
      page_.func_ptr_ = {};
      page_.args_.clear();
      break;
    }
    case HypercallKind::AsyncCallSequential:
    case HypercallKind::AsyncCallParallel: {
      const auto* p = std::get_if<AsyncCallPayload>(&call.payload);
      if (p == nullptr) throw ProtocolError("call request without a function");
      if (p->args.size() > kMaxCallArgs) {
        throw ProtocolError("call request carries more than 6 argument words");
      }
      page_.kind_ = call.kind;
      page_.func_ptr_ = p->func;
      page_.args_ = p->args;
      page_.action_ = p->action;
      page_.merge_cr3_ = 0;
      break;
    }
    case HypercallKind::CompleteCurrent:
      break;
  }

  page_.requester_ = caller;
  page_.request_cycle_ = log_.now();
  page_.completions_ = 0;
  page_.transition(PageState::Requested);
  if (handler_ == nullptr) return 0;

  begin_current();
  try {
    handler_->on_request(*this, page_);
  } catch (...) {
    reset_page();
    throw;
  }
  if (page_.state_ != PageState::Done) {
    reset_page();
    throw ProtocolError("HRT returned without completing the request");
  }
  return collect();
}

const SharedDataPage& Channel::begin_current() {
  page_.transition(PageState::InProgress);
  return page_;
}

std::uint64_t Channel::collect() {
  const std::uint64_t ret = page_.return_code();
  charge_completion(page_);
  page_.transition(PageState::Idle);
  return ret;
}

void Channel::charge_completion(const SharedDataPage& page) {
  const auto req = std::to_string(page.request_cycle());
  if (page.kind() == HypercallKind::MergeAddressSpace) {
    log_.charge(EventKind::MergeRequest, page.requester(),
                Detail{{"cr3", std::to_string(page.merge_cr3())}, {"req", req}},
                cost_.merger);
    return;
  }
  const bool parallel = page.kind() == HypercallKind::AsyncCallParallel;
  const std::uint32_t n = std::max<std::uint32_t>(page.completions(), 1);
  for (std::uint32_t i = 0; i < n; ++i) {
    log_.charge(
        EventKind::AsyncCall, page.requester(),
        Detail{{"func", mem::to_hex(page.func_ptr().value())},
               {"mode", parallel ? "par" : "seq"},
               {"action",
                page.action() == AsyncAction::CreateThread ? "create" : "invoke"},
               {"req", req}},
        cost_.async_call);
  }
}

void Channel::register_endpoint(ThreadId partner) { endpoints_.insert(partner); }

void Channel::unregister_endpoint(ThreadId partner) {
  endpoints_.erase(partner);
}

EventId Channel::forward_event(EventRecord ev) {
  if (!endpoints_.contains(ev.endpoint)) {
    throw ProtocolError("no live partner endpoint for thread " +
                        to_string(ev.origin));
  }
  ev.id = EventId{++next_event_};
  ev.request_cycle = log_.now();
  ev.complete_cycle.reset();
  ev.result.reset();
  const EventId id = ev.id;
  queues_[ev.endpoint].push_back(id);
  outstanding_.emplace(id, std::move(ev));
  return id;
}

bool Channel::has_injected(ThreadId partner) const {
  auto it = queues_.find(partner);
  return it != queues_.end() && !it->second.empty();
}

EventRecord Channel::take_injected(ThreadId partner) {
  auto it = queues_.find(partner);
  if (it == queues_.end() || it->second.empty()) {
    throw ProtocolError("no event pending for partner " + to_string(partner));
  }
  const EventId id = it->second.front();
  it->second.pop_front();
  return outstanding_.at(id);
}

EventRecord Channel::complete_event(EventId id, std::uint64_t result,
                                    Cycles service_cost, Detail tags) {
  auto it = outstanding_.find(id);
  if (it == outstanding_.end()) {
    throw ProtocolError("completing event " + std::to_string(raw(id)) +
                        " which is not outstanding");
  }
  EventRecord ev = std::move(it->second);
  outstanding_.erase(it);
  if (auto q = queues_.find(ev.endpoint); q != queues_.end()) {
    std::erase(q->second, id);
  }

  ev.result = result;
  ev.tags.append(tags);
  Detail d = describe(ev);
  d.append(ev.tags);
  log_.charge(ev.kind, ev.origin, std::move(d),
              service_cost + cost_.forward_overhead);
  ev.complete_cycle = log_.now();
  completed_.push_back(ev);
  if (completion_listener_) completion_listener_(ev);
  return ev;
}

std::vector<EventRecord> Channel::outstanding() const {
  std::vector<EventRecord> out;
  out.reserve(outstanding_.size());
  for (const auto& [id, ev] : outstanding_) out.push_back(ev);
  return out;
}

SyncEndpoint Channel::setup_sync(ThreadId caller, mem::VirtAddr sync_vaddr,
                                 bool same_socket) {
  hypercall(caller, Side::Ros, Hypercall::setup_sync(sync_vaddr, same_socket));
  return sync_endpoints_.at(caller);
}

bool Channel::is_active(const SyncEndpoint& ep) const {
  auto it = sync_endpoints_.find(ep.owner);
  return it != sync_endpoints_.end() && it->second.generation == ep.generation;
}

std::optional<SyncEndpoint> Channel::endpoint_for(ThreadId owner) const {
  auto it = sync_endpoints_.find(owner);
  if (it == sync_endpoints_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Channel::sync_invoke(const SyncEndpoint& ep,
                                   const FunctionRef& func,
                                   std::span<const std::uint64_t> args) {
  if (!is_active(ep)) throw ProtocolError("synchronous endpoint is not active");
  if (handler_ == nullptr) throw ProtocolError("no HRT attached");
  const std::uint64_t ret = handler_->on_sync_invoke(func, args, ep.owner);
  log_.charge(EventKind::SyncInvoke, ep.owner,
              Detail{{"fn", func.name},
                     {"args", join_args(args)},
                     {"socket", ep.same_socket ? "same" : "diff"}},
              ep.same_socket ? cost_.sync_call_same_socket
                             : cost_.sync_call_diff_socket);
  return ret;
}

Detail describe(const EventRecord& ev) {
  Detail d;
  if (const auto* sc = std::get_if<SyscallRequest>(&ev.detail)) {
    d.add("nr", sc->name).add("args", join_args(sc->args));
  } else if (const auto* f = std::get_if<mem::FaultInfo>(&ev.detail)) {
    d.add("addr", mem::to_hex(f->addr.value()))
        .add("access", std::string(1, mem::access_letter(f->access)))
        .add("reason", reason_code(f->reason));
  } else if (const auto* fn = std::get_if<FunctionRef>(&ev.detail)) {
    d.add("fn", fn->name);
  }
  d.add("fwd", "1")
      .add("req", ev.request_cycle)
      .add("ep", to_string(ev.endpoint));
  if (ev.result) {
    d.add("ret", std::to_string(static_cast<std::int64_t>(*ev.result)));
  }
  return d;
}

}  // namespace multiverse::channel
