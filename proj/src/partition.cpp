#include "rewind/partition.hpp"

#include <optional>

namespace rwd {

std::string_view to_string(ServerModel model) {
  return model == ServerModel::thread_per_request ? "thread_per_request" : "coroutine";
}

ServerModel server_model_from_string(std::string_view text) {
  if (text == "thread_per_request" || text == "thread") return ServerModel::thread_per_request;
  if (text == "coroutine") return ServerModel::coroutine;
  throw Error(ErrorCode::InvalidArgument, "unknown server model '" + std::string(text) + "'");
}

std::vector<std::string> PartitionResult::request_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : units) {
    if (id != kBackgroundUnit) ids.push_back(id);
  }
  return ids;
}

namespace {

struct RequestState {
  bool ended = false;
};

class Partitioner {
 public:
  Partitioner(const EventLog& log, ServerModel model) : log_(log), model_(model) {}

  PartitionResult run() {
    for (const Event& ev : log_.events) {
      if (ev.is_delimiter()) {
        on_delimiter(ev);
      } else {
        on_syscall(ev);
      }
    }
    close_dangling();
    finalize_background();
    return std::move(result_);
  }

 private:
  RequestUnit& unit(const std::string& id) {
    auto [it, inserted] = result_.units.try_emplace(id);
    if (inserted) it->second.request_id = id;
    return it->second;
  }

  void acquire(const Event& ev, const std::string& id) {
    owner_[ev.thread()] = id;
    unit(id).segments.push_back({ev.thread(), ev.ts, ev.ts});
  }

  void release(const Event& ev, const std::string& id) {
    owner_.erase(ev.thread());
    auto& segs = unit(id).segments;
    for (auto it = segs.rbegin(); it != segs.rend(); ++it) {
      if (it->thread == ev.thread()) {
        it->end_ts = ev.ts;
        break;
      }
    }
  }

  [[noreturn]] void dangling(const Event& ev, const std::string& why) {
    throw Error(ErrorCode::DanglingSwitch, ev.delimiter().request_id + " at " + ev.ref().label() + ": " + why);
  }

  void on_delimiter(const Event& ev) {
    const auto& d = ev.delimiter();
    const std::string& id = d.request_id;
    if (id == kBackgroundUnit) dangling(ev, "reserved request id");
    auto current = owner_.find(ev.thread());
    std::optional<std::string> owner;
    if (current != owner_.end()) owner = current->second;

    switch (d.marker) {
      case Marker::begin: {
        if (states_.contains(id)) dangling(ev, "request begun twice");
        if (owner) {
          if (model_ == ServerModel::coroutine) dangling(ev, "begin while " + *owner + " owns the thread");
          // Thread-per-request: an unterminated request ends where the next begins.
          result_.diagnostics.push_back({"ImplicitEnd", *owner + " closed by begin of " + id});
          unit(*owner).end_ts = ev.ts;
          states_[*owner].ended = true;
          release(ev, *owner);
        }
        states_[id] = RequestState{};
        unit(id).begin_ts = ev.ts;
        acquire(ev, id);
        break;
      }
      case Marker::switch_in: {
        auto st = states_.find(id);
        if (st == states_.end()) dangling(ev, "switch_in without begin");
        if (st->second.ended) dangling(ev, "switch_in after end");
        if (owner) dangling(ev, "switch_in while " + *owner + " owns the thread");
        acquire(ev, id);
        break;
      }
      case Marker::switch_out: {
        if (!states_.contains(id)) dangling(ev, "switch_out without begin");
        if (owner != id) dangling(ev, "switch_out by non-owner");
        release(ev, id);
        break;
      }
      case Marker::end: {
        auto st = states_.find(id);
        if (st == states_.end()) dangling(ev, "end without begin");
        if (owner != id) dangling(ev, "end by non-owner");
        st->second.ended = true;
        unit(id).end_ts = ev.ts;
        release(ev, id);
        break;
      }
    }
  }

  void on_syscall(const Event& ev) {
    auto it = owner_.find(ev.thread());
    if (it != owner_.end()) {
      unit(it->second).events.push_back(ev);
    } else {
      background_.push_back(ev);
    }
  }

  void close_dangling() {
    Nanos log_end = log_.end_ts();
    for (auto& [id, st] : states_) {
      if (st.ended) continue;
      RequestUnit& u = unit(id);
      u.unclosed = true;
      u.end_ts = log_end;
      for (const auto& [thread, owner] : owner_) {
        if (owner != id) continue;
        for (auto seg = u.segments.rbegin(); seg != u.segments.rend(); ++seg) {
          if (seg->thread == thread) {
            seg->end_ts = log_end;
            break;
          }
        }
      }
      result_.diagnostics.push_back({"UnclosedRequest", id + " never ended; closed at log end"});
    }
  }

  void finalize_background() {
    RequestUnit& bg = unit(std::string(kBackgroundUnit));
    bg.events = std::move(background_);
    if (!bg.events.empty()) {
      bg.begin_ts = bg.events.front().ts;
      bg.end_ts = bg.events.back().ts;
    }
  }

  const EventLog& log_;
  ServerModel model_;
  PartitionResult result_;
  std::map<ThreadKey, std::string> owner_;
  std::map<std::string, RequestState> states_;
  std::vector<Event> background_;
};

}  // namespace

PartitionResult partition(const EventLog& log, ServerModel model) { return Partitioner(log, model).run(); }

const RequestUnit& unit_for(const PartitionResult& result, const std::string& request_id) {
  auto it = result.units.find(request_id);
  if (it == result.units.end()) throw Error(ErrorCode::UnknownRequest, request_id);
  return it->second;
}

}  // namespace rwd
