#include "rewind/db_attribution.hpp"

#include <algorithm>
#include <charconv>

namespace rwd {

std::vector<Anchor> extract_anchors(const RequestUnit& unit, const EndpointSet& db_endpoints, Nanos max_clock_skew) {
  std::map<NetworkTuple, std::pair<Nanos, Nanos>> spans;
  for (const Event& ev : unit.events) {
    if (!ev.is_syscall() || !ev.resolved.tuple) continue;
    const NetworkTuple& t = *ev.resolved.tuple;
    if (!db_endpoints.contains(t.destination())) continue;
    auto [it, inserted] = spans.try_emplace(t, ev.ts, ev.ts);
    if (!inserted) {
      it->second.first = std::min(it->second.first, ev.ts);
      it->second.second = std::max(it->second.second, ev.ts);
    }
  }
  std::vector<Anchor> out;
  for (const auto& [tuple, span] : spans) {
    out.push_back({tuple, {span.first - max_clock_skew, span.second + 1 + max_clock_skew}});
  }
  std::sort(out.begin(), out.end(), [](const Anchor& a, const Anchor& b) {
    return std::tie(a.window.start, a.tuple) < std::tie(b.window.start, b.tuple);
  });
  return out;
}

std::string worker_label(const ThreadKey& worker) {
  return std::to_string(worker.pid) + ":" + std::to_string(worker.tid);
}

DbAttributor::DbAttributor(const EventLog& db_log, std::string statement_log_path) {
  for (const Event& ev : db_log.events) {
    if (!ev.is_syscall()) continue;
    const auto& s = ev.syscall();
    switch (s.name) {
      case Syscall::accept:
        accepted_by_.try_emplace(*s.args.endpoint, ev.thread());
        break;
      case Syscall::read:
      case Syscall::recvfrom:
      case Syscall::sendto:
        if (ev.resolved.tuple) served_by_.try_emplace(*ev.resolved.tuple, ev.thread());
        break;
      case Syscall::write:
        if (ev.resolved.tuple) {
          served_by_.try_emplace(*ev.resolved.tuple, ev.thread());
        } else if (ev.file_path() == statement_log_path && s.args.data && !s.args.data->empty()) {
          writes_[ev.thread()].push_back({ev.ts, *s.args.data});
        }
        break;
      default: break;
    }
  }
}

std::optional<ThreadKey> DbAttributor::worker_for(const NetworkTuple& tuple) const {
  if (auto it = served_by_.find(tuple); it != served_by_.end()) return it->second;
  if (auto it = accepted_by_.find(tuple); it != accepted_by_.end()) return it->second;
  return std::nullopt;
}

std::vector<DBOperation> DbAttributor::ops_in_window(const ThreadKey& worker, const TimeWindow& window) const {
  std::vector<DBOperation> out;
  auto it = writes_.find(worker);
  if (it == writes_.end()) return out;
  const auto& writes = it->second;
  auto first = std::lower_bound(writes.begin(), writes.end(), window.start,
                                [](const LogWrite& w, Nanos ts) { return w.ts < ts; });
  auto last = std::lower_bound(first, writes.end(), window.end,
                               [](const LogWrite& w, Nanos ts) { return w.ts < ts; });
  if (first == last) return out;

  const std::string label = worker_label(worker);
  // A statement begun before the window belongs to someone else; skip its tail.
  bool skipping = first != writes.begin() && std::prev(first)->data.back() != '\n';
  std::string buffer;
  auto consume = [&](const LogWrite& w, bool past_window) {
    for (char c : w.data) {
      if (c != '\n') {
        if (!skipping) buffer.push_back(c);
        continue;
      }
      if (skipping) {
        skipping = false;
      } else if (!buffer.empty()) {
        DBOperation op;
        op.ts = w.ts;
        op.statement = std::move(buffer);
        op.worker = label;
        op.completed_past_window = past_window;
        out.push_back(std::move(op));
      }
      buffer.clear();
      if (past_window) return true;
    }
    return false;
  };
  for (auto w = first; w != last; ++w) consume(*w, false);
  if (!buffer.empty()) {
    for (auto w = last; w != writes.end(); ++w) {
      if (consume(*w, true)) break;
    }
  }
  return out;
}

std::vector<DBOperation> DbAttributor::all_ops() const {
  std::vector<DBOperation> out;
  for (const auto& [worker, writes] : writes_) {
    std::string label = worker_label(worker);
    std::string buffer;
    for (const LogWrite& w : writes) {
      for (char c : w.data) {
        if (c != '\n') {
          buffer.push_back(c);
        } else if (!buffer.empty()) {
          out.push_back({w.ts, std::move(buffer), label, std::nullopt, false});
          buffer.clear();
        }
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const DBOperation& a, const DBOperation& b) {
    return std::tie(a.ts, a.worker) < std::tie(b.ts, b.worker);
  });
  return out;
}

ThreadKey map_worker(const EventLog& db_log, const NetworkTuple& tuple) {
  DbAttributor index(db_log, std::string(kDefaultStatementLog));
  auto worker = index.worker_for(tuple);
  if (!worker) throw Error(ErrorCode::NoWorkerFound, tuple.label());
  return *worker;
}

std::vector<DBOperation> extract_ops_syscall(const EventLog& db_log, const ThreadKey& worker,
                                             const TimeWindow& window, std::string_view statement_log_path) {
  return DbAttributor(db_log, std::string(statement_log_path)).ops_in_window(worker, window);
}

AppLog parse_app_log(std::string_view text) {
  AppLog log;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    auto bad = [&](const std::string& why) {
      throw Error(ErrorCode::MalformedRecord, "app log line " + std::to_string(line_no) + ": " + why);
    };
    auto t1 = line.find('\t');
    if (t1 == std::string_view::npos) bad("missing tab");
    auto t2 = line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) bad("missing second tab");
    AppLogRecord rec;
    auto ts_text = line.substr(0, t1);
    auto [ptr, ec] = std::from_chars(ts_text.data(), ts_text.data() + ts_text.size(), rec.ts);
    if (ec != std::errc{} || ptr != ts_text.data() + ts_text.size() || rec.ts < 0) bad("bad timestamp");
    auto client = line.substr(t1 + 1, t2 - t1 - 1);
    if (client != "-") rec.client = parse_endpoint(client);
    rec.statement = std::string(line.substr(t2 + 1));
    if (rec.statement.empty()) bad("empty statement");
    log.records.push_back(std::move(rec));
  }
  return log;
}

std::string serialize_app_log(const AppLog& log) {
  std::string out;
  for (const auto& r : log.records) {
    out += std::to_string(r.ts);
    out += '\t';
    out += r.client ? r.client->label() : "-";
    out += '\t';
    out += r.statement;
    out += '\n';
  }
  return out;
}

std::vector<DBOperation> extract_ops_applog(const AppLog& log, const Anchor& anchor) {
  std::vector<DBOperation> out;
  const Endpoint client = anchor.tuple.source();
  for (const auto& r : log.records) {
    if (r.client != client || !anchor.window.contains(r.ts)) continue;
    out.push_back({r.ts, r.statement, client.label(), anchor, false});
  }
  return out;
}

std::vector<DBOperation> full_log_from_applog(const AppLog& log) {
  std::vector<DBOperation> out;
  out.reserve(log.records.size());
  for (const auto& r : log.records) {
    out.push_back({r.ts, r.statement, r.client ? r.client->label() : "-", std::nullopt, false});
  }
  std::stable_sort(out.begin(), out.end(), [](const DBOperation& a, const DBOperation& b) { return a.ts < b.ts; });
  return out;
}

}  // namespace rwd
