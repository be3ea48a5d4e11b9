#include "rewind/trace.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <sstream>

#include "rewind/codec.hpp"

namespace rwd {

namespace {

constexpr std::array<std::string_view, 16> kSyscallNames = {
    "fork", "clone", "execve", "exit", "socket", "connect", "accept", "dup", "close",
    "openat", "read", "write", "unlink", "rename", "sendto", "recvfrom"};

constexpr std::array<std::string_view, 4> kMarkerNames = {"begin", "end", "switch_in", "switch_out"};

const std::set<std::string, std::less<>> kTopLevelKeys = {
    "seq", "ts", "pid", "tid", "kind", "name", "args", "request_id", "marker"};

const std::set<std::string, std::less<>> kArgKeys = {
    "fd", "new_fd", "path", "old_path", "new_path", "offset", "flags", "data_b64",
    "child_pid", "child_tid", "src_ip", "src_port", "dst_ip", "dst_port"};

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": " + why);
}

std::int64_t get_int(const json& obj, std::string_view key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(line_no, "missing field " + std::string(key));
  if (!it->is_number_integer()) malformed(line_no, "field " + std::string(key) + " is not an integer");
  return it->get<std::int64_t>();
}

std::string get_string(const json& obj, std::string_view key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(line_no, "missing field " + std::string(key));
  if (!it->is_string()) malformed(line_no, "field " + std::string(key) + " is not a string");
  return it->get<std::string>();
}

int checked_port(std::int64_t port, std::size_t line_no) {
  if (port < 1 || port > 65535) malformed(line_no, "port out of range");
  return static_cast<int>(port);
}

SyscallArgs parse_args(const json& args, std::size_t line_no) {
  if (!args.is_object()) malformed(line_no, "args is not an object");
  for (const auto& [key, _] : args.items()) {
    if (!kArgKeys.contains(key)) malformed(line_no, "unknown arg " + key);
  }
  SyscallArgs out;
  auto opt_int = [&](std::string_view key) -> std::optional<std::int64_t> {
    if (!args.contains(key)) return std::nullopt;
    return get_int(args, key, line_no);
  };
  auto opt_str = [&](std::string_view key) -> std::optional<std::string> {
    if (!args.contains(key)) return std::nullopt;
    return get_string(args, key, line_no);
  };
  if (auto v = opt_int("fd")) out.fd = static_cast<int>(*v);
  if (auto v = opt_int("new_fd")) out.new_fd = static_cast<int>(*v);
  out.path = opt_str("path");
  out.old_path = opt_str("old_path");
  out.new_path = opt_str("new_path");
  out.offset = opt_int("offset");
  if (auto v = opt_int("flags")) out.flags = static_cast<int>(*v);
  if (auto v = opt_str("data_b64")) {
    out.data = base64_decode(*v);
    if (out.data->size() > kMaxPayloadBytes) malformed(line_no, "payload exceeds 1 MiB");
  }
  if (auto v = opt_int("child_pid")) out.child_pid = static_cast<int>(*v);
  if (auto v = opt_int("child_tid")) out.child_tid = static_cast<int>(*v);
  int endpoint_fields = static_cast<int>(args.contains("src_ip")) + args.contains("src_port") +
                        args.contains("dst_ip") + args.contains("dst_port");
  if (endpoint_fields == 4) {
    out.endpoint = NetworkTuple{get_string(args, "src_ip", line_no),
                                checked_port(get_int(args, "src_port", line_no), line_no),
                                get_string(args, "dst_ip", line_no),
                                checked_port(get_int(args, "dst_port", line_no), line_no)};
  } else if (endpoint_fields != 0) {
    malformed(line_no, "partial endpoint tuple");
  }
  return out;
}

void require_args(Syscall name, const SyscallArgs& a, std::size_t line_no) {
  auto need = [&](bool present, std::string_view what) {
    if (!present) malformed(line_no, std::string(to_string(name)) + " requires " + std::string(what));
  };
  switch (name) {
    case Syscall::fork:
    case Syscall::clone:
      need(a.child_pid.has_value(), "child_pid");
      need(a.child_tid.has_value(), "child_tid");
      break;
    case Syscall::execve: need(a.path.has_value(), "path"); break;
    case Syscall::exit: break;
    case Syscall::socket:
    case Syscall::close:
    case Syscall::read:
    case Syscall::recvfrom: need(a.fd.has_value(), "fd"); break;
    case Syscall::connect:
    case Syscall::accept:
      need(a.fd.has_value(), "fd");
      need(a.endpoint.has_value(), "endpoint tuple");
      break;
    case Syscall::dup:
      need(a.fd.has_value(), "fd");
      need(a.new_fd.has_value(), "new_fd");
      break;
    case Syscall::openat:
      need(a.fd.has_value(), "fd");
      need(a.path.has_value(), "path");
      break;
    case Syscall::write:
    case Syscall::sendto:
      need(a.fd.has_value(), "fd");
      need(a.data.has_value(), "data_b64");
      break;
    case Syscall::unlink: need(a.path.has_value(), "path"); break;
    case Syscall::rename:
      need(a.old_path.has_value(), "old_path");
      need(a.new_path.has_value(), "new_path");
      break;
  }
}

Event parse_line(std::string_view line, std::size_t line_no, const std::string& host) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) malformed(line_no, "not a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!kTopLevelKeys.contains(key)) malformed(line_no, "unknown field " + key);
  }
  Event ev;
  std::int64_t seq = get_int(obj, "seq", line_no);
  if (seq < 0) malformed(line_no, "negative seq");
  ev.seq = static_cast<std::uint64_t>(seq);
  ev.ts = get_int(obj, "ts", line_no);
  if (ev.ts < 0) malformed(line_no, "negative ts");
  ev.pid = static_cast<int>(get_int(obj, "pid", line_no));
  ev.tid = static_cast<int>(get_int(obj, "tid", line_no));
  ev.host = host;
  std::string kind = get_string(obj, "kind", line_no);
  if (kind == "syscall") {
    if (obj.contains("request_id") || obj.contains("marker")) malformed(line_no, "delimiter field on syscall");
    auto name = syscall_from_string(get_string(obj, "name", line_no));
    if (!name) malformed(line_no, "unknown syscall name");
    SyscallPayload p;
    p.name = *name;
    if (obj.contains("args")) p.args = parse_args(obj.at("args"), line_no);
    require_args(p.name, p.args, line_no);
    ev.payload = std::move(p);
  } else if (kind == "delimiter") {
    if (obj.contains("name") || obj.contains("args")) malformed(line_no, "syscall field on delimiter");
    DelimiterPayload d;
    d.request_id = get_string(obj, "request_id", line_no);
    if (d.request_id.empty()) malformed(line_no, "empty request_id");
    std::string marker = get_string(obj, "marker", line_no);
    auto it = std::find(kMarkerNames.begin(), kMarkerNames.end(), marker);
    if (it == kMarkerNames.end()) malformed(line_no, "unknown marker " + marker);
    d.marker = static_cast<Marker>(it - kMarkerNames.begin());
    ev.payload = std::move(d);
  } else {
    malformed(line_no, "unknown kind " + kind);
  }
  return ev;
}

json args_to_json(const SyscallArgs& a) {
  json out = json::object();
  if (a.fd) out["fd"] = *a.fd;
  if (a.new_fd) out["new_fd"] = *a.new_fd;
  if (a.path) out["path"] = *a.path;
  if (a.old_path) out["old_path"] = *a.old_path;
  if (a.new_path) out["new_path"] = *a.new_path;
  if (a.offset) out["offset"] = *a.offset;
  if (a.flags) out["flags"] = *a.flags;
  if (a.data) out["data_b64"] = base64_encode(*a.data);
  if (a.child_pid) out["child_pid"] = *a.child_pid;
  if (a.child_tid) out["child_tid"] = *a.child_tid;
  if (a.endpoint) {
    out["src_ip"] = a.endpoint->src_ip;
    out["src_port"] = a.endpoint->src_port;
    out["dst_ip"] = a.endpoint->dst_ip;
    out["dst_port"] = a.endpoint->dst_port;
  }
  return out;
}

}  // namespace

std::string NetworkTuple::label() const {
  return src_ip + ":" + std::to_string(src_port) + "->" + dst_ip + ":" + std::to_string(dst_port);
}

std::string ThreadKey::label() const {
  return host + "/" + std::to_string(pid) + "/" + std::to_string(tid);
}

Endpoint parse_endpoint(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must be ip:port, got '" + std::string(text) + "'");
  }
  int port = 0;
  auto digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || port < 1 || port > 65535) {
    throw Error(ErrorCode::InvalidArgument, "bad port in '" + std::string(text) + "'");
  }
  return {std::string(text.substr(0, colon)), port};
}

EndpointSet parse_endpoint_list(std::string_view text) {
  EndpointSet out;
  while (!text.empty()) {
    auto comma = text.find(',');
    auto item = text.substr(0, comma);
    if (!item.empty()) out.insert(parse_endpoint(item));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string_view to_string(Syscall name) { return kSyscallNames[static_cast<std::size_t>(name)]; }

std::optional<Syscall> syscall_from_string(std::string_view name) {
  auto it = std::find(kSyscallNames.begin(), kSyscallNames.end(), name);
  if (it == kSyscallNames.end()) return std::nullopt;
  return static_cast<Syscall>(it - kSyscallNames.begin());
}

std::string_view to_string(Marker marker) { return kMarkerNames[static_cast<std::size_t>(marker)]; }

std::optional<std::string> Event::file_path() const {
  if (!is_syscall()) return std::nullopt;
  const auto& a = syscall().args;
  if (a.path) return a.path;
  return resolved.path;
}

EventIndex build_index(const EventLog& log) {
  EventIndex idx;
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const Event& ev = log.events[i];
    idx.by_ref.emplace(ev.ref(), i);
    idx.by_thread[ev.thread()].push_back(i);
    if (ev.is_delimiter()) {
      idx.delimiters_by_request[ev.delimiter().request_id].push_back(i);
    } else if (ev.resolved.tuple) {
      idx.by_tuple[*ev.resolved.tuple].push_back(i);
    }
  }
  return idx;
}

EventLog parse_trace(std::istream& stream, const std::string& host_label) {
  EventLog log;
  std::string line;
  std::size_t line_no = 0;
  bool have_prev = false;
  std::uint64_t prev_seq = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    Event ev = parse_line(line, line_no, host_label);
    if (have_prev && ev.seq <= prev_seq) {
      throw Error(ErrorCode::OrderViolation, "line " + std::to_string(line_no) + ": seq " +
                                                 std::to_string(ev.seq) + " after " + std::to_string(prev_seq));
    }
    prev_seq = ev.seq;
    have_prev = true;
    log.events.push_back(std::move(ev));
  }
  std::stable_sort(log.events.begin(), log.events.end(), event_before);
  return log;
}

EventLog parse_trace(std::string_view text, const std::string& host_label) {
  std::istringstream in{std::string(text)};
  return parse_trace(in, host_label);
}

std::string serialize_event(const Event& ev) {
  json obj;
  obj["seq"] = ev.seq;
  obj["ts"] = ev.ts;
  obj["pid"] = ev.pid;
  obj["tid"] = ev.tid;
  if (ev.is_syscall()) {
    const auto& s = ev.syscall();
    obj["kind"] = "syscall";
    obj["name"] = std::string(to_string(s.name));
    obj["args"] = args_to_json(s.args);
  } else {
    const auto& d = ev.delimiter();
    obj["kind"] = "delimiter";
    obj["request_id"] = d.request_id;
    obj["marker"] = std::string(to_string(d.marker));
  }
  return canonical_dump(obj);
}

std::string serialize_trace(const EventLog& log) {
  std::string out;
  for (const Event& ev : log.events) {
    out += serialize_event(ev);
    out += '\n';
  }
  return out;
}

EventLog merge_logs(std::span<const EventLog> logs) {
  EventLog out;
  std::size_t total = 0;
  for (const auto& l : logs) total += l.events.size();
  out.events.reserve(total);
  for (const auto& l : logs) {
    out.events.insert(out.events.end(), l.events.begin(), l.events.end());
    out.diagnostics.insert(out.diagnostics.end(), l.diagnostics.begin(), l.diagnostics.end());
  }
  std::stable_sort(out.events.begin(), out.events.end(), event_before);
  return out;
}

namespace {

struct FdEntry {
  bool is_socket = false;
  std::optional<NetworkTuple> tuple;
  bool outbound = false;
  std::optional<std::string> path;
};

using FdTable = std::map<int, FdEntry>;

}  // namespace

EventLog resolve_fd_tuples(const EventLog& log) {
  EventLog out = log;
  std::map<std::pair<std::string, int>, FdTable> tables;
  auto unknown_fd = [&](const Event& ev, int fd) {
    out.diagnostics.push_back({"UnknownFd", ev.ref().label() + " " + std::string(to_string(ev.syscall().name)) +
                                                " on fd " + std::to_string(fd) + " of " + ev.thread().label()});
  };
  for (Event& ev : out.events) {
    if (!ev.is_syscall()) continue;
    const auto& s = ev.syscall();
    const auto& a = s.args;
    FdTable& table = tables[{ev.host, ev.pid}];
    auto annotate = [&](const FdEntry& e) {
      if (e.is_socket) {
        ev.resolved.tuple = e.tuple;
        ev.resolved.outbound = e.outbound;
      } else {
        ev.resolved.path = e.path;
      }
    };
    switch (s.name) {
      case Syscall::fork:
      case Syscall::clone:
        if (*a.child_pid != ev.pid) tables[{ev.host, *a.child_pid}] = table;
        break;
      case Syscall::exit:
        if (ev.pid == ev.tid) tables.erase({ev.host, ev.pid});
        break;
      case Syscall::socket: table[*a.fd] = FdEntry{true, std::nullopt, false, std::nullopt}; break;
      case Syscall::connect: {
        FdEntry e{true, a.endpoint, true, std::nullopt};
        table[*a.fd] = e;
        annotate(e);
        break;
      }
      case Syscall::accept: {
        FdEntry e{true, a.endpoint, false, std::nullopt};
        table[*a.fd] = e;
        annotate(e);
        break;
      }
      case Syscall::dup: {
        auto it = table.find(*a.fd);
        if (it == table.end()) {
          unknown_fd(ev, *a.fd);
        } else {
          FdEntry copy = it->second;
          table[*a.new_fd] = copy;
          annotate(copy);
        }
        break;
      }
      case Syscall::close: {
        auto it = table.find(*a.fd);
        if (it == table.end()) {
          unknown_fd(ev, *a.fd);
        } else {
          annotate(it->second);
          table.erase(it);
        }
        break;
      }
      case Syscall::openat: {
        FdEntry e{false, std::nullopt, false, a.path};
        table[*a.fd] = e;
        annotate(e);
        break;
      }
      case Syscall::read:
      case Syscall::write:
      case Syscall::sendto:
      case Syscall::recvfrom: {
        if (s.name == Syscall::sendto && a.endpoint) {
          ev.resolved.tuple = a.endpoint;
          ev.resolved.outbound = true;
          break;
        }
        auto it = table.find(*a.fd);
        if (it != table.end()) {
          annotate(it->second);
        } else if (!a.path) {
          unknown_fd(ev, *a.fd);
        }
        break;
      }
      case Syscall::rename:
        for (auto& [key, t] : tables) {
          if (key.first != ev.host) continue;
          for (auto& [fd, e] : t) {
            if (!e.is_socket && e.path == a.old_path) e.path = a.new_path;
          }
        }
        break;
      case Syscall::execve:
      case Syscall::unlink: break;
    }
  }
  return out;
}

}  // namespace rwd
