#pragma once

#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rewind/error.hpp"

namespace rwd {

using Nanos = std::int64_t;

inline constexpr std::size_t kMaxPayloadBytes = 1u << 20;

// Linux openat flag bits; only the ones the analysis looks at.
inline constexpr int kOpenWriteOnly = 0x1;
inline constexpr int kOpenReadWrite = 0x2;
inline constexpr int kOpenCreate = 0x40;
inline constexpr int kOpenTruncate = 0x200;
inline constexpr int kOpenAppend = 0x400;

struct Endpoint {
  std::string ip;
  int port = 0;

  auto operator<=>(const Endpoint&) const = default;
  std::string label() const { return ip + ":" + std::to_string(port); }
};

using EndpointSet = std::set<Endpoint>;

// "ip:port"; throws InvalidArgument.
Endpoint parse_endpoint(std::string_view text);
EndpointSet parse_endpoint_list(std::string_view comma_separated);

struct NetworkTuple {
  std::string src_ip;
  int src_port = 0;
  std::string dst_ip;
  int dst_port = 0;

  auto operator<=>(const NetworkTuple&) const = default;

  Endpoint source() const { return {src_ip, src_port}; }
  Endpoint destination() const { return {dst_ip, dst_port}; }
  std::string label() const;
};

enum class Syscall {
  fork, clone, execve, exit, socket, connect, accept, dup, close,
  openat, read, write, unlink, rename, sendto, recvfrom,
};

std::string_view to_string(Syscall name);
std::optional<Syscall> syscall_from_string(std::string_view name);

struct SyscallArgs {
  std::optional<int> fd;
  std::optional<int> new_fd;
  std::optional<std::string> path;
  std::optional<std::string> old_path;
  std::optional<std::string> new_path;
  std::optional<std::int64_t> offset;
  std::optional<int> flags;
  std::optional<std::string> data;  // raw bytes
  std::optional<int> child_pid;
  std::optional<int> child_tid;
  std::optional<NetworkTuple> endpoint;

  bool operator==(const SyscallArgs&) const = default;
};

struct SyscallPayload {
  Syscall name = Syscall::exit;
  SyscallArgs args;

  bool operator==(const SyscallPayload&) const = default;
};

enum class Marker { begin, end, switch_in, switch_out };

std::string_view to_string(Marker marker);

struct DelimiterPayload {
  std::string request_id;
  Marker marker = Marker::begin;

  bool operator==(const DelimiterPayload&) const = default;
};

// Filled in by resolve_fd_tuples; never serialized.
struct FdResolution {
  std::optional<NetworkTuple> tuple;
  bool outbound = false;
  std::optional<std::string> path;

  bool operator==(const FdResolution&) const = default;
};

struct ThreadKey {
  std::string host;
  int pid = 0;
  int tid = 0;

  auto operator<=>(const ThreadKey&) const = default;
  std::string label() const;
};

// Globally unique identity of an event across merged logs.
struct EventRef {
  std::string host;
  std::uint64_t seq = 0;

  auto operator<=>(const EventRef&) const = default;
  std::string label() const { return host + ":" + std::to_string(seq); }
};

struct Event {
  std::uint64_t seq = 0;
  Nanos ts = 0;
  std::string host;
  int pid = 0;
  int tid = 0;
  std::variant<SyscallPayload, DelimiterPayload> payload;
  FdResolution resolved;

  bool is_syscall() const { return std::holds_alternative<SyscallPayload>(payload); }
  bool is_delimiter() const { return std::holds_alternative<DelimiterPayload>(payload); }
  const SyscallPayload& syscall() const { return std::get<SyscallPayload>(payload); }
  const DelimiterPayload& delimiter() const { return std::get<DelimiterPayload>(payload); }

  ThreadKey thread() const { return {host, pid, tid}; }
  EventRef ref() const { return {host, seq}; }

  // File path the event touches, preferring the explicit argument.
  std::optional<std::string> file_path() const;

  bool operator==(const Event&) const = default;
};

// Total order used everywhere: (ts, seq, host).
inline bool event_before(const Event& a, const Event& b) {
  if (a.ts != b.ts) return a.ts < b.ts;
  if (a.seq != b.seq) return a.seq < b.seq;
  return a.host < b.host;
}

struct EventLog {
  std::vector<Event> events;
  Diagnostics diagnostics;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  Nanos end_ts() const { return events.empty() ? 0 : events.back().ts; }
};

struct EventIndex {
  std::map<ThreadKey, std::vector<std::size_t>> by_thread;
  std::map<std::string, std::vector<std::size_t>> delimiters_by_request;
  std::map<NetworkTuple, std::vector<std::size_t>> by_tuple;
  std::map<EventRef, std::size_t> by_ref;
};

EventIndex build_index(const EventLog& log);

// Canonical line-delimited JSON trace format.
EventLog parse_trace(std::istream& stream, const std::string& host_label);
EventLog parse_trace(std::string_view text, const std::string& host_label);
std::string serialize_event(const Event& event);
std::string serialize_trace(const EventLog& log);

EventLog merge_logs(std::span<const EventLog> logs);

// Annotates socket I/O with the 4-tuple in force for (host, pid, fd), and file
// I/O with the path. Unknown fds become UnknownFd diagnostics.
EventLog resolve_fd_tuples(const EventLog& log);

}  // namespace rwd
