#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <tuple>

#include "rewind/trace.hpp"

namespace rwd {

// [t_start, t_end) on the clock of the host that produced the events.
struct TimeWindow {
  Nanos start = 0;
  Nanos end = 0;

  bool contains(Nanos ts) const { return ts >= start && ts < end; }
  bool operator==(const TimeWindow&) const = default;
};

// A DB connection tuple plus the window in which a request had it.
struct Anchor {
  NetworkTuple tuple;
  TimeWindow window;

  bool operator==(const Anchor&) const = default;
};

struct DBOperation {
  Nanos ts = 0;
  std::string statement;
  // "pid:tid" of the DB worker on the syscall path, "ip:port" of the client on
  // the app-log path.
  std::string worker;
  std::optional<Anchor> source_anchor;
  // Statement text was completed from a write past the window end.
  bool completed_past_window = false;

  // Stable identity shared with the simulator's ground truth.
  std::string id() const { return "db:" + std::to_string(ts) + ":" + statement; }
  // Matching key used to filter malicious operations out of the full log.
  std::tuple<Nanos, std::string, std::string> key() const { return {ts, worker, statement}; }

  bool operator==(const DBOperation&) const = default;
};

enum class FileOpKind { create, write, remove, rename };

std::string_view to_string(FileOpKind kind);
FileOpKind file_op_kind_from_string(std::string_view text);

struct PayloadRef {
  std::int64_t offset = 0;
  std::string data;
  // The write syscall that carried the bytes; for folded creates this differs
  // from the operation's own source event.
  Nanos write_ts = 0;
  EventRef write_source;

  bool operator==(const PayloadRef&) const = default;
};

struct FileOperation {
  std::string path;
  FileOpKind kind = FileOpKind::write;
  Nanos ts = 0;
  ThreadKey actor;
  std::optional<PayloadRef> payload;
  std::optional<std::string> rename_to;
  bool truncate = false;
  EventRef source;

  std::string id() const { return "fs:" + source.label(); }

  bool operator==(const FileOperation&) const = default;
};

}  // namespace rwd
