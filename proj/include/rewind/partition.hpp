#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rewind/trace.hpp"

namespace rwd {

inline constexpr std::string_view kBackgroundUnit = "_background";

enum class ServerModel { thread_per_request, coroutine };

std::string_view to_string(ServerModel model);
ServerModel server_model_from_string(std::string_view text);

// Interval [start_ts, end_ts] during which one (pid, tid) executed on behalf
// of a request, bounded by the acquiring and releasing delimiters.
struct OwnerSegment {
  ThreadKey thread;
  Nanos start_ts = 0;
  Nanos end_ts = 0;

  bool operator==(const OwnerSegment&) const = default;
};

struct RequestUnit {
  std::string request_id;
  std::vector<Event> events;  // syscalls only, source order
  Nanos begin_ts = 0;
  Nanos end_ts = 0;
  std::vector<OwnerSegment> segments;
  bool unclosed = false;
};

struct PartitionResult {
  std::map<std::string, RequestUnit> units;  // includes kBackgroundUnit
  Diagnostics diagnostics;

  // Request units only (background excluded), in id order.
  std::vector<std::string> request_ids() const;
};

PartitionResult partition(const EventLog& log, ServerModel model);

const RequestUnit& unit_for(const PartitionResult& result, const std::string& request_id);

}  // namespace rwd
