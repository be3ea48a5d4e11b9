#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rewind/operations.hpp"
#include "rewind/partition.hpp"
#include "rewind/trace.hpp"

namespace rwd {

inline constexpr std::string_view kDefaultStatementLog = "/var/log/db/statements.log";

// One anchor per DB tuple the unit used: [first use, last use + 1ns), widened
// on both sides by max_clock_skew.
std::vector<Anchor> extract_anchors(const RequestUnit& unit, const EndpointSet& db_endpoints,
                                    Nanos max_clock_skew = 0);

// Indexed view of a DB host log: connection -> worker thread, and each
// worker's writes to the statement log.
class DbAttributor {
 public:
  DbAttributor(const EventLog& db_log, std::string statement_log_path);

  std::optional<ThreadKey> worker_for(const NetworkTuple& tuple) const;

  std::vector<DBOperation> ops_in_window(const ThreadKey& worker, const TimeWindow& window) const;

  // Every statement any worker logged, in completion order.
  std::vector<DBOperation> all_ops() const;

 private:
  struct LogWrite {
    Nanos ts;
    std::string data;
  };

  std::map<NetworkTuple, ThreadKey> served_by_;
  std::map<NetworkTuple, ThreadKey> accepted_by_;
  std::map<ThreadKey, std::vector<LogWrite>> writes_;
};

std::string worker_label(const ThreadKey& worker);

// Throws NoWorkerFound.
ThreadKey map_worker(const EventLog& db_log, const NetworkTuple& tuple);

std::vector<DBOperation> extract_ops_syscall(const EventLog& db_log, const ThreadKey& worker,
                                             const TimeWindow& window, std::string_view statement_log_path);

// `<ts>\t<client ip:port or ->\t<statement>` per line.
struct AppLogRecord {
  Nanos ts = 0;
  std::optional<Endpoint> client;
  std::string statement;

  bool operator==(const AppLogRecord&) const = default;
};

struct AppLog {
  std::vector<AppLogRecord> records;
};

AppLog parse_app_log(std::string_view text);
std::string serialize_app_log(const AppLog& log);

std::vector<DBOperation> extract_ops_applog(const AppLog& log, const Anchor& anchor);

std::vector<DBOperation> full_log_from_applog(const AppLog& log);

}  // namespace rwd
