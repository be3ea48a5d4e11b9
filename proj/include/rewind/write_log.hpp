#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "rewind/file_tree.hpp"
#include "rewind/trace.hpp"

namespace rwd {

// Full-payload capture of one write into a data directory.
struct WriteLogRecord {
  std::uint64_t seq = 0;
  Nanos ts = 0;
  int pid = 0;
  int tid = 0;
  std::string path;
  std::int64_t offset = 0;
  std::string data;

  // Joins a record to the traced write syscall it mirrors.
  std::tuple<Nanos, int, int, std::string, std::int64_t> match_key() const { return {ts, pid, tid, path, offset}; }

  bool operator==(const WriteLogRecord&) const = default;
};

struct WriteLog {
  std::vector<WriteLogRecord> records;
};

json to_json(const WriteLogRecord& rec);
WriteLogRecord write_log_record_from_json(const json& j);

WriteLog parse_write_log(std::string_view text);
std::string serialize_write_log(const WriteLog& log);

// Throws ClassificationGap if a record lies outside the data directories.
void check_write_log(const WriteLog& log, const Classification& classification);

}  // namespace rwd
