#include "rewind/write_log.hpp"

namespace rwd {

json to_json(const WriteLogRecord& r) {
  return {{"seq", r.seq},   {"ts", r.ts},         {"pid", r.pid},
          {"tid", r.tid},   {"path", r.path},     {"offset", r.offset},
          {"data_b64", base64_encode(r.data)}};
}

WriteLogRecord write_log_record_from_json(const json& j) {
  WriteLogRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.ts = j.at("ts").get<Nanos>();
  r.pid = j.at("pid").get<int>();
  r.tid = j.at("tid").get<int>();
  r.path = j.at("path").get<std::string>();
  r.offset = j.at("offset").get<std::int64_t>();
  r.data = base64_decode(j.at("data_b64").get<std::string>());
  return r;
}

WriteLog parse_write_log(std::string_view text) {
  WriteLog log;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::MalformedRecord, "write log line " + std::to_string(line_no));
    }
    try {
      log.records.push_back(write_log_record_from_json(j));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, "write log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

std::string serialize_write_log(const WriteLog& log) {
  std::string out;
  for (const auto& r : log.records) {
    out += canonical_dump(to_json(r));
    out += '\n';
  }
  return out;
}

void check_write_log(const WriteLog& log, const Classification& classification) {
  for (const auto& r : log.records) {
    if (classification.classify(r.path) != DirClass::data) {
      throw Error(ErrorCode::ClassificationGap, "write-log record outside data dirs: " + r.path);
    }
  }
}

}  // namespace rwd
