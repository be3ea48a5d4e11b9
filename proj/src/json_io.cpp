#include "rewind/json_io.hpp"

namespace rwd {

json to_json(const ThreadKey& key) { return {{"host", key.host}, {"pid", key.pid}, {"tid", key.tid}}; }

ThreadKey thread_key_from_json(const json& j) {
  return {j.at("host").get<std::string>(), j.at("pid").get<int>(), j.at("tid").get<int>()};
}

json to_json(const EventRef& ref) { return {{"host", ref.host}, {"seq", ref.seq}}; }

EventRef event_ref_from_json(const json& j) {
  return {j.at("host").get<std::string>(), j.at("seq").get<std::uint64_t>()};
}

json to_json(const NetworkTuple& t) {
  return {{"src_ip", t.src_ip}, {"src_port", t.src_port}, {"dst_ip", t.dst_ip}, {"dst_port", t.dst_port}};
}

NetworkTuple network_tuple_from_json(const json& j) {
  return {j.at("src_ip").get<std::string>(), j.at("src_port").get<int>(), j.at("dst_ip").get<std::string>(),
          j.at("dst_port").get<int>()};
}

json to_json(const Anchor& a) {
  return {{"tuple", to_json(a.tuple)}, {"t_start", a.window.start}, {"t_end", a.window.end}};
}

Anchor anchor_from_json(const json& j) {
  return {network_tuple_from_json(j.at("tuple")), {j.at("t_start").get<Nanos>(), j.at("t_end").get<Nanos>()}};
}

json to_json(const DBOperation& op) {
  json j = {{"ts", op.ts}, {"statement", op.statement}, {"worker", op.worker}};
  if (op.source_anchor) j["source_anchor"] = to_json(*op.source_anchor);
  if (op.completed_past_window) j["completed_past_window"] = true;
  return j;
}

DBOperation db_operation_from_json(const json& j) {
  DBOperation op;
  op.ts = j.at("ts").get<Nanos>();
  op.statement = j.at("statement").get<std::string>();
  op.worker = j.at("worker").get<std::string>();
  if (j.contains("source_anchor")) op.source_anchor = anchor_from_json(j.at("source_anchor"));
  op.completed_past_window = j.value("completed_past_window", false);
  return op;
}

json to_json(const FileOperation& op) {
  json j = {{"path", op.path},
            {"kind", std::string(to_string(op.kind))},
            {"ts", op.ts},
            {"actor", to_json(op.actor)},
            {"source", to_json(op.source)}};
  if (op.payload) {
    j["payload"] = {{"offset", op.payload->offset},
                    {"length", op.payload->data.size()},
                    {"data_b64", base64_encode(op.payload->data)},
                    {"write_ts", op.payload->write_ts},
                    {"write_source", to_json(op.payload->write_source)}};
  }
  if (op.rename_to) j["rename_to"] = *op.rename_to;
  if (op.truncate) j["truncate"] = true;
  return j;
}

FileOperation file_operation_from_json(const json& j) {
  FileOperation op;
  op.path = j.at("path").get<std::string>();
  op.kind = file_op_kind_from_string(j.at("kind").get<std::string>());
  op.ts = j.at("ts").get<Nanos>();
  op.actor = thread_key_from_json(j.at("actor"));
  op.source = event_ref_from_json(j.at("source"));
  if (j.contains("payload")) {
    const json& p = j.at("payload");
    op.payload = PayloadRef{p.at("offset").get<std::int64_t>(), base64_decode(p.at("data_b64").get<std::string>()),
                            p.at("write_ts").get<Nanos>(), event_ref_from_json(p.at("write_source"))};
  }
  if (j.contains("rename_to")) op.rename_to = j.at("rename_to").get<std::string>();
  op.truncate = j.value("truncate", false);
  return op;
}

json to_json(const ExternalInteraction& x) {
  return {{"tuple", to_json(x.tuple)},
          {"first_ts", x.first_ts},
          {"last_ts", x.last_ts},
          {"byte_count", x.byte_count},
          {"direction", x.direction}};
}

ExternalInteraction external_interaction_from_json(const json& j) {
  ExternalInteraction x;
  x.tuple = network_tuple_from_json(j.at("tuple"));
  x.first_ts = j.at("first_ts").get<Nanos>();
  x.last_ts = j.at("last_ts").get<Nanos>();
  x.byte_count = j.at("byte_count").get<std::size_t>();
  x.direction = j.at("direction").get<std::string>();
  return x;
}

}  // namespace rwd
