#include "rewind/db_state.hpp"

namespace rwd {

json DBState::to_json() const {
  json out = json::object();
  for (const auto& [table, rows] : tables) {
    if (rows.empty()) continue;
    json t = json::object();
    for (const auto& [key, row] : rows) t[key] = row;
    out[table] = std::move(t);
  }
  return out;
}

DBState DBState::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::CorruptSnapshot, "state is not an object");
  DBState s;
  for (const auto& [table, rows] : j.items()) {
    if (!rows.is_object()) throw Error(ErrorCode::CorruptSnapshot, "table " + table + " is not an object");
    if (rows.empty()) continue;
    auto& t = s.tables[table];
    for (const auto& [key, row] : rows.items()) t[key] = row;
  }
  return s;
}

std::size_t DBState::row_count() const {
  std::size_t n = 0;
  for (const auto& [_, rows] : tables) n += rows.size();
  return n;
}

namespace {

[[noreturn]] void bad_statement(std::string_view text, const std::string& why) {
  throw Error(ErrorCode::StatementParseError, why + ": '" + std::string(text.substr(0, 120)) + "'");
}

std::string_view next_token(std::string_view& rest) {
  auto sp = rest.find(' ');
  std::string_view tok = rest.substr(0, sp);
  rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
  return tok;
}

}  // namespace

Statement parse_statement(std::string_view text) {
  if (text.find('\n') != std::string_view::npos) bad_statement(text, "newline in statement");
  std::string_view rest = text;
  std::string_view verb = next_token(rest);
  std::string_view table = next_token(rest);
  std::string_view key = next_token(rest);
  if (table.empty() || key.empty()) bad_statement(text, "expected <verb> <table> <key>");
  Statement st;
  st.table = std::string(table);
  st.key = std::string(key);
  if (verb == "DEL") {
    st.verb = Verb::remove;
    if (!rest.empty()) bad_statement(text, "DEL takes no fields");
    return st;
  }
  if (verb == "INS") {
    st.verb = Verb::insert;
  } else if (verb == "UPD") {
    st.verb = Verb::update;
  } else {
    bad_statement(text, "unknown verb");
  }
  st.fields = json::parse(rest, nullptr, false);
  if (st.fields.is_discarded() || !st.fields.is_object()) bad_statement(text, "fields must be a JSON object");
  return st;
}

void apply_db_op_in_place(DBState& state, const DBOperation& op, Diagnostics* diags) {
  Statement st = parse_statement(op.statement);
  auto note = [&](const char* what) {
    if (diags) diags->push_back({"NoOpReplay", std::string(what) + " " + st.table + "/" + st.key + " at " + op.id()});
  };
  switch (st.verb) {
    case Verb::insert: state.tables[st.table][st.key] = std::move(st.fields); break;
    case Verb::update: {
      auto t = state.tables.find(st.table);
      if (t == state.tables.end() || !t->second.contains(st.key)) {
        note("UPD of missing row");
        return;
      }
      t->second[st.key].update(st.fields);
      break;
    }
    case Verb::remove: {
      auto t = state.tables.find(st.table);
      if (t == state.tables.end() || t->second.erase(st.key) == 0) {
        note("DEL of missing row");
        return;
      }
      if (t->second.empty()) state.tables.erase(t);
      break;
    }
  }
}

DBState apply_db_op(DBState state, const DBOperation& op, Diagnostics* diags) {
  apply_db_op_in_place(state, op, diags);
  return state;
}

json DBSnapshot::to_json() const { return {{"ts", ts}, {"id", id}, {"state", json::parse(bytes)}}; }

DBSnapshot DBSnapshot::from_json(const json& j) {
  DBSnapshot s;
  s.ts = j.at("ts").get<Nanos>();
  s.id = j.at("id").get<std::string>();
  s.bytes = canonical_dump(j.at("state"));
  return s;
}

DBSnapshot snapshot_db(const DBState& state, Nanos ts) {
  DBSnapshot s;
  s.ts = ts;
  s.bytes = state.serialize();
  s.id = sha256_hex(s.bytes);
  return s;
}

DBState restore_db(const DBSnapshot& snapshot) {
  if (sha256_hex(snapshot.bytes) != snapshot.id) {
    throw Error(ErrorCode::CorruptSnapshot, "snapshot at " + std::to_string(snapshot.ts) + " fails its hash");
  }
  json j = json::parse(snapshot.bytes, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::CorruptSnapshot, "snapshot is not JSON");
  return DBState::from_json(j);
}

}  // namespace rwd
