#pragma once

#include <map>
#include <string>
#include <string_view>

#include "rewind/codec.hpp"
#include "rewind/error.hpp"
#include "rewind/operations.hpp"

namespace rwd {

// Embedded deterministic stand-in for a relational/document store. Tables
// with no rows are dropped so structural equality is canonical.
struct DBState {
  std::map<std::string, std::map<std::string, json>> tables;

  bool operator==(const DBState&) const = default;

  json to_json() const;
  static DBState from_json(const json& j);
  std::string serialize() const { return canonical_dump(to_json()); }
  std::string hash() const { return sha256_hex(serialize()); }
  std::size_t row_count() const;
};

enum class Verb { insert, update, remove };

// INS <table> <key> <json-object> | UPD <table> <key> <json-object> | DEL <table> <key>
struct Statement {
  Verb verb = Verb::insert;
  std::string table;
  std::string key;
  json fields;
};

Statement parse_statement(std::string_view text);

// INS replaces the row; UPD merges fields; UPD/DEL of a missing key is a no-op
// reported through `diags`.
void apply_db_op_in_place(DBState& state, const DBOperation& op, Diagnostics* diags = nullptr);
DBState apply_db_op(DBState state, const DBOperation& op, Diagnostics* diags = nullptr);

struct DBSnapshot {
  Nanos ts = 0;
  std::string bytes;  // canonical JSON of the state
  std::string id;     // sha256 of bytes

  json to_json() const;
  static DBSnapshot from_json(const json& j);
  bool operator==(const DBSnapshot&) const = default;
};

DBSnapshot snapshot_db(const DBState& state, Nanos ts);
// Throws CorruptSnapshot when the content no longer matches its id.
DBState restore_db(const DBSnapshot& snapshot);

}  // namespace rwd
