#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rewind/backup.hpp"
#include "rewind/db_attribution.hpp"
#include "rewind/db_state.hpp"
#include "rewind/file_tree.hpp"
#include "rewind/partition.hpp"
#include "rewind/recovery.hpp"
#include "rewind/trace.hpp"
#include "rewind/write_log.hpp"

namespace rwd {

inline constexpr std::string_view kWebHost = "web";
inline constexpr std::string_view kDbHost = "db";
inline constexpr std::string_view kWebIp = "172.18.0.3";
inline constexpr std::string_view kDbIp = "172.18.0.2";
inline constexpr int kDbPort = 3306;
inline constexpr std::string_view kExternalIp = "203.0.113.5";

enum class DbLogMode { syscall_statement_log, applog_with_client, both };

std::string_view to_string(DbLogMode mode);
DbLogMode db_log_mode_from_string(std::string_view text);

enum class AttackKind { rce_webshell, sqli_write, multi_stage };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view text);

struct AttackSpec {
  AttackKind kind = AttackKind::rce_webshell;
  int at_request_index = 0;
};

struct TemplateMix {
  double page_view = 0.30;
  double upload = 0.20;
  double db_crud = 0.25;
  double mixed = 0.25;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int concurrency = 1;
  int request_count = 10;
  ServerModel server_model = ServerModel::thread_per_request;
  int pool_size = 8;
  DbLogMode db_log_mode = DbLogMode::syscall_statement_log;
  std::vector<AttackSpec> attacks;
  double event_loss_prob = 0.0;
  Nanos clock_skew_ns = 0;
  double split_write_prob = 0.1;
  double multi_conn_prob = 0.0;
  Nanos db_snapshot_interval_ns = 2'000'000;
  Nanos backup_interval_ns = 2'000'000;
  Nanos think_time_ns = 200'000;
  TemplateMix mix;

  // Throws InvalidConfig.
  void validate() const;
  json to_json() const;
  // Rejects unknown keys and wrongly typed values with InvalidConfig.
  static ScenarioConfig from_json(const json& j);
};

struct EventLabel {
  std::string request;  // empty: unattributed
  bool descendant = false;

  bool operator==(const EventLabel&) const = default;
};

struct LabeledDbOp {
  DBOperation op;
  std::string request;
};

struct LabeledFileOp {
  FileOperation op;
  std::string request;
};

struct GroundTruth {
  std::vector<std::string> request_ids;
  std::set<std::string> malicious;
  std::map<EventRef, EventLabel> events;
  std::vector<LabeledDbOp> db_log;      // completion order
  std::vector<LabeledFileOp> file_log;  // ts order
  DBState reference_db;
  DBState benign_db;
  FileTree reference_tree;
  FileTree benign_tree;

  // Per request: DB op ids and file op ids it caused.
  OperationSets db_ops() const;
  OperationSets file_ops() const;
  // Ops each request should keep after recovery: everything for benign
  // requests, nothing for malicious ones.
  OperationSets expected_restored() const;

  json to_json() const;
  static GroundTruth from_json(const json& j);
};

struct Scenario {
  ScenarioConfig config;
  EventLog web;
  EventLog db;
  AppLog app_log;
  WriteLog write_log;
  DBState initial_db;
  FileTree initial_tree;
  Baseline baseline;
  std::vector<DBSnapshot> snapshots;
  BackupChain backups;
  EndpointSet db_endpoints;
  GroundTruth truth;
};

// Deterministic in config.seed. Throws InvalidConfig.
Scenario simulate(const ScenarioConfig& config);

// Drops each syscall record independently with `prob`; delimiters are kept.
EventLog inject_event_loss(const EventLog& log, double prob, std::uint64_t seed);

}  // namespace rwd
