#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rewind/codec.hpp"
#include "rewind/db_attribution.hpp"
#include "rewind/operations.hpp"
#include "rewind/partition.hpp"
#include "rewind/provenance.hpp"
#include "rewind/recovery.hpp"
#include "rewind/trace.hpp"

namespace rwd {

enum class DbSource { syscall, applog };

std::string_view to_string(DbSource source);
DbSource db_source_from_string(std::string_view text);

struct AnalysisOptions {
  ServerModel model = ServerModel::thread_per_request;
  DbSource db_source = DbSource::syscall;
  EndpointSet db_endpoints;
  Nanos max_clock_skew = 0;
  std::string statement_log_path = std::string(kDefaultStatementLog);
  std::set<std::string> malicious;
};

struct AnalysisInputs {
  EventLog web;
  EventLog db;
  std::optional<AppLog> app_log;
};

struct RequestAttribution {
  std::vector<Anchor> anchors;
  std::vector<DBOperation> db_ops;
  std::vector<FileOperation> file_ops;
  std::vector<ExternalInteraction> external;
  bool unclosed = false;
};

struct Notification {
  std::string request_id;
  std::vector<ExternalInteraction> interactions;
  std::string advisory;
};

struct AnalysisBundle {
  AnalysisOptions options;
  std::map<std::string, RequestAttribution> requests;
  std::vector<DBOperation> malicious_db_ops;
  std::vector<FileOperation> malicious_file_ops;
  std::map<std::string, json> graphs;  // malicious requests only
  std::vector<Notification> notifications;
  std::vector<DBOperation> full_db_log;
  Diagnostics diagnostics;

  std::map<std::string, RequestOps> attributed() const;
  OperationSets db_op_sets() const;
  OperationSets file_op_sets() const;

  json to_json() const;
  static AnalysisBundle from_json(const json& j);
};

// Throws UnknownRequest when a malicious id names no request unit.
AnalysisBundle analyze(const AnalysisInputs& inputs, const AnalysisOptions& options);

json graph_to_json(const ProvenanceGraph& graph);

}  // namespace rwd
