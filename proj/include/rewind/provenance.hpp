#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rewind/codec.hpp"
#include "rewind/operations.hpp"
#include "rewind/partition.hpp"
#include "rewind/trace.hpp"

namespace rwd {

enum class NodeKind { request, process, file, socket };

enum class EdgeKind { SERVE, CREATE_PROCESS, EXEC, OPEN, WRITE, READ, DELETE, RENAME, SEND };

std::string_view to_string(NodeKind kind);
std::string_view to_string(EdgeKind kind);

struct GraphNode {
  NodeKind kind = NodeKind::process;
  std::string request_id;    // request
  ThreadKey thread;          // process
  Nanos created_ts = -1;     // process; -1 when it predates the request
  std::string exe;           // process, latest image
  std::string path;          // file
  NetworkTuple tuple;        // socket
};

struct GraphEdge {
  EdgeKind kind = EdgeKind::SERVE;
  std::size_t from = 0;
  std::size_t to = 0;
  Nanos ts = 0;
  EventRef source;
  ThreadKey actor;
  std::optional<int> fd;
  int flags = 0;
  std::optional<std::int64_t> offset;
  std::optional<std::string> data;
  std::optional<std::string> new_path;
  bool outbound = false;
};

struct ProvenanceGraph {
  std::string request_id;
  std::size_t root = 0;
  Nanos begin_ts = 0;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;  // ordered by (ts, seq, host)

  // Line-delimited JSON, nodes first, then edges; stable field order.
  std::string to_jsonl() const;
};

struct ExternalInteraction {
  NetworkTuple tuple;
  Nanos first_ts = 0;
  Nanos last_ts = 0;
  std::size_t byte_count = 0;
  std::string direction = "outbound";

  bool operator==(const ExternalInteraction&) const = default;
};

// Forward analysis over a shared global log. Construct once, build many.
class ProvenanceBuilder {
 public:
  explicit ProvenanceBuilder(const EventLog& global);

  ProvenanceGraph build(const RequestUnit& unit) const;

 private:
  std::string exe_at(const std::string& host, int pid, std::size_t pos) const;

  const EventLog& global_;
  EventIndex index_;
  std::map<std::pair<std::string, int>, std::vector<std::pair<std::size_t, std::string>>> exe_history_;
};

ProvenanceGraph build_graph(const RequestUnit& unit, const EventLog& global);

std::vector<FileOperation> collect_file_ops(const ProvenanceGraph& graph);

std::vector<ExternalInteraction> detect_external(const ProvenanceGraph& graph, const EndpointSet& db_endpoints);

// Checks the structural invariants (process forest, reachability, edge ts
// bounds); returns a description of the first violation.
std::optional<std::string> check_graph(const ProvenanceGraph& graph, Nanos log_end);

}  // namespace rwd
