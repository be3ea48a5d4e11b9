#include "rewind/provenance.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "rewind/json_io.hpp"

namespace rwd {

std::string_view to_string(FileOpKind kind) {
  switch (kind) {
    case FileOpKind::create: return "create";
    case FileOpKind::write: return "write";
    case FileOpKind::remove: return "delete";
    case FileOpKind::rename: return "rename";
  }
  return "write";
}

FileOpKind file_op_kind_from_string(std::string_view text) {
  if (text == "create") return FileOpKind::create;
  if (text == "write") return FileOpKind::write;
  if (text == "delete") return FileOpKind::remove;
  if (text == "rename") return FileOpKind::rename;
  throw Error(ErrorCode::InvalidArgument, "unknown file op kind '" + std::string(text) + "'");
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::request: return "request";
    case NodeKind::process: return "process";
    case NodeKind::file: return "file";
    case NodeKind::socket: return "socket";
  }
  return "process";
}

std::string_view to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::SERVE: return "SERVE";
    case EdgeKind::CREATE_PROCESS: return "CREATE_PROCESS";
    case EdgeKind::EXEC: return "EXEC";
    case EdgeKind::OPEN: return "OPEN";
    case EdgeKind::WRITE: return "WRITE";
    case EdgeKind::READ: return "READ";
    case EdgeKind::DELETE: return "DELETE";
    case EdgeKind::RENAME: return "RENAME";
    case EdgeKind::SEND: return "SEND";
  }
  return "SERVE";
}

ProvenanceBuilder::ProvenanceBuilder(const EventLog& global) : global_(global), index_(build_index(global)) {
  for (std::size_t pos = 0; pos < global_.events.size(); ++pos) {
    const Event& ev = global_.events[pos];
    if (!ev.is_syscall()) continue;
    const auto& s = ev.syscall();
    if (s.name == Syscall::execve) {
      exe_history_[{ev.host, ev.pid}].emplace_back(pos, *s.args.path);
    } else if ((s.name == Syscall::fork || s.name == Syscall::clone) && *s.args.child_pid != ev.pid) {
      exe_history_[{ev.host, *s.args.child_pid}].emplace_back(pos, exe_at(ev.host, ev.pid, pos));
    }
  }
}

std::string ProvenanceBuilder::exe_at(const std::string& host, int pid, std::size_t pos) const {
  auto it = exe_history_.find({host, pid});
  if (it == exe_history_.end()) return {};
  std::string exe;
  for (const auto& [p, path] : it->second) {
    if (p > pos) break;
    exe = path;
  }
  return exe;
}

namespace {

class GraphAssembler {
 public:
  explicit GraphAssembler(ProvenanceGraph& g) : g_(g) {}

  std::size_t add_node(GraphNode node) {
    g_.nodes.push_back(std::move(node));
    return g_.nodes.size() - 1;
  }

  std::size_t file_node(const std::string& path) {
    auto [it, inserted] = files_.try_emplace(path, 0);
    if (inserted) {
      GraphNode n;
      n.kind = NodeKind::file;
      n.path = path;
      it->second = add_node(std::move(n));
    }
    return it->second;
  }

  std::size_t socket_node(const NetworkTuple& t) {
    auto [it, inserted] = sockets_.try_emplace(t, 0);
    if (inserted) {
      GraphNode n;
      n.kind = NodeKind::socket;
      n.tuple = t;
      it->second = add_node(std::move(n));
    }
    return it->second;
  }

  GraphEdge& add_edge(EdgeKind kind, std::size_t from, std::size_t to, const Event& ev) {
    GraphEdge e;
    e.kind = kind;
    e.from = from;
    e.to = to;
    e.ts = ev.ts;
    e.source = ev.ref();
    e.actor = g_.nodes[from].thread;
    g_.edges.push_back(std::move(e));
    return g_.edges.back();
  }

 private:
  ProvenanceGraph& g_;
  std::map<std::string, std::size_t> files_;
  std::map<NetworkTuple, std::size_t> sockets_;
};

struct Work {
  ThreadKey thread;
  std::size_t after_pos;
  std::size_t node;
};

}  // namespace

ProvenanceGraph ProvenanceBuilder::build(const RequestUnit& unit) const {
  ProvenanceGraph g;
  g.request_id = unit.request_id;
  g.begin_ts = unit.begin_ts;
  GraphAssembler as(g);

  GraphNode root;
  root.kind = NodeKind::request;
  root.request_id = unit.request_id;
  g.root = as.add_node(std::move(root));

  std::map<ThreadKey, std::size_t> owner_nodes;
  for (const auto& seg : unit.segments) {
    if (owner_nodes.contains(seg.thread)) continue;
    GraphNode n;
    n.kind = NodeKind::process;
    n.thread = seg.thread;
    std::size_t pos = 0;
    auto first = index_.by_thread.find(seg.thread);
    if (first != index_.by_thread.end()) {
      // Position of the first event at or after the segment start.
      auto it = std::lower_bound(first->second.begin(), first->second.end(), seg.start_ts,
                                 [&](std::size_t p, Nanos ts) { return global_.events[p].ts < ts; });
      if (it != first->second.end()) pos = *it;
    }
    n.exe = exe_at(seg.thread.host, seg.thread.pid, pos);
    std::size_t id = as.add_node(std::move(n));
    owner_nodes[seg.thread] = id;
    GraphEdge e;
    e.kind = EdgeKind::SERVE;
    e.from = g.root;
    e.to = id;
    e.ts = seg.start_ts;
    e.actor = seg.thread;
    g.edges.push_back(std::move(e));
  }

  std::deque<Work> work;

  auto handle = [&](const Event& ev, std::size_t pos, std::size_t actor) {
    if (!ev.is_syscall()) return;
    const auto& s = ev.syscall();
    const auto& a = s.args;
    switch (s.name) {
      case Syscall::fork:
      case Syscall::clone: {
        GraphNode child;
        child.kind = NodeKind::process;
        child.thread = ThreadKey{ev.host, *a.child_pid, *a.child_tid};
        child.created_ts = ev.ts;
        child.exe = g.nodes[actor].exe;
        std::size_t id = as.add_node(std::move(child));
        as.add_edge(EdgeKind::CREATE_PROCESS, actor, id, ev);
        work.push_back({g.nodes[id].thread, pos, id});
        break;
      }
      case Syscall::execve: {
        g.nodes[actor].exe = *a.path;
        as.add_edge(EdgeKind::EXEC, actor, as.file_node(*a.path), ev);
        break;
      }
      case Syscall::openat: {
        auto& e = as.add_edge(EdgeKind::OPEN, actor, as.file_node(*a.path), ev);
        e.fd = a.fd;
        e.flags = a.flags.value_or(0);
        break;
      }
      case Syscall::write:
      case Syscall::sendto: {
        if (ev.resolved.tuple) {
          auto& e = as.add_edge(EdgeKind::SEND, actor, as.socket_node(*ev.resolved.tuple), ev);
          e.fd = a.fd;
          e.outbound = ev.resolved.outbound;
          e.data = a.data;
        } else if (auto path = ev.file_path(); path && s.name == Syscall::write) {
          auto& e = as.add_edge(EdgeKind::WRITE, actor, as.file_node(*path), ev);
          e.fd = a.fd;
          e.offset = a.offset;
          e.data = a.data;
        }
        break;
      }
      case Syscall::read:
      case Syscall::recvfrom: {
        if (ev.resolved.tuple) {
          as.add_edge(EdgeKind::READ, actor, as.socket_node(*ev.resolved.tuple), ev).fd = a.fd;
        } else if (auto path = ev.file_path()) {
          as.add_edge(EdgeKind::READ, actor, as.file_node(*path), ev).fd = a.fd;
        }
        break;
      }
      case Syscall::unlink: as.add_edge(EdgeKind::DELETE, actor, as.file_node(*a.path), ev); break;
      case Syscall::rename: {
        as.add_edge(EdgeKind::RENAME, actor, as.file_node(*a.old_path), ev).new_path = a.new_path;
        break;
      }
      case Syscall::exit:
      case Syscall::socket:
      case Syscall::connect:
      case Syscall::accept:
      case Syscall::dup:
      case Syscall::close: break;
    }
  };

  for (const Event& ev : unit.events) {
    auto owner = owner_nodes.find(ev.thread());
    if (owner == owner_nodes.end()) continue;
    auto pos = index_.by_ref.find(ev.ref());
    handle(ev, pos == index_.by_ref.end() ? 0 : pos->second, owner->second);
  }

  // Descendants: each tracked (pid, tid) from its creation until it exits.
  while (!work.empty()) {
    Work w = work.front();
    work.pop_front();
    auto stream = index_.by_thread.find(w.thread);
    if (stream == index_.by_thread.end()) continue;
    auto it = std::upper_bound(stream->second.begin(), stream->second.end(), w.after_pos);
    for (; it != stream->second.end(); ++it) {
      const Event& ev = global_.events[*it];
      handle(ev, *it, w.node);
      if (ev.is_syscall() && ev.syscall().name == Syscall::exit) break;
    }
  }

  std::stable_sort(g.edges.begin(), g.edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.source.seq != b.source.seq) return a.source.seq < b.source.seq;
    return a.source.host < b.source.host;
  });
  return g;
}

ProvenanceGraph build_graph(const RequestUnit& unit, const EventLog& global) {
  return ProvenanceBuilder(global).build(unit);
}

std::vector<FileOperation> collect_file_ops(const ProvenanceGraph& graph) {
  std::vector<FileOperation> ops;
  // (host, pid, fd) -> index of a create still waiting for its first write.
  std::map<std::tuple<std::string, int, int>, std::size_t> pending_create;
  for (const GraphEdge& e : graph.edges) {
    const std::string& path = graph.nodes[e.to].path;
    auto base = [&](FileOpKind kind) {
      FileOperation op;
      op.path = path;
      op.kind = kind;
      op.ts = e.ts;
      op.actor = e.actor;
      op.source = e.source;
      return op;
    };
    switch (e.kind) {
      case EdgeKind::OPEN: {
        if (!e.fd) break;
        auto key = std::make_tuple(e.actor.host, e.actor.pid, *e.fd);
        pending_create.erase(key);
        if (e.flags & kOpenCreate) {
          FileOperation op = base(FileOpKind::create);
          op.truncate = (e.flags & kOpenTruncate) != 0;
          ops.push_back(std::move(op));
          pending_create[key] = ops.size() - 1;
        }
        break;
      }
      case EdgeKind::WRITE: {
        PayloadRef payload{e.offset.value_or(0), e.data.value_or(""), e.ts, e.source};
        if (e.fd) {
          auto key = std::make_tuple(e.actor.host, e.actor.pid, *e.fd);
          auto it = pending_create.find(key);
          if (it != pending_create.end()) {
            FileOperation& created = ops[it->second];
            pending_create.erase(it);
            if (created.path == path && !created.payload) {
              created.payload = std::move(payload);
              break;
            }
          }
        }
        FileOperation op = base(FileOpKind::write);
        op.payload = std::move(payload);
        ops.push_back(std::move(op));
        break;
      }
      case EdgeKind::DELETE: ops.push_back(base(FileOpKind::remove)); break;
      case EdgeKind::RENAME: {
        FileOperation op = base(FileOpKind::rename);
        op.rename_to = e.new_path;
        ops.push_back(std::move(op));
        break;
      }
      default: break;
    }
  }
  return ops;
}

std::vector<ExternalInteraction> detect_external(const ProvenanceGraph& graph, const EndpointSet& db_endpoints) {
  std::map<NetworkTuple, ExternalInteraction> by_tuple;
  for (const GraphEdge& e : graph.edges) {
    if (e.kind != EdgeKind::SEND || !e.outbound) continue;
    const NetworkTuple& t = graph.nodes[e.to].tuple;
    if (db_endpoints.contains(t.destination())) continue;
    auto [it, inserted] = by_tuple.try_emplace(t);
    ExternalInteraction& x = it->second;
    if (inserted) {
      x.tuple = t;
      x.first_ts = e.ts;
    }
    x.last_ts = e.ts;
    x.byte_count += e.data ? e.data->size() : 0;
  }
  std::vector<ExternalInteraction> out;
  for (auto& [_, x] : by_tuple) out.push_back(std::move(x));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first_ts, a.tuple) < std::tie(b.first_ts, b.tuple);
  });
  return out;
}

std::optional<std::string> check_graph(const ProvenanceGraph& g, Nanos log_end) {
  std::vector<std::vector<std::size_t>> adj(g.nodes.size());
  std::vector<int> process_parents(g.nodes.size(), 0);
  for (const GraphEdge& e : g.edges) {
    if (e.from >= g.nodes.size() || e.to >= g.nodes.size()) return "edge endpoint out of range";
    adj[e.from].push_back(e.to);
    if (e.kind == EdgeKind::CREATE_PROCESS && ++process_parents[e.to] > 1) {
      return "process node " + std::to_string(e.to) + " created twice";
    }
    if (e.kind != EdgeKind::SERVE && (e.ts < g.begin_ts || e.ts > log_end)) {
      return "edge at " + std::to_string(e.ts) + " outside [begin, log end]";
    }
  }
  // CREATE_PROCESS acyclicity via DFS colouring on that edge subset.
  std::vector<int> colour(g.nodes.size(), 0);
  std::vector<std::vector<std::size_t>> spawn(g.nodes.size());
  for (const GraphEdge& e : g.edges) {
    if (e.kind == EdgeKind::CREATE_PROCESS) spawn[e.from].push_back(e.to);
  }
  for (std::size_t start = 0; start < g.nodes.size(); ++start) {
    if (colour[start] != 0) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{start, 0}};
    colour[start] = 1;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < spawn[node].size()) {
        std::size_t child = spawn[node][next++];
        if (colour[child] == 1) return "CREATE_PROCESS cycle through node " + std::to_string(child);
        if (colour[child] == 0) {
          colour[child] = 1;
          stack.emplace_back(child, 0);
        }
      } else {
        colour[node] = 2;
        stack.pop_back();
      }
    }
  }
  std::vector<bool> seen(g.nodes.size(), false);
  std::vector<std::size_t> frontier{g.root};
  if (g.root < g.nodes.size()) seen[g.root] = true;
  while (!frontier.empty()) {
    std::size_t n = frontier.back();
    frontier.pop_back();
    for (std::size_t m : adj[n]) {
      if (!seen[m]) {
        seen[m] = true;
        frontier.push_back(m);
      }
    }
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (!seen[i]) return "node " + std::to_string(i) + " unreachable from root";
  }
  return std::nullopt;
}

std::string ProvenanceGraph::to_jsonl() const {
  std::string out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const GraphNode& n = nodes[i];
    nlohmann::ordered_json j;
    j["type"] = "node";
    j["id"] = i;
    j["kind"] = std::string(to_string(n.kind));
    switch (n.kind) {
      case NodeKind::request: j["request_id"] = n.request_id; break;
      case NodeKind::process:
        j["host"] = n.thread.host;
        j["pid"] = n.thread.pid;
        j["tid"] = n.thread.tid;
        j["exe"] = n.exe;
        j["created_ts"] = n.created_ts;
        break;
      case NodeKind::file: j["path"] = n.path; break;
      case NodeKind::socket: j["tuple"] = n.tuple.label(); break;
    }
    out += j.dump();
    out += '\n';
  }
  for (const GraphEdge& e : edges) {
    nlohmann::ordered_json j;
    j["type"] = "edge";
    j["kind"] = std::string(to_string(e.kind));
    j["from"] = e.from;
    j["to"] = e.to;
    j["ts"] = e.ts;
    j["source"] = e.source.host.empty() ? std::string() : e.source.label();
    if (e.fd) j["fd"] = *e.fd;
    if (e.kind == EdgeKind::OPEN) j["flags"] = e.flags;
    if (e.offset) j["offset"] = *e.offset;
    if (e.data) j["bytes"] = e.data->size();
    if (e.new_path) j["new_path"] = *e.new_path;
    if (e.kind == EdgeKind::SEND) j["outbound"] = e.outbound;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace rwd
