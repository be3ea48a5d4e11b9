#include "support.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <tuple>

#include "rewind/json_io.hpp"
#include "rewind/write_log.hpp"

namespace rwd::testkit {

namespace fs = std::filesystem;

std::string Gen::bytes(std::size_t max_len) {
  std::size_t n = static_cast<std::size_t>(between(0, static_cast<int>(max_len)));
  std::string out(n, '\0');
  for (auto& c : out) c = static_cast<char>(between(0, 255));
  return out;
}

std::string Gen::word(std::size_t len) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string out(len, 'a');
  for (auto& c : out) c = alphabet[static_cast<std::size_t>(between(0, static_cast<int>(alphabet.size()) - 1))];
  return out;
}

TempDir::TempDir() {
  std::string pattern = (fs::temp_directory_path() / "rwd-test-XXXXXX").string();
  if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

const Event& TraceBuilder::sys(int pid, int tid, Syscall name, SyscallArgs args) {
  Event ev;
  ev.seq = ++seq_;
  ev.ts = ++clock_;
  ev.host = host_;
  ev.pid = pid;
  ev.tid = tid;
  ev.payload = SyscallPayload{name, std::move(args)};
  log_.events.push_back(std::move(ev));
  return log_.events.back();
}

const Event& TraceBuilder::mark(int pid, int tid, const std::string& request, Marker marker) {
  Event ev;
  ev.seq = ++seq_;
  ev.ts = ++clock_;
  ev.host = host_;
  ev.pid = pid;
  ev.tid = tid;
  ev.payload = DelimiterPayload{request, marker};
  log_.events.push_back(std::move(ev));
  return log_.events.back();
}

bool has_chain(const json& graph_lines, const std::vector<std::string>& exes, const std::string& path) {
  std::map<std::size_t, json> nodes;
  std::vector<json> edges;
  for (const auto& line : graph_lines) {
    if (line.at("type") == "node") {
      nodes[line.at("id").get<std::size_t>()] = line;
    } else {
      edges.push_back(line);
    }
  }
  auto exe_of = [&](std::size_t id) {
    const json& n = nodes.at(id);
    return n.at("kind") == "process" ? n.at("exe").get<std::string>() : std::string();
  };
  // Frontier of process nodes matching exes[0..depth].
  std::set<std::size_t> frontier;
  for (const auto& e : edges) {
    if (e.at("kind") == "SERVE" && exe_of(e.at("to").get<std::size_t>()) == exes.front()) {
      frontier.insert(e.at("to").get<std::size_t>());
    }
  }
  for (std::size_t depth = 1; depth < exes.size(); ++depth) {
    std::set<std::size_t> next;
    for (const auto& e : edges) {
      if (e.at("kind") != "CREATE_PROCESS" || !frontier.contains(e.at("from").get<std::size_t>())) continue;
      if (exe_of(e.at("to").get<std::size_t>()) == exes[depth]) next.insert(e.at("to").get<std::size_t>());
    }
    frontier = std::move(next);
  }
  for (const auto& e : edges) {
    if (e.at("kind") != "WRITE" || !frontier.contains(e.at("from").get<std::size_t>())) continue;
    if (nodes.at(e.at("to").get<std::size_t>()).at("path") == path) return true;
  }
  return false;
}

ScenarioConfig make_config(std::uint64_t seed, int concurrency, int requests, ServerModel model, int pool) {
  ScenarioConfig c;
  c.seed = seed;
  c.concurrency = concurrency;
  c.request_count = requests;
  c.server_model = model;
  c.pool_size = pool;
  return c;
}

AnalysisInputs inputs_for(const Scenario& s) {
  AnalysisInputs in{s.web, s.db, std::nullopt};
  if (s.config.db_log_mode != DbLogMode::syscall_statement_log) in.app_log = s.app_log;
  return in;
}

AnalysisOptions options_for(const Scenario& s, const std::set<std::string>& malicious) {
  AnalysisOptions o;
  o.model = s.config.server_model;
  o.db_source = s.config.db_log_mode == DbLogMode::applog_with_client ? DbSource::applog : DbSource::syscall;
  o.db_endpoints = s.db_endpoints;
  o.max_clock_skew = s.config.clock_skew_ns;
  o.malicious = malicious;
  return o;
}

AnalysisBundle run_analysis(const Scenario& s, const std::set<std::string>& malicious) {
  return analyze(inputs_for(s), options_for(s, malicious));
}

Scores score(const AnalysisBundle& b, const GroundTruth& truth) {
  return {score_attribution(b.db_op_sets(), truth.db_ops()), score_attribution(b.file_op_sets(), truth.file_ops())};
}

RecoveryRun run_recovery(const Scenario& s, const AnalysisBundle& b, const DecisionProvider& provider,
                         const DBState* live_db, const FileTree* live_tree) {
  RecoveryRun r;
  const FileTree& tree_in = live_tree ? *live_tree : s.truth.reference_tree;
  r.plan.db = plan_db_recovery(b.malicious_db_ops, s.snapshots, b.full_db_log);
  r.plan.fs = plan_fs_recovery(b.malicious_file_ops, tree_in, s.backups, s.write_log, s.baseline,
                               Classification::defaults());
  DbStore store{live_db ? *live_db : s.truth.reference_db, s.snapshots};
  if (!r.plan.db.filtered.empty()) execute_db_recovery(r.plan.db, store, &r.warnings);
  r.db = store.live;
  FileTree tree = tree_in;
  FsExecution fx = execute_fs_recovery(r.plan.fs, tree, provider);
  r.tree = std::move(tree);
  r.choices = std::move(fx.choices);
  r.accuracy = compute_recovery_accuracy(restored_operations(b.attributed(), r.plan.db, r.plan.fs, r.choices),
                                         s.truth.expected_restored());
  return r;
}

RecoveryRun run_recovery(const Scenario& s, const AnalysisBundle& b, const DecisionProvider& provider) {
  return run_recovery(s, b, provider, nullptr, nullptr);
}

DecisionProvider always(Choice choice) {
  return [choice](const FsAction&) { return choice; };
}

// ---- oracles ---------------------------------------------------------------

std::map<EventRef, FdResolution> fd_oracle(const EventLog& log) {
  struct Binding {
    bool socket = false;
    std::optional<NetworkTuple> tuple;
    bool outbound = false;
    std::optional<std::string> path;
  };
  using Key = std::tuple<std::string, int, int>;
  std::map<Key, Binding> fds;
  auto view = [](const Binding& b) {
    FdResolution r;
    if (b.socket) {
      r.tuple = b.tuple;
      r.outbound = b.outbound;
    } else {
      r.path = b.path;
    }
    return r;
  };
  std::map<EventRef, FdResolution> out;
  for (const Event& ev : log.events) {
    if (!ev.is_syscall()) continue;
    const auto& s = ev.syscall();
    const auto& a = s.args;
    FdResolution res;
    auto bound = [&](int fd) -> Binding* {
      auto it = fds.find({ev.host, ev.pid, fd});
      return it == fds.end() ? nullptr : &it->second;
    };
    switch (s.name) {
      case Syscall::fork:
      case Syscall::clone:
        if (*a.child_pid != ev.pid) {
          std::vector<std::pair<Key, Binding>> copies;
          for (const auto& [key, b] : fds) {
            if (std::get<0>(key) == ev.host && std::get<1>(key) == ev.pid) {
              copies.push_back({{ev.host, *a.child_pid, std::get<2>(key)}, b});
            }
          }
          std::erase_if(fds, [&](const auto& kv) {
            return std::get<0>(kv.first) == ev.host && std::get<1>(kv.first) == *a.child_pid;
          });
          for (auto& [key, b] : copies) fds[key] = b;
        }
        break;
      case Syscall::exit:
        if (ev.pid == ev.tid) {
          std::erase_if(fds, [&](const auto& kv) {
            return std::get<0>(kv.first) == ev.host && std::get<1>(kv.first) == ev.pid;
          });
        }
        break;
      case Syscall::socket: fds[{ev.host, ev.pid, *a.fd}] = Binding{true, std::nullopt, false, std::nullopt}; break;
      case Syscall::connect:
      case Syscall::accept: {
        Binding b{true, a.endpoint, s.name == Syscall::connect, std::nullopt};
        fds[{ev.host, ev.pid, *a.fd}] = b;
        res = view(b);
        break;
      }
      case Syscall::dup:
        if (Binding* b = bound(*a.fd)) {
          Binding copy = *b;
          fds[{ev.host, ev.pid, *a.new_fd}] = copy;
          res = view(copy);
        }
        break;
      case Syscall::close:
        if (Binding* b = bound(*a.fd)) {
          res = view(*b);
          fds.erase({ev.host, ev.pid, *a.fd});
        }
        break;
      case Syscall::openat: {
        Binding b{false, std::nullopt, false, a.path};
        fds[{ev.host, ev.pid, *a.fd}] = b;
        res = view(b);
        break;
      }
      case Syscall::read:
      case Syscall::write:
      case Syscall::sendto:
      case Syscall::recvfrom:
        if (s.name == Syscall::sendto && a.endpoint) {
          res.tuple = a.endpoint;
          res.outbound = true;
        } else if (Binding* b = bound(*a.fd)) {
          res = view(*b);
        }
        break;
      case Syscall::rename:
        for (auto& [key, b] : fds) {
          if (std::get<0>(key) == ev.host && !b.socket && b.path == a.old_path) b.path = a.new_path;
        }
        break;
      default: break;
    }
    out[ev.ref()] = res;
  }
  return out;
}

void naive_apply(NaiveDb& db, const std::string& statement) {
  // Grammar: VERB table key [json]
  auto sp1 = statement.find(' ');
  auto sp2 = statement.find(' ', sp1 + 1);
  auto sp3 = statement.find(' ', sp2 + 1);
  std::string verb = statement.substr(0, sp1);
  std::string table = statement.substr(sp1 + 1, sp2 - sp1 - 1);
  std::string key = sp3 == std::string::npos ? statement.substr(sp2 + 1) : statement.substr(sp2 + 1, sp3 - sp2 - 1);
  if (verb == "INS") {
    db[table][key] = json::parse(statement.substr(sp3 + 1));
  } else if (verb == "UPD") {
    if (db.contains(table) && db[table].contains(key)) {
      json fields = json::parse(statement.substr(sp3 + 1));
      for (const auto& [k, v] : fields.items()) db[table][key][k] = v;
    }
  } else if (verb == "DEL") {
    if (db.contains(table)) {
      db[table].erase(key);
      if (db[table].empty()) db.erase(table);
    }
  }
}

DBState to_state(const NaiveDb& db) {
  DBState s;
  for (const auto& [t, rows] : db) {
    if (!rows.empty()) s.tables[t] = rows;
  }
  return s;
}

namespace {

std::string random_statement(Gen& g) {
  std::string table = "t" + std::to_string(g.between(0, 2));
  std::string key = "k" + std::to_string(g.between(0, 9));
  int roll = g.between(0, 9);
  json fields = json::object();
  int n = g.between(1, 3);
  for (int i = 0; i < n; ++i) {
    std::string f = "f" + std::to_string(g.between(0, 4));
    if (g.coin()) {
      fields[f] = g.between(-1000, 1000);
    } else {
      fields[f] = g.word(static_cast<std::size_t>(g.between(0, 6)));
    }
  }
  if (roll < 4) return "INS " + table + " " + key + " " + fields.dump();
  if (roll < 8) return "UPD " + table + " " + key + " " + fields.dump();
  return "DEL " + table + " " + key;
}

template <typename F>
bool throws_code(F&& fn, ErrorCode code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

}  // namespace

// ---- property checks -------------------------------------------------------

Check check_roundtrip(const Scenario& s) {
  Check c;
  for (const EventLog* log : {&s.web, &s.db}) {
    std::string text = serialize_trace(*log);
    EventLog back = parse_trace(std::string_view(text), log->events.empty() ? "" : log->events.front().host);
    c.expect(back.events == log->events, "parsed events differ from the source log");
    c.expect(serialize_trace(back) == text, "re-serialized trace is not byte-identical");
  }
  std::string app = serialize_app_log(s.app_log);
  c.expect(serialize_app_log(parse_app_log(app)) == app, "app log round-trip differs");
  std::string wl = serialize_write_log(s.write_log);
  c.expect(serialize_write_log(parse_write_log(wl)) == wl, "write log round-trip differs");
  return c;
}

Check check_fd_resolution(const EventLog& log) {
  Check c;
  EventLog resolved = resolve_fd_tuples(log);
  auto oracle = fd_oracle(log);
  for (const Event& ev : resolved.events) {
    if (!ev.is_syscall()) continue;
    if (!(ev.resolved == oracle.at(ev.ref()))) c.fail("resolution differs at " + ev.ref().label());
  }
  return c;
}

Check check_partition(const Scenario& s) {
  Check c;
  PartitionResult parts = partition(s.web, s.config.server_model);
  std::map<EventRef, std::string> placed;
  for (const auto& [id, unit] : parts.units) {
    const Event* prev = nullptr;
    for (const Event& ev : unit.events) {
      c.expect(ev.is_syscall(), "delimiter inside unit " + id);
      if (!placed.emplace(ev.ref(), id).second) c.fail(ev.ref().label() + " in two units");
      if (prev && !event_before(*prev, ev)) c.fail("order not preserved in " + id);
      prev = &ev;
      if (id == kBackgroundUnit) continue;
      c.expect(unit.begin_ts <= ev.ts && ev.ts <= unit.end_ts, ev.ref().label() + " outside unit bounds");
      bool covered = std::any_of(unit.segments.begin(), unit.segments.end(), [&](const OwnerSegment& seg) {
        return seg.thread == ev.thread() && seg.start_ts <= ev.ts && ev.ts <= seg.end_ts;
      });
      c.expect(covered, ev.ref().label() + " outside every segment of " + id);
    }
  }
  for (const Event& ev : s.web.events) {
    if (!ev.is_syscall()) continue;
    auto where = placed.find(ev.ref());
    if (where == placed.end()) {
      c.fail(ev.ref().label() + " dropped by partition");
      continue;
    }
    auto label = s.truth.events.find(ev.ref());
    std::string expected = std::string(kBackgroundUnit);
    if (label != s.truth.events.end() && !label->second.descendant) expected = label->second.request;
    if (where->second != expected) {
      c.fail(ev.ref().label() + " placed in " + where->second + ", labelled " + expected);
    }
  }
  return c;
}

namespace {

// Processes with fresh pids that touch the same paths as real requests but
// descend from nothing in the graph.
EventLog decoys(const Scenario& s, Gen& g) {
  EventLog out;
  std::uint64_t seq = 0;
  for (const Event& ev : s.web.events) seq = std::max(seq, ev.seq);
  std::vector<std::string> paths = {"/data/decoy.bin"};
  for (const auto& l : s.truth.file_log) paths.push_back(l.op.path);
  Nanos lo = s.web.events.front().ts;
  Nanos hi = s.web.events.back().ts;
  auto add = [&](Nanos ts, int pid, int tid, Syscall name, SyscallArgs args) {
    Event ev;
    ev.seq = ++seq;
    ev.ts = ts;
    ev.host = std::string(kWebHost);
    ev.pid = pid;
    ev.tid = tid;
    ev.payload = SyscallPayload{name, std::move(args)};
    out.events.push_back(std::move(ev));
  };
  for (int k = 0; k < 12; ++k) {
    int pid = 900000 + k * 10;
    Nanos t = g.between64(lo, hi);
    add(t, pid, pid, Syscall::execve, {.path = "/bin/decoy"});
    add(t + 1, pid, pid, Syscall::openat, {.fd = 3, .path = g.pick(paths), .flags = kOpenWriteOnly | kOpenCreate});
    add(t + 2, pid, pid, Syscall::write, {.fd = 3, .offset = 0, .data = g.word(8)});
    add(t + 3, pid, pid, Syscall::clone, {.child_pid = pid + 1, .child_tid = pid + 1});
    add(t + 4, pid + 1, pid + 1, Syscall::openat, {.fd = 4, .path = g.pick(paths), .flags = kOpenWriteOnly});
    add(t + 5, pid + 1, pid + 1, Syscall::write, {.fd = 4, .offset = 3, .data = g.word(4)});
    add(t + 6, pid + 1, pid + 1, Syscall::sendto,
        {.fd = 5, .data = "x", .endpoint = NetworkTuple{std::string(kWebIp), 45000 + k, "198.51.100.7", 443}});
    add(t + 7, pid, pid, Syscall::unlink, {.path = "/data/decoy.bin"});
  }
  std::stable_sort(out.events.begin(), out.events.end(), event_before);
  return out;
}

}  // namespace

Check check_provenance(const Scenario& s, std::uint64_t seed) {
  Check c;
  EventLog web = resolve_fd_tuples(s.web);
  PartitionResult parts = partition(web, s.config.server_model);
  ProvenanceBuilder builder(web);
  OperationSets truth_files = s.truth.file_ops();
  bool lossless = s.config.event_loss_prob == 0.0;
  std::map<std::string, std::string> plain;
  for (const std::string& id : parts.request_ids()) {
    ProvenanceGraph g = builder.build(parts.units.at(id));
    if (auto why = check_graph(g, web.end_ts())) c.fail(id + ": " + *why);
    std::set<std::string> ids;
    for (const auto& op : collect_file_ops(g)) ids.insert(op.id());
    if (lossless && ids != truth_files[id]) c.fail(id + ": file ops differ from ground truth");
    plain[id] = g.to_jsonl();
  }

  Gen gen(seed);
  std::vector<EventLog> logs = {s.web, decoys(s, gen)};
  EventLog noisy = resolve_fd_tuples(merge_logs(logs));
  ProvenanceBuilder noisy_builder(noisy);
  PartitionResult noisy_parts = partition(noisy, s.config.server_model);
  for (const std::string& id : noisy_parts.request_ids()) {
    if (noisy_builder.build(noisy_parts.units.at(id)).to_jsonl() != plain[id]) {
      c.fail(id + ": graph changed by unrelated decoy processes");
    }
  }
  return c;
}

Check check_anchor_boundaries(std::uint64_t seed) {
  Check c;
  Gen g(seed);
  for (int round = 0; round < 20; ++round) {
    NetworkTuple tuple{std::string(kWebIp), g.between(40000, 60000), std::string(kDbIp), kDbPort};
    EndpointSet endpoints = {tuple.destination()};
    Nanos t0 = g.between64(1000, 100000);

    // Web side: the connection predates the request, as a pooled one would.
    EventLog web;
    std::uint64_t seq = 0;
    auto web_ev = [&](Nanos ts, std::variant<SyscallPayload, DelimiterPayload> p) {
      Event ev;
      ev.seq = ++seq;
      ev.ts = ts;
      ev.host = "web";
      ev.pid = 100;
      ev.tid = 101;
      ev.payload = std::move(p);
      web.events.push_back(std::move(ev));
    };
    web_ev(t0, SyscallPayload{Syscall::connect, {.fd = 9, .endpoint = tuple}});
    web_ev(t0 + 10, DelimiterPayload{"r1", Marker::begin});
    Nanos ts = t0 + 10 + g.between(1, 50);
    Nanos first = ts;
    Nanos last = ts;
    int uses = g.between(1, 6);
    for (int i = 0; i < uses; ++i) {
      web_ev(ts, SyscallPayload{i % 2 ? Syscall::read : Syscall::write, {.fd = 9, .data = g.word(5)}});
      last = ts;
      ts += g.between(1, 40);
    }
    web_ev(ts + 5, DelimiterPayload{"r1", Marker::end});
    PartitionResult parts = partition(resolve_fd_tuples(web), ServerModel::thread_per_request);
    auto anchors = extract_anchors(unit_for(parts, "r1"), endpoints);
    if (anchors.size() != 1) {
      c.fail("expected one anchor, got " + std::to_string(anchors.size()));
      continue;
    }
    const Anchor& anchor = anchors.front();
    c.expect(anchor.tuple == tuple, "anchor tuple mismatch");
    c.expect(anchor.window.start == first && anchor.window.end == last + 1, "window is not [first, last + 1)");

    // Sweep statement timestamps across both edges on each extraction path.
    std::vector<Nanos> probes;
    for (Nanos d = -3; d <= 3; ++d) {
      probes.push_back(anchor.window.start + d);
      probes.push_back(anchor.window.end + d);
    }
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());

    AppLog app;
    EventLog db;
    std::uint64_t dseq = 0;
    auto db_ev = [&](Nanos at, Syscall name, SyscallArgs args) {
      Event ev;
      ev.seq = ++dseq;
      ev.ts = at;
      ev.host = "db";
      ev.pid = 2000;
      ev.tid = 2001;
      ev.payload = SyscallPayload{name, std::move(args)};
      db.events.push_back(std::move(ev));
    };
    NetworkTuple peer = tuple;
    db_ev(0, Syscall::accept, {.fd = 30, .endpoint = peer});
    db_ev(1, Syscall::openat, {.fd = 31, .path = std::string(kDefaultStatementLog), .flags = kOpenAppend});
    std::set<std::string> expected;
    for (Nanos p : probes) {
      std::string stmt = "INS t k" + std::to_string(p) + " {}";
      app.records.push_back({p, tuple.source(), stmt});
      app.records.push_back({p, Endpoint{std::string(kWebIp), tuple.src_port + 1}, "INS other x" + std::to_string(p) + " {}"});
      db_ev(p, Syscall::write, {.fd = 31, .data = stmt + "\n"});
      if (p >= anchor.window.start && p < anchor.window.end) expected.insert(stmt);
    }
    std::stable_sort(db.events.begin(), db.events.end(), event_before);

    std::set<std::string> via_app;
    for (const auto& op : extract_ops_applog(app, anchor)) via_app.insert(op.statement);
    c.expect(via_app == expected, "app-log extraction is not half-open");

    EventLog db_resolved = resolve_fd_tuples(db);
    ThreadKey worker = map_worker(db_resolved, tuple);
    std::set<std::string> via_sys;
    for (const auto& op : extract_ops_syscall(db_resolved, worker, anchor.window, kDefaultStatementLog)) {
      via_sys.insert(op.statement);
    }
    c.expect(via_sys == expected, "syscall extraction is not half-open");
  }
  return c;
}

Check check_extraction_paths(std::uint64_t seed) {
  Check c;
  ScenarioConfig cfg = make_config(seed, 20, 60);
  cfg.db_log_mode = DbLogMode::both;
  cfg.split_write_prob = 0.3;
  cfg.multi_conn_prob = 0.2;
  Scenario s = simulate(cfg);
  AnalysisOptions o = options_for(s, {});
  o.db_source = DbSource::syscall;
  AnalysisBundle via_sys = analyze(inputs_for(s), o);
  o.db_source = DbSource::applog;
  AnalysisBundle via_app = analyze(inputs_for(s), o);
  auto listing = [](const std::vector<DBOperation>& ops) {
    std::vector<std::pair<Nanos, std::string>> out;
    for (const auto& op : ops) out.emplace_back(op.ts, op.statement);
    std::sort(out.begin(), out.end());
    return out;
  };
  for (const auto& [id, attr] : via_sys.requests) {
    if (listing(attr.db_ops) != listing(via_app.requests.at(id).db_ops)) c.fail(id + ": extraction paths disagree");
  }
  c.expect(listing(via_sys.full_db_log) == listing(via_app.full_db_log), "full DB logs disagree");
  return c;
}

Check check_db_snapshots(std::uint64_t seed) {
  Check c;
  Gen g(seed);
  NaiveDb oracle;
  DBState state;
  std::vector<std::pair<DBSnapshot, DBState>> taken;
  Nanos ts = 0;
  for (int i = 0; i < 300; ++i) {
    std::string stmt = random_statement(g);
    DBOperation op{++ts, stmt, "1:1", std::nullopt, false};
    apply_db_op_in_place(state, op);
    naive_apply(oracle, stmt);
    if (!(state == to_state(oracle))) c.fail("state diverges from map oracle after " + stmt);
    if (i % 25 == 0) taken.push_back({snapshot_db(state, ts), to_state(oracle)});
  }
  for (const auto& [snap, expected] : taken) {
    DBState back = restore_db(snap);
    c.expect(back == expected, "restored snapshot differs from oracle state at " + std::to_string(snap.ts));
    c.expect(back.serialize() == snap.bytes, "restore then serialize is not byte-identical");
    c.expect(DBSnapshot::from_json(snap.to_json()) == snap, "snapshot JSON round-trip");
    DBSnapshot tampered = snap;
    tampered.bytes += " ";
    c.expect(throws_code([&] { restore_db(tampered); }, ErrorCode::CorruptSnapshot), "tampered snapshot accepted");
  }
  return c;
}

Check check_backups(std::uint64_t seed) {
  Check c;
  Gen g(seed);
  std::vector<std::string> paths;
  for (int i = 0; i < 8; ++i) paths.push_back("/data/f" + std::to_string(i));
  FileTree tree;
  BackupChain chain;
  std::vector<std::pair<Nanos, std::map<std::string, std::string>>> copies;
  Nanos ts = 100;
  for (int step = 0; step < 60; ++step) {
    const std::string& p = g.pick(paths);
    if (g.coin(0.2)) {
      tree.entries.erase(p);
    } else if (g.coin(0.7)) {
      write_at(tree.entries[p], g.between(0, 20), g.bytes(12));
    }
    if (step % 4 == 0) {
      ts += g.between(1, 50);
      std::size_t before = chain.store_bytes();
      std::size_t added = chain.incremental_backup(tree, ts);
      c.expect(chain.store_bytes() == before + added, "reported bytes disagree with store growth");
      copies.push_back({ts, tree.entries});
      if (g.coin(0.3)) {
        ts += 1;
        c.expect(chain.incremental_backup(tree, ts) == 0, "unchanged tree added bytes");
        c.expect(chain.manifests().back().entries == chain.manifests()[chain.manifests().size() - 2].entries,
                 "unchanged tree produced a different manifest");
        copies.push_back({ts, tree.entries});
      }
    }
  }
  c.expect(throws_code([&] { chain.incremental_backup(tree, ts); }, ErrorCode::NonMonotoneTs),
           "repeated backup ts accepted");
  for (int probe = 0; probe < 200; ++probe) {
    Nanos t = g.between64(copies.front().first - 5, ts + 5);
    const std::string& p = g.pick(paths);
    if (t < copies.front().first) {
      c.expect(throws_code([&] { chain.restore_file_version(p, t); }, ErrorCode::NoBackupBefore),
               "restore before first backup did not fail");
      continue;
    }
    auto copy = std::prev(std::upper_bound(copies.begin(), copies.end(), t,
                                           [](Nanos v, const auto& e) { return v < e.first; }));
    std::optional<std::string> expected;
    if (auto it = copy->second.find(p); it != copy->second.end()) expected = it->second;
    if (chain.restore_file_version(p, t) != expected) c.fail("version of " + p + " at " + std::to_string(t));
  }
  TempDir dir;
  chain.save(dir.path());
  BackupChain loaded = BackupChain::load(dir.path());
  c.expect(loaded.manifests() == chain.manifests() && loaded.store() == chain.store(), "chain save/load round-trip");
  return c;
}

Check check_file_ops(std::uint64_t seed) {
  Check c;
  Gen g(seed);
  std::vector<std::string> paths;
  for (int i = 0; i < 6; ++i) paths.push_back("/data/d" + std::to_string(i % 2) + "/f" + std::to_string(i));
  std::map<std::string, std::string> oracle;
  FileTree tree;
  for (int step = 0; step < 400; ++step) {
    FileOperation op;
    op.path = g.pick(paths);
    op.ts = step;
    int roll = g.between(0, 9);
    bool exists = oracle.contains(op.path);
    if (roll < 3) {
      op.kind = FileOpKind::create;
      op.truncate = g.coin();
      if (g.coin()) op.payload = PayloadRef{g.between(0, 8), g.bytes(10), step, {}};
      std::string& content = oracle[op.path];
      if (op.truncate) content.clear();
      if (op.payload) {
        auto end = static_cast<std::size_t>(op.payload->offset) + op.payload->data.size();
        if (content.size() < end) content.resize(end, '\0');
        content.replace(static_cast<std::size_t>(op.payload->offset), op.payload->data.size(), op.payload->data);
      }
    } else if (roll < 7) {
      op.kind = FileOpKind::write;
      op.payload = PayloadRef{g.between(0, 30), g.bytes(10), step, {}};
      if (!exists) {
        c.expect(throws_code([&] { apply_file_op(tree, op); }, ErrorCode::MissingFile), "write to absent file");
        continue;
      }
      std::string& content = oracle[op.path];
      auto end = static_cast<std::size_t>(op.payload->offset) + op.payload->data.size();
      if (content.size() < end) content.resize(end, '\0');
      content.replace(static_cast<std::size_t>(op.payload->offset), op.payload->data.size(), op.payload->data);
    } else if (roll < 8) {
      op.kind = FileOpKind::remove;
      oracle.erase(op.path);
    } else {
      op.kind = FileOpKind::rename;
      op.rename_to = g.pick(paths);
      if (!exists) {
        c.expect(throws_code([&] { apply_file_op(tree, op); }, ErrorCode::MissingFile), "rename of absent file");
        continue;
      }
      std::string bytes = oracle[op.path];
      oracle.erase(op.path);
      oracle[*op.rename_to] = bytes;
    }
    apply_file_op_in_place(tree, op);
    if (tree.entries != oracle) c.fail("tree diverges from map oracle at step " + std::to_string(step));
  }
  return c;
}

Check check_recovery_idempotent(const Scenario& s) {
  Check c;
  AnalysisBundle b = run_analysis(s, s.truth.malicious);
  RecoveryRun first = run_recovery(s, b, always(Choice::selective_replay));
  RecoveryRun second = run_recovery(s, b, always(Choice::selective_replay), &first.db, &first.tree);
  c.expect(first.db.hash() == second.db.hash(), "DB hash changed on second recovery");
  c.expect(first.tree.hash() == second.tree.hash(), "tree hash changed on second recovery");
  c.expect(canonical_dump(first.plan.db.to_json()) == canonical_dump(second.plan.db.to_json()),
           "DB plan changed on second recovery");
  return c;
}

Check check_filter_monotone(const Scenario& s, std::uint64_t seed) {
  Check c;
  Gen g(seed);
  const auto& ids = s.truth.request_ids;
  for (int round = 0; round < 4; ++round) {
    std::set<std::string> small = {g.pick(ids)};
    std::set<std::string> large = small;
    int extra = g.between(1, 4);
    for (int i = 0; i < extra; ++i) large.insert(g.pick(ids));
    AnalysisBundle a = run_analysis(s, small);
    AnalysisBundle b = run_analysis(s, large);
    if (a.malicious_db_ops.empty() || b.malicious_db_ops.empty()) continue;
    DbPlan pa = plan_db_recovery(a.malicious_db_ops, s.snapshots, a.full_db_log);
    DbPlan pb = plan_db_recovery(b.malicious_db_ops, s.snapshots, b.full_db_log);
    std::set<std::tuple<Nanos, std::string, std::string>> replay_a, filtered_b;
    for (const auto& op : pa.replay) replay_a.insert(op.key());
    for (const auto& op : pb.filtered) filtered_b.insert(op.key());
    for (const auto& op : pa.filtered) c.expect(filtered_b.contains(op.key()), "filtered set shrank");
    // Ops newer than the smaller set's baseline must already be replayed there.
    for (const auto& op : pb.replay) {
      if (op.ts > pa.baseline.ts && !replay_a.contains(op.key())) c.fail("enlarged set added " + op.id());
    }
    FsPlan fa = plan_fs_recovery(a.malicious_file_ops, s.truth.reference_tree, s.backups, s.write_log, s.baseline,
                                 Classification::defaults());
    FsPlan fb = plan_fs_recovery(b.malicious_file_ops, s.truth.reference_tree, s.backups, s.write_log, s.baseline,
                                 Classification::defaults());
    std::map<std::string, const FsAction*> by_path;
    for (const auto& act : fa.actions) by_path[act.path] = &act;
    for (const auto& act : fb.actions) {
      auto it = by_path.find(act.path);
      if (it == by_path.end() || act.kind != FsActionKind::incremental_replay ||
          it->second->kind != FsActionKind::incremental_replay || act.base_version_ts != it->second->base_version_ts) {
        continue;
      }
      std::set<std::uint64_t> seqs;
      for (const auto& r : it->second->replay) seqs.insert(r.seq);
      for (const auto& r : act.replay) c.expect(seqs.contains(r.seq), "enlarged set added a write to " + act.path);
    }
  }
  return c;
}

Check check_determinism(const ScenarioConfig& config) {
  Check c;
  auto digest = [](const Scenario& s) {
    std::string all = serialize_trace(s.web) + serialize_trace(s.db) + serialize_app_log(s.app_log) +
                      serialize_write_log(s.write_log) + canonical_dump(s.truth.to_json());
    for (const auto& snap : s.snapshots) all += snap.id;
    for (const auto& m : s.backups.manifests()) all += std::to_string(m.ts) + canonical_dump(json(m.entries));
    return sha256_hex(all);
  };
  Scenario a = simulate(config);
  Scenario b = simulate(config);
  c.expect(digest(a) == digest(b), "same seed produced different scenarios");
  AnalysisBundle ba = run_analysis(a, a.truth.malicious);
  AnalysisBundle bb = run_analysis(b, b.truth.malicious);
  c.expect(canonical_dump(ba.to_json()) == canonical_dump(bb.to_json()), "analysis bundle not deterministic");
  RecoveryRun ra = run_recovery(a, ba, always(Choice::selective_replay));
  RecoveryRun rb = run_recovery(b, bb, always(Choice::selective_replay));
  c.expect(ra.db.hash() == rb.db.hash() && ra.tree.hash() == rb.tree.hash(), "recovery not deterministic");
  return c;
}

Check check_ground_truth(const Scenario& s) {
  Check c;
  DBState all = s.initial_db;
  DBState benign = s.initial_db;
  for (const auto& l : s.truth.db_log) {
    apply_db_op_in_place(all, l.op);
    if (!s.truth.malicious.contains(l.request)) apply_db_op_in_place(benign, l.op);
  }
  c.expect(all == s.truth.reference_db, "labelled DB ops do not reproduce the reference state");
  c.expect(benign == s.truth.benign_db, "benign DB ops do not reproduce the benign state");
  FileTree tree = s.initial_tree;
  FileTree benign_tree = s.initial_tree;
  for (const auto& l : s.truth.file_log) {
    apply_file_op_in_place(tree, l.op);
    if (!s.truth.malicious.contains(l.request)) apply_file_op_in_place(benign_tree, l.op);
  }
  c.expect(tree.entries == s.truth.reference_tree.entries, "labelled file ops do not reproduce the reference tree");
  c.expect(benign_tree.entries == s.truth.benign_tree.entries, "benign file ops do not reproduce the benign tree");
  for (const EventLog* log : {&s.web, &s.db}) {
    for (std::size_t i = 1; i < log->events.size(); ++i) {
      if (!event_before(log->events[i - 1], log->events[i])) c.fail("log out of (ts, seq) order");
      if (log->events[i - 1].seq >= log->events[i].seq) c.fail("seq regresses");
    }
  }
  return c;
}

}  // namespace rwd::testkit
