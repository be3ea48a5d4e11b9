#include "rewind/store.hpp"

#include <algorithm>
#include <filesystem>

namespace rwd {

namespace fs = std::filesystem;

json load_json(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::MalformedRecord, path + " is not valid JSON");
  return j;
}

void save_scenario(const Scenario& s, const std::string& root) {
  ScenarioLayout layout(root);
  fs::create_directories(layout.traces());
  write_file_atomic(layout.config(), canonical_dump(s.config.to_json()) + "\n");
  write_file_atomic(layout.ground_truth(), canonical_dump(s.truth.to_json()) + "\n");
  write_file_atomic(layout.traces() + "/" + kWebTraceFile, serialize_trace(s.web));
  write_file_atomic(layout.traces() + "/" + kDbTraceFile, serialize_trace(s.db));
  if (s.config.db_log_mode != DbLogMode::syscall_statement_log) {
    write_file_atomic(layout.traces() + "/" + kAppLogFile, serialize_app_log(s.app_log));
  }
  Store store;
  store.db.live = s.truth.reference_db;
  store.db.snapshots = s.snapshots;
  store.tree = s.truth.reference_tree;
  store.baseline = s.baseline;
  store.backups = s.backups;
  store.write_log = s.write_log;
  save_store(store, layout.store());
}

namespace {

std::string traces_dir(const std::string& dir) {
  if (fs::exists(fs::path(dir) / kWebTraceFile)) return dir;
  if (fs::exists(fs::path(dir) / "traces" / kWebTraceFile)) return (fs::path(dir) / "traces").string();
  throw Error(ErrorCode::Io, "no " + std::string(kWebTraceFile) + " under " + dir);
}

}  // namespace

AnalysisInputs load_inputs(const std::string& dir) {
  std::string t = traces_dir(dir);
  AnalysisInputs in;
  in.web = parse_trace(read_file(t + "/" + kWebTraceFile), std::string(kWebHost));
  if (fs::exists(fs::path(t) / kDbTraceFile)) in.db = parse_trace(read_file(t + "/" + kDbTraceFile), std::string(kDbHost));
  if (fs::exists(fs::path(t) / kAppLogFile)) in.app_log = parse_app_log(read_file(t + "/" + kAppLogFile));
  return in;
}

void apply_scenario_defaults(const std::string& dir, AnalysisOptions& options) {
  fs::path t = traces_dir(dir);
  fs::path config = t.parent_path() / "scenario.json";
  if (!fs::exists(config)) return;
  ScenarioConfig c = ScenarioConfig::from_json(load_json(config.string()));
  options.model = c.server_model;
  options.db_source = c.db_log_mode == DbLogMode::applog_with_client ? DbSource::applog : DbSource::syscall;
  options.max_clock_skew = c.clock_skew_ns;
}

Store load_store(const std::string& dir) {
  Store s;
  fs::path root(dir);
  s.db.live = DBState::from_json(load_json((root / "db" / "live.json").string()));
  fs::path snaps = root / "db" / "snapshots";
  if (fs::exists(snaps)) {
    for (const auto& entry : fs::directory_iterator(snaps)) {
      DBSnapshot snap = DBSnapshot::from_json(load_json(entry.path().string()));
      if (sha256_hex(snap.bytes) != snap.id) {
        throw Error(ErrorCode::CorruptSnapshot, entry.path().string() + " fails its hash");
      }
      s.db.snapshots.push_back(std::move(snap));
    }
  }
  std::sort(s.db.snapshots.begin(), s.db.snapshots.end(),
            [](const DBSnapshot& a, const DBSnapshot& b) { return a.ts < b.ts; });
  s.tree = FileTree::from_json(load_json((root / "fs" / "live.json").string()));
  s.baseline = Baseline::from_json(load_json((root / "fs" / "baseline.json").string()));
  s.backups = BackupChain::load((root / "fs" / "backups").string());
  fs::path wl = root / "fs" / "write_log.jsonl";
  if (fs::exists(wl)) s.write_log = parse_write_log(read_file(wl.string()));
  return s;
}

void save_live(const Store& s, const std::string& dir) {
  fs::path root(dir);
  fs::create_directories(root / "db");
  fs::create_directories(root / "fs");
  write_file_atomic((root / "db" / "live.json").string(), s.db.live.serialize() + "\n");
  write_file_atomic((root / "fs" / "live.json").string(), canonical_dump(s.tree.to_json()) + "\n");
}

void save_store(const Store& s, const std::string& dir) {
  fs::path root(dir);
  save_live(s, dir);
  fs::create_directories(root / "db" / "snapshots");
  for (const DBSnapshot& snap : s.db.snapshots) {
    write_file_atomic((root / "db" / "snapshots" / (std::to_string(snap.ts) + ".json")).string(),
                      canonical_dump(snap.to_json()) + "\n");
  }
  write_file_atomic((root / "fs" / "baseline.json").string(), canonical_dump(s.baseline.to_json()) + "\n");
  write_file_atomic((root / "fs" / "write_log.jsonl").string(), serialize_write_log(s.write_log));
  s.backups.save((root / "fs" / "backups").string());
}

GroundTruth load_ground_truth(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "ground truth " + path + " not found");
  try {
    return GroundTruth::from_json(load_json(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, path + ": " + e.what());
  }
}

}  // namespace rwd
