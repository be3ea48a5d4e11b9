#pragma once

#include <string>

#include "rewind/backup.hpp"
#include "rewind/file_tree.hpp"
#include "rewind/pipeline.hpp"
#include "rewind/recovery.hpp"
#include "rewind/simulator.hpp"
#include "rewind/write_log.hpp"

namespace rwd {

// On-disk layout of one scenario:
//   scenario.json, ground_truth.json
//   traces/{web.trace.jsonl, db.trace.jsonl, db_app.log}
//   store/db/{live.json, snapshots/<ts>.json}
//   store/fs/{live.json, baseline.json, write_log.jsonl, backups/}
struct ScenarioLayout {
  explicit ScenarioLayout(std::string root_dir) : root(std::move(root_dir)) {}

  std::string root;

  std::string traces() const { return root + "/traces"; }
  std::string store() const { return root + "/store"; }
  std::string config() const { return root + "/scenario.json"; }
  std::string ground_truth() const { return root + "/ground_truth.json"; }
};

inline constexpr const char* kWebTraceFile = "web.trace.jsonl";
inline constexpr const char* kDbTraceFile = "db.trace.jsonl";
inline constexpr const char* kAppLogFile = "db_app.log";

void save_scenario(const Scenario& scenario, const std::string& root);

// Accepts either a scenario root or its traces/ directory. The app log is
// loaded when present.
AnalysisInputs load_inputs(const std::string& dir);

// Fills model/source/skew from <root>/scenario.json when it exists next to
// the traces; otherwise leaves `options` untouched.
void apply_scenario_defaults(const std::string& dir, AnalysisOptions& options);

struct Store {
  DbStore db;
  FileTree tree;
  Baseline baseline;
  BackupChain backups;
  WriteLog write_log;
};

// Throws CorruptSnapshot for snapshot files whose content fails their id.
Store load_store(const std::string& store_dir);
void save_store(const Store& store, const std::string& store_dir);
// Rewrites only the live DB and file tree, each through an atomic rename.
void save_live(const Store& store, const std::string& store_dir);

GroundTruth load_ground_truth(const std::string& path);
json load_json(const std::string& path);

}  // namespace rwd
