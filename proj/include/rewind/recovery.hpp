#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rewind/backup.hpp"
#include "rewind/db_state.hpp"
#include "rewind/file_tree.hpp"
#include "rewind/operations.hpp"
#include "rewind/write_log.hpp"

namespace rwd {

// ---- database ------------------------------------------------------------

struct DbPlan {
  DBSnapshot baseline;
  std::vector<DBOperation> replay;    // chronological, malicious removed
  std::vector<DBOperation> filtered;  // the malicious operations dropped

  json to_json() const;
  static DbPlan from_json(const json& j);
};

// Baseline is the latest snapshot strictly older than the earliest malicious
// operation (the latest snapshot overall when there is none). Throws
// NoCleanSnapshot, or InvalidArgument when a malicious op is not in full_log.
DbPlan plan_db_recovery(const std::vector<DBOperation>& malicious, const std::vector<DBSnapshot>& snapshots,
                        const std::vector<DBOperation>& full_log);

struct DbStore {
  DBState live;
  std::vector<DBSnapshot> snapshots;
};

// Rebuilds aside and swaps into `store` only on success. UPD/DEL replays that
// hit missing rows land in `warnings`.
DBState execute_db_recovery(const DbPlan& plan, DbStore& store, Diagnostics* warnings = nullptr);

// ---- file system -----------------------------------------------------------

enum class FsActionKind { baseline_restore, incremental_replay, interactive };

std::string_view to_string(FsActionKind kind);

struct HistoryEntry {
  WriteLogRecord record;
  bool malicious = false;
};

struct FsAction {
  FsActionKind kind = FsActionKind::baseline_restore;
  std::string path;
  std::string reason;
  // baseline_restore: target content; nullopt removes the file.
  std::optional<std::string> content;
  // incremental_replay / interactive
  std::optional<Nanos> base_version_ts;
  std::optional<std::string> base_content;
  std::vector<WriteLogRecord> replay;
  std::vector<HistoryEntry> history;
};

struct FsPlan {
  std::vector<FsAction> actions;

  json to_json() const;
  static FsPlan from_json(const json& j);
};

struct FsPlanOptions {
  // Files treated as structured/binary and routed to interactive recovery.
  std::vector<std::string> structured_extensions = {".db", ".sqlite", ".bin", ".zip", ".gz", ".so", ".exe"};

  bool is_structured(std::string_view path) const;
};

FsPlan plan_fs_recovery(const std::vector<FileOperation>& malicious, const FileTree& tree, const BackupChain& chain,
                        const WriteLog& write_log, const Baseline& baseline, const Classification& classification,
                        const FsPlanOptions& options = {});

enum class Choice { full_rollback, selective_replay, skip };

std::string_view to_string(Choice choice);
Choice choice_from_string(std::string_view text);

// Answers one interactive action; throws Error(ProviderAbort) to abandon.
using DecisionProvider = std::function<Choice(const FsAction&)>;

// {path, choice} records; a path with no record aborts.
class ScriptedDecisions {
 public:
  explicit ScriptedDecisions(std::map<std::string, Choice> choices) : choices_(std::move(choices)) {}
  static ScriptedDecisions parse(std::string_view jsonl);

  Choice operator()(const FsAction& action) const;

 private:
  std::map<std::string, Choice> choices_;
};

struct FsExecution {
  FileTree tree;
  std::map<std::string, Choice> choices;
};

// Applies every action to a copy of `tree` and swaps it in on success.
FsExecution execute_fs_recovery(const FsPlan& plan, FileTree& tree, const DecisionProvider& provider);

// Base content plus the given writes, in order; writes to an absent file
// materialize it.
std::optional<std::string> replay_writes(std::optional<std::string> base, const std::vector<WriteLogRecord>& writes);

// ---- combined ------------------------------------------------------------

struct RecoveryPlan {
  DbPlan db;
  FsPlan fs;

  json to_json() const { return {{"db", db.to_json()}, {"fs", fs.to_json()}}; }
  static RecoveryPlan from_json(const json& j) { return {DbPlan::from_json(j.at("db")), FsPlan::from_json(j.at("fs"))}; }
};

// ---- outcome -------------------------------------------------------------

struct RequestOps {
  std::vector<DBOperation> db;
  std::vector<FileOperation> files;
};

using OperationSets = std::map<std::string, std::set<std::string>>;

// P: per request, the attributed operations whose effect survives recovery.
OperationSets restored_operations(const std::map<std::string, RequestOps>& attributed, const DbPlan& db_plan,
                                  const FsPlan& fs_plan, const std::map<std::string, Choice>& choices);

// Fraction of requests whose restored set equals the ground truth exactly.
// Throws UniverseMismatch when the request sets differ.
double compute_recovery_accuracy(const OperationSets& restored, const OperationSets& ground_truth);

}  // namespace rwd
