#include "rewind/recovery.hpp"

#include <algorithm>
#include <limits>

#include "rewind/json_io.hpp"

namespace rwd {

// ---- database ------------------------------------------------------------

json DbPlan::to_json() const {
  json replay_j = json::array();
  for (const auto& op : replay) replay_j.push_back(rwd::to_json(op));
  json filtered_j = json::array();
  for (const auto& op : filtered) filtered_j.push_back(rwd::to_json(op));
  return {{"baseline", baseline.to_json()}, {"replay", replay_j}, {"filtered", filtered_j}};
}

DbPlan DbPlan::from_json(const json& j) {
  DbPlan p;
  p.baseline = DBSnapshot::from_json(j.at("baseline"));
  for (const auto& op : j.at("replay")) p.replay.push_back(db_operation_from_json(op));
  for (const auto& op : j.at("filtered")) p.filtered.push_back(db_operation_from_json(op));
  return p;
}

DbPlan plan_db_recovery(const std::vector<DBOperation>& malicious, const std::vector<DBSnapshot>& snapshots,
                        const std::vector<DBOperation>& full_log) {
  std::set<std::tuple<Nanos, std::string, std::string>> known;
  for (const auto& op : full_log) known.insert(op.key());
  std::set<std::tuple<Nanos, std::string, std::string>> bad;
  Nanos earliest = std::numeric_limits<Nanos>::max();
  for (const auto& op : malicious) {
    if (!known.contains(op.key())) {
      throw Error(ErrorCode::InvalidArgument, "malicious operation not in the full log: " + op.id());
    }
    bad.insert(op.key());
    earliest = std::min(earliest, op.ts);
  }

  const DBSnapshot* baseline = nullptr;
  for (const auto& s : snapshots) {
    if (s.ts < earliest && (!baseline || s.ts > baseline->ts)) baseline = &s;
  }
  if (!baseline) {
    throw Error(ErrorCode::NoCleanSnapshot,
                malicious.empty() ? "no snapshots available"
                                  : "earliest malicious op at " + std::to_string(earliest) + " predates every snapshot");
  }

  DbPlan plan;
  plan.baseline = *baseline;
  for (const auto& op : full_log) {
    if (op.ts <= baseline->ts) continue;
    if (bad.contains(op.key())) {
      plan.filtered.push_back(op);
    } else {
      plan.replay.push_back(op);
    }
  }
  return plan;
}

DBState execute_db_recovery(const DbPlan& plan, DbStore& store, Diagnostics* warnings) {
  DBState rebuilt = restore_db(plan.baseline);
  Diagnostics local;
  for (const auto& op : plan.replay) apply_db_op_in_place(rebuilt, op, &local);
  store.live = rebuilt;
  if (warnings) warnings->insert(warnings->end(), local.begin(), local.end());
  return rebuilt;
}

// ---- file system -----------------------------------------------------------

std::string_view to_string(FsActionKind kind) {
  switch (kind) {
    case FsActionKind::baseline_restore: return "baseline_restore";
    case FsActionKind::incremental_replay: return "incremental_replay";
    case FsActionKind::interactive: return "interactive";
  }
  return "baseline_restore";
}

namespace {

FsActionKind fs_action_kind_from_string(std::string_view text) {
  if (text == "baseline_restore") return FsActionKind::baseline_restore;
  if (text == "incremental_replay") return FsActionKind::incremental_replay;
  if (text == "interactive") return FsActionKind::interactive;
  throw Error(ErrorCode::InvalidArgument, "unknown action kind '" + std::string(text) + "'");
}

json optional_bytes(const std::optional<std::string>& bytes) {
  return bytes ? json(base64_encode(*bytes)) : json(nullptr);
}

std::optional<std::string> bytes_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return base64_decode(j.get<std::string>());
}

}  // namespace

json FsPlan::to_json() const {
  json arr = json::array();
  for (const auto& a : actions) {
    json j = {{"kind", std::string(to_string(a.kind))}, {"path", a.path}, {"reason", a.reason}};
    if (a.kind == FsActionKind::baseline_restore) {
      j["content_b64"] = optional_bytes(a.content);
    } else {
      j["base_version_ts"] = a.base_version_ts ? json(*a.base_version_ts) : json(nullptr);
      j["base_content_b64"] = optional_bytes(a.base_content);
      json replay = json::array();
      for (const auto& r : a.replay) replay.push_back(rwd::to_json(r));
      j["replay"] = replay;
      json history = json::array();
      for (const auto& h : a.history) history.push_back({{"record", rwd::to_json(h.record)}, {"malicious", h.malicious}});
      j["history"] = history;
    }
    arr.push_back(std::move(j));
  }
  return {{"actions", arr}};
}

FsPlan FsPlan::from_json(const json& j) {
  FsPlan plan;
  for (const auto& item : j.at("actions")) {
    FsAction a;
    a.kind = fs_action_kind_from_string(item.at("kind").get<std::string>());
    a.path = item.at("path").get<std::string>();
    a.reason = item.value("reason", std::string());
    if (a.kind == FsActionKind::baseline_restore) {
      a.content = bytes_from(item.at("content_b64"));
    } else {
      if (!item.at("base_version_ts").is_null()) a.base_version_ts = item.at("base_version_ts").get<Nanos>();
      a.base_content = bytes_from(item.at("base_content_b64"));
      for (const auto& r : item.at("replay")) a.replay.push_back(write_log_record_from_json(r));
      for (const auto& h : item.at("history")) {
        a.history.push_back({write_log_record_from_json(h.at("record")), h.at("malicious").get<bool>()});
      }
    }
    plan.actions.push_back(std::move(a));
  }
  return plan;
}

bool FsPlanOptions::is_structured(std::string_view path) const {
  return std::any_of(structured_extensions.begin(), structured_extensions.end(),
                     [&](const std::string& ext) { return path.ends_with(ext); });
}

FsPlan plan_fs_recovery(const std::vector<FileOperation>& malicious, const FileTree& tree, const BackupChain& chain,
                        const WriteLog& write_log, const Baseline& baseline, const Classification& classification,
                        const FsPlanOptions& options) {
  (void)tree;
  std::map<std::string, Nanos> first_hit;
  std::set<std::tuple<Nanos, int, int, std::string, std::int64_t>> bad_writes;
  for (const auto& op : malicious) {
    auto touch = [&](const std::string& path) {
      auto [it, inserted] = first_hit.try_emplace(path, op.ts);
      if (!inserted) it->second = std::min(it->second, op.ts);
    };
    touch(op.path);
    if (op.rename_to) touch(*op.rename_to);
    if (op.payload) {
      bad_writes.insert({op.payload->write_ts, op.actor.pid, op.actor.tid, op.path, op.payload->offset});
    }
  }
  // Classification totality is checked up front so a gap aborts before any
  // action is produced.
  for (const auto& [path, _] : first_hit) classification.require(path);

  std::map<std::string, std::vector<const WriteLogRecord*>> writes_by_path;
  for (const auto& r : write_log.records) writes_by_path[r.path].push_back(&r);
  for (auto& [_, v] : writes_by_path) {
    std::stable_sort(v.begin(), v.end(), [](const WriteLogRecord* a, const WriteLogRecord* b) {
      return std::tie(a->ts, a->seq) < std::tie(b->ts, b->seq);
    });
  }

  FsPlan plan;
  for (const auto& [path, first_ts] : first_hit) {
    FsAction a;
    a.path = path;
    if (classification.require(path) == DirClass::system_app) {
      a.kind = FsActionKind::baseline_restore;
      auto it = baseline.entries.find(path);
      if (it != baseline.entries.end()) {
        a.content = it->second;
        a.reason = "system/application path restored from baseline";
      } else {
        a.reason = "absent from baseline; removed";
      }
      plan.actions.push_back(std::move(a));
      continue;
    }

    a.base_version_ts = chain.version_at(first_ts - 1);
    if (a.base_version_ts) a.base_content = chain.restore_file_version(path, *a.base_version_ts);
    Nanos after = a.base_version_ts.value_or(std::numeric_limits<Nanos>::min());
    for (const WriteLogRecord* r : writes_by_path[path]) {
      if (r->ts <= after) continue;
      bool flagged = bad_writes.contains(r->match_key());
      a.history.push_back({*r, flagged});
      if (!flagged) a.replay.push_back(*r);
    }

    if (!a.base_version_ts) {
      a.kind = FsActionKind::interactive;
      a.reason = "no backup predates the first malicious write";
    } else if (options.is_structured(path)) {
      a.kind = FsActionKind::interactive;
      a.reason = "structured file";
    } else if (!a.base_content && a.replay.empty()) {
      a.kind = FsActionKind::baseline_restore;
      a.reason = "created solely by malicious operations; removed";
      a.history.clear();
    } else {
      a.kind = FsActionKind::incremental_replay;
      a.reason = "restored to backup version and replayed legitimate writes";
      a.history.clear();
    }
    plan.actions.push_back(std::move(a));
  }
  return plan;
}

std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::full_rollback: return "full_rollback";
    case Choice::selective_replay: return "selective_replay";
    case Choice::skip: return "skip";
  }
  return "skip";
}

Choice choice_from_string(std::string_view text) {
  if (text == "full_rollback") return Choice::full_rollback;
  if (text == "selective_replay") return Choice::selective_replay;
  if (text == "skip") return Choice::skip;
  throw Error(ErrorCode::InvalidArgument, "unknown choice '" + std::string(text) + "'");
}

ScriptedDecisions ScriptedDecisions::parse(std::string_view text) {
  std::map<std::string, Choice> choices;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("path") || !j.contains("choice")) {
      throw Error(ErrorCode::InvalidArgument, "decision record must be {path, choice}");
    }
    choices[j.at("path").get<std::string>()] = choice_from_string(j.at("choice").get<std::string>());
  }
  return ScriptedDecisions(std::move(choices));
}

Choice ScriptedDecisions::operator()(const FsAction& action) const {
  auto it = choices_.find(action.path);
  if (it == choices_.end()) throw Error(ErrorCode::ProviderAbort, "no decision for " + action.path);
  return it->second;
}

std::optional<std::string> replay_writes(std::optional<std::string> base, const std::vector<WriteLogRecord>& writes) {
  for (const auto& w : writes) {
    if (!base) base.emplace();
    write_at(*base, w.offset, w.data);
  }
  return base;
}

FsExecution execute_fs_recovery(const FsPlan& plan, FileTree& tree, const DecisionProvider& provider) {
  FsExecution result;
  result.tree = tree;
  auto place = [&](const std::string& path, const std::optional<std::string>& content) {
    if (content) {
      result.tree.entries[path] = *content;
    } else {
      result.tree.entries.erase(path);
    }
  };
  for (const FsAction& a : plan.actions) {
    switch (a.kind) {
      case FsActionKind::baseline_restore: place(a.path, a.content); break;
      case FsActionKind::incremental_replay: place(a.path, replay_writes(a.base_content, a.replay)); break;
      case FsActionKind::interactive: {
        Choice c = provider(a);
        result.choices[a.path] = c;
        if (c == Choice::full_rollback) {
          place(a.path, a.base_content);
        } else if (c == Choice::selective_replay) {
          std::vector<WriteLogRecord> legit;
          for (const auto& h : a.history) {
            if (!h.malicious) legit.push_back(h.record);
          }
          place(a.path, replay_writes(a.base_content, legit));
        }
        break;
      }
    }
  }
  tree = result.tree;
  return result;
}

// ---- outcome -------------------------------------------------------------

OperationSets restored_operations(const std::map<std::string, RequestOps>& attributed, const DbPlan& db_plan,
                                  const FsPlan& fs_plan, const std::map<std::string, Choice>& choices) {
  std::set<std::tuple<Nanos, std::string, std::string>> dropped;
  for (const auto& op : db_plan.filtered) dropped.insert(op.key());

  std::map<std::string, const FsAction*> actions;
  for (const auto& a : fs_plan.actions) actions[a.path] = &a;

  auto file_survives = [&](const FileOperation& op) {
    auto it = actions.find(op.path);
    if (it == actions.end()) return true;
    const FsAction& a = *it->second;
    Nanos base = a.base_version_ts.value_or(std::numeric_limits<Nanos>::min());
    auto kept_in = [&](const std::vector<WriteLogRecord>& records) {
      if (!op.payload) return false;
      auto key = std::make_tuple(op.payload->write_ts, op.actor.pid, op.actor.tid, op.path, op.payload->offset);
      return std::any_of(records.begin(), records.end(),
                         [&](const WriteLogRecord& r) { return r.match_key() == key; });
    };
    switch (a.kind) {
      case FsActionKind::baseline_restore: return false;
      case FsActionKind::incremental_replay: return op.ts <= base || kept_in(a.replay);
      case FsActionKind::interactive: {
        auto c = choices.find(op.path);
        Choice choice = c == choices.end() ? Choice::skip : c->second;
        if (choice == Choice::skip) return true;
        if (op.ts <= base) return true;
        if (choice == Choice::full_rollback) return false;
        std::vector<WriteLogRecord> legit;
        for (const auto& h : a.history) {
          if (!h.malicious) legit.push_back(h.record);
        }
        return kept_in(legit);
      }
    }
    return true;
  };

  OperationSets out;
  for (const auto& [request, ops] : attributed) {
    auto& set = out[request];
    for (const auto& op : ops.db) {
      if (!dropped.contains(op.key())) set.insert(op.id());
    }
    for (const auto& op : ops.files) {
      if (file_survives(op)) set.insert(op.id());
    }
  }
  return out;
}

double compute_recovery_accuracy(const OperationSets& restored, const OperationSets& ground_truth) {
  if (restored.size() != ground_truth.size() ||
      !std::equal(restored.begin(), restored.end(), ground_truth.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw Error(ErrorCode::UniverseMismatch, "restored covers " + std::to_string(restored.size()) +
                                                 " requests, ground truth " + std::to_string(ground_truth.size()));
  }
  if (restored.empty()) return 1.0;
  std::size_t exact = 0;
  for (const auto& [request, ops] : restored) {
    if (ground_truth.at(request) == ops) ++exact;
  }
  return static_cast<double>(exact) / static_cast<double>(restored.size());
}

}  // namespace rwd
