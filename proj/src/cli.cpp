#include "rewind/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "rewind/json_io.hpp"
#include "rewind/metrics.hpp"
#include "rewind/pipeline.hpp"
#include "rewind/store.hpp"

namespace rwd {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoCleanSnapshot:
    case ErrorCode::NoBackupBefore:
    case ErrorCode::ClassificationGap:
    case ErrorCode::NotSystemPath:
    case ErrorCode::ProviderAbort:
    case ErrorCode::CorruptSnapshot:
    case ErrorCode::MissingFile:
    case ErrorCode::StatementParseError:
      return kExitPrecondition;
    case ErrorCode::InvariantViolation:
      return kExitInternal;
    default:
      return kExitUsage;
  }
}

namespace {

struct Common {
  std::string format = "json";
  std::string db_endpoints = "172.18.0.2:3306";
  std::string classify;
  std::string traces;
  std::string server_model;
  std::string db_source;
  std::string out;
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file_atomic(path, text);
  }
}

Classification classification_from(const Common& c) {
  return c.classify.empty() ? Classification::defaults() : Classification::from_json(load_json(c.classify));
}

AnalysisOptions options_from(const Common& c) {
  AnalysisOptions o;
  o.db_endpoints = parse_endpoint_list(c.db_endpoints);
  apply_scenario_defaults(c.traces, o);
  if (!c.server_model.empty()) o.model = server_model_from_string(c.server_model);
  if (!c.db_source.empty()) o.db_source = db_source_from_string(c.db_source);
  return o;
}

std::set<std::string> split_ids(const std::string& text) {
  std::set<std::string> ids;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    std::string id = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!id.empty()) ids.insert(id);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return ids;
}

json diagnostics_json(const Diagnostics& diags) {
  json arr = json::array();
  for (const auto& d : diags) arr.push_back({{"kind", d.kind}, {"message", d.message}});
  return arr;
}

// ---- commands ------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::optional<std::uint64_t>& seed, const Common& c,
                 std::ostream& out) {
  if (c.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  json j = load_json(config_path);
  if (seed) j["seed"] = *seed;
  ScenarioConfig config = ScenarioConfig::from_json(j);
  Scenario s = simulate(config);
  save_scenario(s, c.out);
  out << "wrote " << c.out << ": " << s.truth.request_ids.size() << " requests, " << s.web.size() << " web events, "
      << s.db.size() << " db events\n";
  return kExitOk;
}

int cmd_partition(const Common& c, std::ostream& out) {
  AnalysisOptions o = options_from(c);
  EventLog web = resolve_fd_tuples(load_inputs(c.traces).web);
  PartitionResult parts = partition(web, o.model);
  if (c.format == "table") {
    std::string text = "request            events       begin_ts         end_ts unclosed\n";
    for (const auto& [id, u] : parts.units) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-16s %8zu %14lld %14lld %s\n", id.c_str(), u.events.size(),
                    static_cast<long long>(u.begin_ts), static_cast<long long>(u.end_ts), u.unclosed ? "yes" : "no");
      text += buf;
    }
    emit(text, c.out, out);
    return kExitOk;
  }
  json units = json::array();
  for (const auto& [id, u] : parts.units) {
    units.push_back({{"request_id", id},
                     {"events", u.events.size()},
                     {"begin_ts", u.begin_ts},
                     {"end_ts", u.end_ts},
                     {"segments", u.segments.size()},
                     {"unclosed", u.unclosed}});
  }
  emit(canonical_dump({{"units", units}, {"diagnostics", diagnostics_json(parts.diagnostics)}}) + "\n", c.out, out);
  return kExitOk;
}

int cmd_trace(const Common& c, const std::string& request, std::ostream& out) {
  AnalysisOptions o = options_from(c);
  EventLog web = resolve_fd_tuples(load_inputs(c.traces).web);
  PartitionResult parts = partition(web, o.model);
  ProvenanceGraph g = build_graph(unit_for(parts, request), web);
  emit(g.to_jsonl(), c.out, out);
  return kExitOk;
}

int cmd_attribute(const Common& c, const std::string& request, std::ostream& out) {
  AnalysisOptions o = options_from(c);
  AnalysisBundle b = analyze(load_inputs(c.traces), o);
  json requests = b.to_json().at("requests");
  if (!request.empty()) {
    if (!requests.contains(request)) throw Error(ErrorCode::UnknownRequest, request);
    requests = json{{request, requests.at(request)}};
  }
  if (c.format == "table") {
    std::string text = "request            anchors   db_ops file_ops external\n";
    for (const auto& [id, r] : requests.items()) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%-16s %9zu %8zu %8zu %8zu\n", id.c_str(), r.at("anchors").size(),
                    r.at("db_ops").size(), r.at("file_ops").size(), r.at("external").size());
      text += buf;
    }
    emit(text, c.out, out);
    return kExitOk;
  }
  emit(canonical_dump(requests) + "\n", c.out, out);
  return kExitOk;
}

int cmd_analyze(const Common& c, const std::string& malicious, std::ostream& out, std::ostream& err, bool timings) {
  AnalysisOptions o = options_from(c);
  o.malicious = split_ids(malicious);
  auto t0 = std::chrono::steady_clock::now();
  AnalysisInputs in = load_inputs(c.traces);
  auto t1 = std::chrono::steady_clock::now();
  AnalysisBundle b = analyze(in, o);
  auto t2 = std::chrono::steady_clock::now();
  if (timings) {
    err << "load " << std::chrono::duration<double>(t1 - t0).count() << "s, analyze "
        << std::chrono::duration<double>(t2 - t1).count() << "s\n";
  }
  if (c.format == "table") {
    std::string text = "requests " + std::to_string(b.requests.size()) + "\nflagged db ops " +
                       std::to_string(b.malicious_db_ops.size()) + "\nflagged file ops " +
                       std::to_string(b.malicious_file_ops.size()) + "\n";
    for (const auto& n : b.notifications) text += "notify: " + n.advisory + "\n";
    emit(text, c.out, out);
    return kExitOk;
  }
  emit(canonical_dump(b.to_json()) + "\n", c.out, out);
  return kExitOk;
}

RecoveryPlan make_plan(const AnalysisBundle& b, const Store& store, const Classification& classes) {
  RecoveryPlan plan;
  plan.db = plan_db_recovery(b.malicious_db_ops, store.db.snapshots, b.full_db_log);
  plan.fs = plan_fs_recovery(b.malicious_file_ops, store.tree, store.backups, store.write_log, store.baseline, classes);
  return plan;
}

int cmd_plan(const Common& c, const std::string& bundle_path, const std::string& store_dir, std::ostream& out) {
  AnalysisBundle b = AnalysisBundle::from_json(load_json(bundle_path));
  Store store = load_store(store_dir);
  RecoveryPlan plan = make_plan(b, store, classification_from(c));
  emit(canonical_dump(plan.to_json()) + "\n", c.out, out);
  return kExitOk;
}

DecisionProvider interactive_provider(std::istream& in, std::ostream& err) {
  return [&in, &err](const FsAction& a) {
    err << "interactive recovery for " << a.path << " (" << a.reason << ")\n";
    err << "  base version: " << (a.base_version_ts ? std::to_string(*a.base_version_ts) : "none") << "\n";
    for (const auto& h : a.history) {
      err << "  " << (h.malicious ? "[malicious] " : "            ") << h.record.ts << " " << h.record.pid << ":"
          << h.record.tid << " offset " << h.record.offset << " (" << h.record.data.size() << " bytes)\n";
    }
    while (true) {
      err << "[f]ull rollback, [s]elective replay, s[k]ip? " << std::flush;
      std::string line;
      if (!std::getline(in, line)) throw Error(ErrorCode::ProviderAbort, "no answer for " + a.path);
      if (line == "f" || line == "full_rollback") return Choice::full_rollback;
      if (line == "s" || line == "selective_replay") return Choice::selective_replay;
      if (line == "k" || line == "skip") return Choice::skip;
      err << "unrecognised answer '" << line << "'\n";
    }
  };
}

int cmd_recover(const Common& c, const std::string& bundle_path, const std::string& plan_path,
                const std::string& store_dir, bool interactive, const std::string& decisions, std::istream& in,
                std::ostream& out, std::ostream& err) {
  if (bundle_path.empty() && plan_path.empty()) throw Error(ErrorCode::InvalidArgument, "need --bundle or --plan");
  if (interactive && !decisions.empty()) throw Error(ErrorCode::InvalidArgument, "--interactive and --decisions conflict");
  Store store = load_store(store_dir);
  RecoveryPlan plan = plan_path.empty()
                          ? make_plan(AnalysisBundle::from_json(load_json(bundle_path)), store, classification_from(c))
                          : RecoveryPlan::from_json(load_json(plan_path));

  DecisionProvider provider;
  if (interactive) {
    provider = interactive_provider(in, err);
  } else if (!decisions.empty()) {
    provider = ScriptedDecisions::parse(read_file(decisions));
  } else {
    provider = [](const FsAction& a) -> Choice {
      throw Error(ErrorCode::ProviderAbort, a.path + " needs a decision; pass --interactive or --decisions");
    };
  }

  std::string db_before = store.db.live.hash();
  std::string fs_before = store.tree.hash();
  // Both halves are rebuilt on copies; the store is touched only once both
  // succeed.
  Store next = store;
  Diagnostics warnings;
  if (!plan.db.filtered.empty()) execute_db_recovery(plan.db, next.db, &warnings);
  FsExecution fx = execute_fs_recovery(plan.fs, next.tree, provider);
  save_live(next, store_dir);

  json actions = json::array();
  for (const auto& a : plan.fs.actions) {
    json j = {{"path", a.path}, {"kind", std::string(to_string(a.kind))}, {"reason", a.reason}};
    if (auto it = fx.choices.find(a.path); it != fx.choices.end()) j["choice"] = std::string(to_string(it->second));
    actions.push_back(std::move(j));
  }
  json choices = json::object();
  for (const auto& [path, choice] : fx.choices) choices[path] = std::string(to_string(choice));
  json report = {{"db_hash_before", db_before},
                 {"db_hash_after", next.db.live.hash()},
                 {"fs_hash_before", fs_before},
                 {"fs_hash_after", next.tree.hash()},
                 {"db_baseline_ts", plan.db.baseline.ts},
                 {"db_replayed", plan.db.filtered.empty() ? 0 : plan.db.replay.size()},
                 {"db_filtered", plan.db.filtered.size()},
                 {"fs_actions", actions},
                 {"choices", choices},
                 {"warnings", diagnostics_json(warnings)},
                 {"plan", plan.to_json()}};
  if (c.format == "table") {
    std::string text = "db: filtered " + std::to_string(plan.db.filtered.size()) + ", replayed " +
                       std::to_string(report["db_replayed"].get<std::size_t>()) + ", dependency warnings " +
                       std::to_string(warnings.size()) + "\n";
    for (const auto& a : actions) {
      text += "fs: " + a.at("kind").get<std::string>() + " " + a.at("path").get<std::string>() +
              (a.contains("choice") ? " (" + a.at("choice").get<std::string>() + ")" : "") + "\n";
    }
    emit(text, c.out, out);
  } else {
    emit(canonical_dump(report) + "\n", c.out, out);
  }
  return kExitOk;
}

int cmd_report(const Common& c, const std::string& bundle_path, const std::string& truth_path,
               const std::string& recovery_path, std::ostream& out) {
  if (truth_path.empty()) throw Error(ErrorCode::InvalidArgument, "--truth is required");
  GroundTruth truth = load_ground_truth(truth_path);
  AnalysisBundle b = AnalysisBundle::from_json(load_json(bundle_path));
  std::set<std::string> ours;
  for (const auto& [id, _] : b.requests) ours.insert(id);
  if (ours != std::set<std::string>(truth.request_ids.begin(), truth.request_ids.end())) {
    throw Error(ErrorCode::UniverseMismatch, "bundle covers " + std::to_string(ours.size()) +
                                                 " requests, ground truth " + std::to_string(truth.request_ids.size()));
  }
  MetricsReport r;
  r.requests = truth.request_ids.size();
  r.db_ops = truth.db_log.size();
  r.file_ops = truth.file_log.size();
  r.db = score_attribution(b.db_op_sets(), truth.db_ops());
  r.file = score_attribution(b.file_op_sets(), truth.file_ops());
  if (!recovery_path.empty()) {
    json rec = load_json(recovery_path);
    RecoveryPlan plan = RecoveryPlan::from_json(rec.at("plan"));
    std::map<std::string, Choice> choices;
    for (const auto& [path, choice] : rec.at("choices").items()) choices[path] = choice_from_string(choice.get<std::string>());
    r.recovery_accuracy =
        compute_recovery_accuracy(restored_operations(b.attributed(), plan.db, plan.fs, choices), truth.expected_restored());
  }
  emit(c.format == "table" ? r.to_table() : canonical_dump(r.to_json()) + "\n", c.out, out);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Request-level attribution and selective recovery for web application intrusions"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* sub, bool traces) {
    sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "table"}));
    sub->add_option("--db-endpoints", c.db_endpoints, "DB server endpoints, ip:port[,...]");
    sub->add_option("--classify", c.classify, "Directory classification JSON");
    sub->add_option("--out", c.out, "Output path");
    if (traces) {
      sub->add_option("--traces", c.traces, "Scenario or traces directory")->required();
      sub->add_option("--server-model", c.server_model, "thread_per_request or coroutine");
      sub->add_option("--db-source", c.db_source, "syscall or applog");
    }
  };

  std::string config_path, request, malicious, bundle, plan, store, decisions, truth, recovery;
  std::optional<std::uint64_t> seed;
  bool interactive = false;
  bool timings = false;

  auto* sim = app.add_subcommand("simulate", "Generate a labelled scenario");
  common(sim, false);
  sim->add_option("--config", config_path, "Scenario config JSON")->required();
  sim->add_option("--seed", seed, "Override the config seed");

  auto* part = app.add_subcommand("partition", "Split a web trace into request units");
  common(part, true);

  auto* trace = app.add_subcommand("trace", "Provenance graph of one request");
  common(trace, true);
  trace->add_option("--request", request, "Request id")->required();

  auto* attr = app.add_subcommand("attribute", "Per-request DB and file operations");
  common(attr, true);
  attr->add_option("--request", request, "Restrict to one request");

  auto* ana = app.add_subcommand("analyze", "Build the analysis bundle for flagged requests");
  common(ana, true);
  ana->add_option("--malicious", malicious, "Flagged request ids, comma separated");
  ana->add_flag("--timings", timings, "Print stage timings to stderr");

  auto* pl = app.add_subcommand("plan", "Compute the recovery plan without touching the store");
  common(pl, false);
  pl->add_option("--bundle", bundle, "Analysis bundle")->required();
  pl->add_option("--store", store, "Store directory")->required();

  auto* rec = app.add_subcommand("recover", "Execute recovery against the store");
  common(rec, false);
  rec->add_option("--bundle", bundle, "Analysis bundle");
  rec->add_option("--plan", plan, "Precomputed plan");
  rec->add_option("--store", store, "Store directory")->required();
  rec->add_flag("--interactive", interactive, "Prompt for each interactive action");
  rec->add_option("--decisions", decisions, "Scripted decisions, JSONL {path, choice}");

  auto* rep = app.add_subcommand("report", "Score a bundle against ground truth");
  common(rep, false);
  rep->add_option("--bundle", bundle, "Analysis bundle")->required();
  rep->add_option("--truth", truth, "ground_truth.json");
  rep->add_option("--recovery", recovery, "Recovery report from the recover command");

  std::vector<std::string> argv_store = {"rewind"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(config_path, seed, c, out);
    if (*part) return cmd_partition(c, out);
    if (*trace) return cmd_trace(c, request, out);
    if (*attr) return cmd_attribute(c, request, out);
    if (*ana) return cmd_analyze(c, malicious, out, err, timings);
    if (*pl) return cmd_plan(c, bundle, store, out);
    if (*rec) return cmd_recover(c, bundle, plan, store, interactive, decisions, in, out, err);
    if (*rep) return cmd_report(c, bundle, truth, recovery, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (e.code() == ErrorCode::NoCleanSnapshot) {
      err << "hint: every snapshot postdates the first malicious operation; take snapshots more often or restore "
             "from an older archive\n";
    }
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace rwd
