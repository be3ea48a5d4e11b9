#include "rewind/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "rewind/json_io.hpp"

namespace rwd {

std::string_view to_string(DbSource source) { return source == DbSource::applog ? "applog" : "syscall"; }

DbSource db_source_from_string(std::string_view text) {
  if (text == "syscall") return DbSource::syscall;
  if (text == "applog") return DbSource::applog;
  throw Error(ErrorCode::InvalidArgument, "unknown db source '" + std::string(text) + "'");
}

json graph_to_json(const ProvenanceGraph& graph) {
  json lines = json::array();
  std::istringstream in(graph.to_jsonl());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(json::parse(line));
  }
  return lines;
}

namespace {

std::string advisory_for(const std::string& request, const std::vector<ExternalInteraction>& xs) {
  std::string text = "Request " + request + " caused outbound traffic to";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    text += (i == 0 ? " " : ", ") + xs[i].tuple.destination().label() + " (" + std::to_string(xs[i].byte_count) +
            " bytes)";
  }
  text += ". Local recovery cannot undo these effects; contact the operators of those services.";
  return text;
}

}  // namespace

AnalysisBundle analyze(const AnalysisInputs& inputs, const AnalysisOptions& options) {
  AnalysisBundle bundle;
  bundle.options = options;

  EventLog web = resolve_fd_tuples(inputs.web);
  EventLog db = resolve_fd_tuples(inputs.db);
  bundle.diagnostics = web.diagnostics;
  bundle.diagnostics.insert(bundle.diagnostics.end(), db.diagnostics.begin(), db.diagnostics.end());

  PartitionResult parts = partition(web, options.model);
  bundle.diagnostics.insert(bundle.diagnostics.end(), parts.diagnostics.begin(), parts.diagnostics.end());
  for (const auto& id : options.malicious) unit_for(parts, id);

  ProvenanceBuilder builder(web);
  std::optional<DbAttributor> attributor;
  if (options.db_source == DbSource::syscall) {
    attributor.emplace(db, options.statement_log_path);
    bundle.full_db_log = attributor->all_ops();
  } else {
    if (!inputs.app_log) throw Error(ErrorCode::InvalidArgument, "applog source selected but no app log supplied");
    bundle.full_db_log = full_log_from_applog(*inputs.app_log);
  }

  for (const std::string& id : parts.request_ids()) {
    const RequestUnit& unit = parts.units.at(id);
    RequestAttribution& attr = bundle.requests[id];
    attr.unclosed = unit.unclosed;

    ProvenanceGraph graph = builder.build(unit);
    attr.file_ops = collect_file_ops(graph);
    attr.external = detect_external(graph, options.db_endpoints);

    attr.anchors = extract_anchors(unit, options.db_endpoints, options.max_clock_skew);
    std::set<std::tuple<Nanos, std::string, std::string>> seen;
    for (const Anchor& anchor : attr.anchors) {
      std::vector<DBOperation> ops;
      if (attributor) {
        auto worker = attributor->worker_for(anchor.tuple);
        if (!worker) {
          bundle.diagnostics.push_back({"NoWorkerFound", id + " " + anchor.tuple.label()});
          continue;
        }
        ops = attributor->ops_in_window(*worker, anchor.window);
        for (auto& op : ops) op.source_anchor = anchor;
      } else {
        ops = extract_ops_applog(*inputs.app_log, anchor);
      }
      for (auto& op : ops) {
        if (seen.insert(op.key()).second) attr.db_ops.push_back(std::move(op));
      }
    }
    std::stable_sort(attr.db_ops.begin(), attr.db_ops.end(),
                     [](const DBOperation& a, const DBOperation& b) { return a.ts < b.ts; });

    if (options.malicious.contains(id)) {
      bundle.malicious_db_ops.insert(bundle.malicious_db_ops.end(), attr.db_ops.begin(), attr.db_ops.end());
      bundle.malicious_file_ops.insert(bundle.malicious_file_ops.end(), attr.file_ops.begin(), attr.file_ops.end());
      bundle.graphs[id] = graph_to_json(graph);
      if (!attr.external.empty()) bundle.notifications.push_back({id, attr.external, advisory_for(id, attr.external)});
    }
  }
  std::stable_sort(bundle.malicious_db_ops.begin(), bundle.malicious_db_ops.end(),
                   [](const DBOperation& a, const DBOperation& b) { return a.ts < b.ts; });
  std::stable_sort(bundle.malicious_file_ops.begin(), bundle.malicious_file_ops.end(),
                   [](const FileOperation& a, const FileOperation& b) {
                     return std::tie(a.ts, a.source) < std::tie(b.ts, b.source);
                   });
  return bundle;
}

std::map<std::string, RequestOps> AnalysisBundle::attributed() const {
  std::map<std::string, RequestOps> out;
  for (const auto& [id, attr] : requests) out[id] = {attr.db_ops, attr.file_ops};
  return out;
}

OperationSets AnalysisBundle::db_op_sets() const {
  OperationSets out;
  for (const auto& [id, attr] : requests) {
    auto& set = out[id];
    for (const auto& op : attr.db_ops) set.insert(op.id());
  }
  return out;
}

OperationSets AnalysisBundle::file_op_sets() const {
  OperationSets out;
  for (const auto& [id, attr] : requests) {
    auto& set = out[id];
    for (const auto& op : attr.file_ops) set.insert(op.id());
  }
  return out;
}

namespace {

template <typename T>
json array_of(const std::vector<T>& items) {
  json arr = json::array();
  for (const auto& item : items) arr.push_back(to_json(item));
  return arr;
}

}  // namespace

json AnalysisBundle::to_json() const {
  json endpoints = json::array();
  for (const auto& e : options.db_endpoints) endpoints.push_back(e.label());
  json requests_j = json::object();
  for (const auto& [id, attr] : requests) {
    requests_j[id] = {{"anchors", array_of(attr.anchors)},
                      {"db_ops", array_of(attr.db_ops)},
                      {"file_ops", array_of(attr.file_ops)},
                      {"external", array_of(attr.external)},
                      {"unclosed", attr.unclosed}};
  }
  json notes = json::array();
  for (const auto& n : notifications) {
    notes.push_back({{"request_id", n.request_id}, {"interactions", array_of(n.interactions)}, {"advisory", n.advisory}});
  }
  json diags = json::array();
  for (const auto& d : diagnostics) diags.push_back({{"kind", d.kind}, {"message", d.message}});
  return {{"options",
           {{"server_model", std::string(to_string(options.model))},
            {"db_source", std::string(to_string(options.db_source))},
            {"db_endpoints", endpoints},
            {"max_clock_skew_ns", options.max_clock_skew},
            {"statement_log", options.statement_log_path},
            {"malicious", options.malicious}}},
          {"requests", requests_j},
          {"malicious_db_ops", array_of(malicious_db_ops)},
          {"malicious_file_ops", array_of(malicious_file_ops)},
          {"graphs", graphs},
          {"notifications", notes},
          {"full_db_log", array_of(full_db_log)},
          {"diagnostics", diags}};
}

AnalysisBundle AnalysisBundle::from_json(const json& j) {
  AnalysisBundle b;
  try {
    const json& o = j.at("options");
    b.options.model = server_model_from_string(o.at("server_model").get<std::string>());
    b.options.db_source = db_source_from_string(o.at("db_source").get<std::string>());
    for (const auto& e : o.at("db_endpoints")) b.options.db_endpoints.insert(parse_endpoint(e.get<std::string>()));
    b.options.max_clock_skew = o.at("max_clock_skew_ns").get<Nanos>();
    b.options.statement_log_path = o.at("statement_log").get<std::string>();
    b.options.malicious = o.at("malicious").get<std::set<std::string>>();
    for (const auto& [id, r] : j.at("requests").items()) {
      RequestAttribution& attr = b.requests[id];
      for (const auto& a : r.at("anchors")) attr.anchors.push_back(anchor_from_json(a));
      for (const auto& op : r.at("db_ops")) attr.db_ops.push_back(db_operation_from_json(op));
      for (const auto& op : r.at("file_ops")) attr.file_ops.push_back(file_operation_from_json(op));
      for (const auto& x : r.at("external")) attr.external.push_back(external_interaction_from_json(x));
      attr.unclosed = r.at("unclosed").get<bool>();
    }
    for (const auto& op : j.at("malicious_db_ops")) b.malicious_db_ops.push_back(db_operation_from_json(op));
    for (const auto& op : j.at("malicious_file_ops")) b.malicious_file_ops.push_back(file_operation_from_json(op));
    for (const auto& [id, g] : j.at("graphs").items()) b.graphs[id] = g;
    for (const auto& n : j.at("notifications")) {
      Notification note;
      note.request_id = n.at("request_id").get<std::string>();
      for (const auto& x : n.at("interactions")) note.interactions.push_back(external_interaction_from_json(x));
      note.advisory = n.at("advisory").get<std::string>();
      b.notifications.push_back(std::move(note));
    }
    for (const auto& op : j.at("full_db_log")) b.full_db_log.push_back(db_operation_from_json(op));
    for (const auto& d : j.at("diagnostics")) {
      b.diagnostics.push_back({d.at("kind").get<std::string>(), d.at("message").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("analysis bundle: ") + e.what());
  }
  return b;
}

}  // namespace rwd
