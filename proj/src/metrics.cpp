#include "rewind/metrics.hpp"

#include <cstdio>

namespace rwd {

json Score::to_json() const {
  return {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"precision", precision()}, {"recall", recall()}, {"f1", f1()}};
}

Score score_attribution(const OperationSets& predicted, const OperationSets& truth) {
  Score s;
  static const std::set<std::string> kEmpty;
  auto lookup = [](const OperationSets& sets, const std::string& id) -> const std::set<std::string>& {
    auto it = sets.find(id);
    return it == sets.end() ? kEmpty : it->second;
  };
  std::set<std::string> ids;
  for (const auto& [id, _] : predicted) ids.insert(id);
  for (const auto& [id, _] : truth) ids.insert(id);
  for (const auto& id : ids) {
    const auto& p = lookup(predicted, id);
    const auto& t = lookup(truth, id);
    for (const auto& op : p) (t.contains(op) ? s.tp : s.fp)++;
    for (const auto& op : t) {
      if (!p.contains(op)) ++s.fn;
    }
  }
  return s;
}

json MetricsReport::to_json() const {
  json j = {{"requests", requests},
            {"db_ops", db_ops},
            {"file_ops", file_ops},
            {"db_attribution", db.to_json()},
            {"file_attribution", file.to_json()},
            {"stage_seconds", stage_seconds}};
  j["recovery_accuracy"] = recovery_accuracy ? json(*recovery_accuracy) : json(nullptr);
  return j;
}

std::string MetricsReport::to_table() const {
  auto row = [](const char* name, const Score& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %9.4f %9.4f %9.4f %7zu %7zu %7zu\n", name, s.precision(), s.recall(), s.f1(),
                  s.tp, s.fp, s.fn);
    return std::string(buf);
  };
  std::string out = "requests " + std::to_string(requests) + ", db ops " + std::to_string(db_ops) + ", file ops " +
                    std::to_string(file_ops) + "\n";
  out += "target   precision    recall        f1      tp      fp      fn\n";
  out += row("db", db);
  out += row("file", file);
  if (recovery_accuracy) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "recovery accuracy %.4f\n", *recovery_accuracy);
    out += buf;
  }
  for (const auto& [stage, secs] : stage_seconds) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-10s %.3fs\n", stage.c_str(), secs);
    out += buf;
  }
  return out;
}

LinearFit fit_linear(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw Error(ErrorCode::InvalidArgument, "need two or more paired points");
  double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorCode::InvalidArgument, "x values are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

}  // namespace rwd
