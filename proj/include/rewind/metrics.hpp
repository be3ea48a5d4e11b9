#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rewind/codec.hpp"
#include "rewind/recovery.hpp"

namespace rwd {

struct Score {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  // An empty denominator counts as perfect: nothing claimed, nothing missed.
  double precision() const { return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    double p = precision();
    double r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  json to_json() const;
};

// Scores (request, operation) pairs.
Score score_attribution(const OperationSets& predicted, const OperationSets& truth);

struct MetricsReport {
  std::size_t requests = 0;
  std::size_t db_ops = 0;
  std::size_t file_ops = 0;
  Score db;
  Score file;
  std::optional<double> recovery_accuracy;
  std::map<std::string, double> stage_seconds;

  json to_json() const;
  std::string to_table() const;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares; throws InvalidArgument for fewer than two points.
LinearFit fit_linear(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace rwd
