#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "rewind/backup.hpp"
#include "rewind/db_attribution.hpp"
#include "rewind/db_state.hpp"
#include "rewind/file_tree.hpp"
#include "rewind/metrics.hpp"
#include "rewind/partition.hpp"
#include "rewind/pipeline.hpp"
#include "rewind/provenance.hpp"
#include "rewind/recovery.hpp"
#include "rewind/simulator.hpp"
#include "rewind/trace.hpp"

namespace rwd::testkit {

// Removed with its contents on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Builds hand-written logs; timestamps advance by one unless set with at().
class TraceBuilder {
 public:
  explicit TraceBuilder(std::string host = "web") : host_(std::move(host)) {}

  TraceBuilder& at(Nanos ts) {
    clock_ = ts - 1;
    return *this;
  }
  const Event& sys(int pid, int tid, Syscall name, SyscallArgs args = {});
  const Event& mark(int pid, int tid, const std::string& request, Marker marker);
  const EventLog& log() const { return log_; }

 private:
  std::string host_;
  Nanos clock_ = 0;
  std::uint64_t seq_ = 0;
  EventLog log_;
};

// Seeded generator for the hand-rolled property suites.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int between(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::int64_t between64(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  // Arbitrary bytes, including NUL and newlines.
  std::string bytes(std::size_t max_len);
  std::string word(std::size_t len);
  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(between(0, static_cast<int>(items.size()) - 1))];
  }

 private:
  std::mt19937_64 rng_;
};

// Keeps the first failure; later failures only bump the count.
struct Check {
  bool ok = true;
  std::size_t failures = 0;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
    ++failures;
  }
  void expect(bool cond, const std::string& why) {
    if (!cond) fail(why);
  }
  void merge(const Check& other) {
    if (!other.ok) {
      if (ok) detail = other.detail;
      ok = false;
      failures += other.failures;
    }
  }
};

ScenarioConfig make_config(std::uint64_t seed, int concurrency, int requests,
                           ServerModel model = ServerModel::thread_per_request, int pool = 8);

AnalysisInputs inputs_for(const Scenario& s);
AnalysisOptions options_for(const Scenario& s, const std::set<std::string>& malicious);
AnalysisBundle run_analysis(const Scenario& s, const std::set<std::string>& malicious);

struct Scores {
  Score db;
  Score file;
};

Scores score(const AnalysisBundle& b, const GroundTruth& truth);

struct RecoveryRun {
  RecoveryPlan plan;
  DBState db;
  FileTree tree;
  std::map<std::string, Choice> choices;
  Diagnostics warnings;
  double accuracy = 0.0;
};

// Plans and executes against in-memory copies of the scenario's store.
RecoveryRun run_recovery(const Scenario& s, const AnalysisBundle& b, const DecisionProvider& provider);
// Same, starting from the given live state instead of the scenario's.
RecoveryRun run_recovery(const Scenario& s, const AnalysisBundle& b, const DecisionProvider& provider,
                         const DBState* live_db, const FileTree* live_tree);
DecisionProvider always(Choice choice);

// True when the exported graph has request -> process(exes[0]) -> ... ->
// process(exes.back()) -> WRITE -> file(path), each hop a SERVE or
// CREATE_PROCESS edge.
bool has_chain(const json& graph_lines, const std::vector<std::string>& exes, const std::string& path);

// Independent fd-table interpreter; one entry per syscall event.
std::map<EventRef, FdResolution> fd_oracle(const EventLog& log);

// Reference DB interpreter used by the property suites.
using NaiveDb = std::map<std::string, std::map<std::string, json>>;
void naive_apply(NaiveDb& db, const std::string& statement);
DBState to_state(const NaiveDb& db);

// Property checks shared by the unit suite and the acceptance binary.
Check check_roundtrip(const Scenario& s);
Check check_fd_resolution(const EventLog& log);
Check check_partition(const Scenario& s);
Check check_provenance(const Scenario& s, std::uint64_t seed);
Check check_anchor_boundaries(std::uint64_t seed);
Check check_extraction_paths(std::uint64_t seed);
Check check_db_snapshots(std::uint64_t seed);
Check check_backups(std::uint64_t seed);
Check check_file_ops(std::uint64_t seed);
Check check_recovery_idempotent(const Scenario& s);
Check check_filter_monotone(const Scenario& s, std::uint64_t seed);
Check check_determinism(const ScenarioConfig& config);
Check check_ground_truth(const Scenario& s);

}  // namespace rwd::testkit
