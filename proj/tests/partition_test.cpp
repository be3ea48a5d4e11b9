#include <doctest.h>

#include "support.hpp"

using namespace rwd;
using testkit::TraceBuilder;

namespace {

std::vector<std::uint64_t> seqs(const RequestUnit& u) {
  std::vector<std::uint64_t> out;
  for (const auto& ev : u.events) out.push_back(ev.seq);
  return out;
}

std::string code_of(const EventLog& log, ServerModel model) {
  try {
    partition(log, model);
  } catch (const Error& e) {
    return std::string(to_string(e.code()));
  }
  return "none";
}

}  // namespace

TEST_SUITE("partition") {
  TEST_CASE("sequential requests on one thread") {
    TraceBuilder t;
    t.mark(1, 1, "r1", Marker::begin);
    auto w1 = t.sys(1, 1, Syscall::read, {.fd = 3}).seq;
    auto w2 = t.sys(1, 1, Syscall::write, {.fd = 3, .data = "ok"}).seq;
    t.mark(1, 1, "r1", Marker::end);
    auto idle = t.sys(1, 1, Syscall::read, {.fd = 4}).seq;
    t.mark(1, 1, "r2", Marker::begin);
    auto w3 = t.sys(1, 1, Syscall::read, {.fd = 5}).seq;
    t.mark(1, 1, "r2", Marker::end);
    PartitionResult p = partition(t.log(), ServerModel::thread_per_request);
    CHECK(seqs(unit_for(p, "r1")) == std::vector<std::uint64_t>{w1, w2});
    CHECK(seqs(unit_for(p, "r2")) == std::vector<std::uint64_t>{w3});
    CHECK(seqs(p.units.at(std::string(kBackgroundUnit))) == std::vector<std::uint64_t>{idle});
    CHECK(p.request_ids() == std::vector<std::string>{"r1", "r2"});
    CHECK(unit_for(p, "r1").begin_ts == 1);
    CHECK(unit_for(p, "r1").end_ts == 4);
  }

  TEST_CASE("coroutines hand requests between loop threads") {
    TraceBuilder t;
    t.mark(1, 1, "r1", Marker::begin);
    auto a = t.sys(1, 1, Syscall::read, {.fd = 3}).seq;
    t.mark(1, 1, "r1", Marker::switch_out);
    auto gap = t.sys(1, 1, Syscall::read, {.fd = 9}).seq;
    t.mark(1, 2, "r2", Marker::begin);
    auto c = t.sys(1, 2, Syscall::read, {.fd = 4}).seq;
    t.mark(1, 2, "r2", Marker::switch_out);
    t.mark(1, 1, "r2", Marker::switch_in);
    auto b = t.sys(1, 1, Syscall::write, {.fd = 4, .data = "x"}).seq;
    t.mark(1, 1, "r2", Marker::end);
    t.mark(1, 2, "r1", Marker::switch_in);
    auto d = t.sys(1, 2, Syscall::write, {.fd = 3, .data = "y"}).seq;
    t.mark(1, 2, "r1", Marker::end);
    PartitionResult p = partition(t.log(), ServerModel::coroutine);
    CHECK(seqs(unit_for(p, "r1")) == std::vector<std::uint64_t>{a, d});
    CHECK(seqs(unit_for(p, "r2")) == std::vector<std::uint64_t>{c, b});
    CHECK(seqs(p.units.at(std::string(kBackgroundUnit))) == std::vector<std::uint64_t>{gap});
    CHECK(unit_for(p, "r1").segments.size() == 2);
    CHECK(p.diagnostics.empty());
  }

  TEST_CASE("thread mode closes an unterminated request at the next begin") {
    TraceBuilder t;
    t.mark(1, 1, "r1", Marker::begin);
    auto w = t.sys(1, 1, Syscall::read, {.fd = 3}).seq;
    t.mark(1, 1, "r2", Marker::begin);
    auto x = t.sys(1, 1, Syscall::read, {.fd = 3}).seq;
    t.mark(1, 1, "r2", Marker::end);
    PartitionResult p = partition(t.log(), ServerModel::thread_per_request);
    CHECK(seqs(unit_for(p, "r1")) == std::vector<std::uint64_t>{w});
    CHECK(seqs(unit_for(p, "r2")) == std::vector<std::uint64_t>{x});
    CHECK_FALSE(unit_for(p, "r1").unclosed);
    REQUIRE(p.diagnostics.size() == 1);
    CHECK(p.diagnostics[0].kind == "ImplicitEnd");
    CHECK(code_of(t.log(), ServerModel::coroutine) == "DanglingSwitch");
  }

  TEST_CASE("inconsistent delimiters fail loudly") {
    TraceBuilder a;
    a.mark(1, 1, "r1", Marker::switch_in);
    CHECK(code_of(a.log(), ServerModel::coroutine) == "DanglingSwitch");

    TraceBuilder b;
    b.mark(1, 1, "r1", Marker::begin);
    b.mark(1, 1, "r1", Marker::end);
    b.mark(1, 1, "r1", Marker::begin);
    CHECK(code_of(b.log(), ServerModel::thread_per_request) == "DanglingSwitch");

    TraceBuilder c;
    c.mark(1, 1, "r1", Marker::begin);
    c.mark(1, 2, "r1", Marker::end);
    CHECK(code_of(c.log(), ServerModel::coroutine) == "DanglingSwitch");

    TraceBuilder d;
    d.mark(1, 1, std::string(kBackgroundUnit), Marker::begin);
    CHECK(code_of(d.log(), ServerModel::thread_per_request) == "DanglingSwitch");
  }

  TEST_CASE("unit lookup") {
    TraceBuilder t;
    t.mark(1, 1, "r1", Marker::begin);
    t.sys(1, 1, Syscall::read, {.fd = 3});
    t.sys(1, 1, Syscall::read, {.fd = 3});
    PartitionResult p = partition(t.log(), ServerModel::thread_per_request);
    const RequestUnit& u = unit_for(p, "r1");
    CHECK(u.unclosed);
    CHECK(u.end_ts == 3);
    CHECK(u.segments.at(0).end_ts == 3);
    CHECK_THROWS_WITH_AS(unit_for(p, "nope"), doctest::Contains("UnknownRequest"), Error);
  }

  TEST_CASE("truncated simulator trace flags exactly the cut requests") {
    Scenario s = simulate(testkit::make_config(5, 10, 60));
    EventLog cut = s.web;
    cut.events.resize(cut.events.size() / 2);
    std::set<std::string> begun, ended;
    for (const auto& ev : cut.events) {
      if (!ev.is_delimiter()) continue;
      if (ev.delimiter().marker == Marker::begin) begun.insert(ev.delimiter().request_id);
      if (ev.delimiter().marker == Marker::end) ended.insert(ev.delimiter().request_id);
    }
    PartitionResult p = partition(cut, ServerModel::thread_per_request);
    std::set<std::string> unclosed;
    for (const auto& id : p.request_ids()) {
      if (unit_for(p, id).unclosed) unclosed.insert(id);
    }
    std::set<std::string> expected;
    for (const auto& id : begun) {
      if (!ended.contains(id)) expected.insert(id);
    }
    CHECK_FALSE(expected.empty());
    CHECK(unclosed == expected);
  }

  TEST_CASE("partition equals ground-truth labels") {
    struct Case {
      ServerModel model;
      int concurrency;
      int pool;
    };
    for (const Case& k : {Case{ServerModel::thread_per_request, 1, 4}, Case{ServerModel::thread_per_request, 50, 16},
                          Case{ServerModel::thread_per_request, 150, 8}, Case{ServerModel::coroutine, 1, 4},
                          Case{ServerModel::coroutine, 50, 4}, Case{ServerModel::coroutine, 150, 16}}) {
      CAPTURE(k.concurrency);
      ScenarioConfig cfg = testkit::make_config(21 + k.concurrency, k.concurrency, 200, k.model, k.pool);
      cfg.attacks = {{AttackKind::rce_webshell, 20}, {AttackKind::multi_stage, 60}};
      cfg.multi_conn_prob = 0.1;
      auto c = testkit::check_partition(simulate(cfg));
      CHECK_MESSAGE(c.ok, c.detail);
    }
  }
}
