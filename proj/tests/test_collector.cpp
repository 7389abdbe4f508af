// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "support.hpp"

#include <deque>
#include <sstream>

#include "cloudbus/collector.hpp"
#include "cloudbus/error.hpp"

using namespace cloudbus;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no cloudbus::Error thrown");
  return ErrorCode::kConfigError;
}

ProbeDriver fixed_latency(double ms) {
  return [ms](const DriverContext&) { return DriverReply{.outcome = ProbeOutcome::kUp, .latency_ms = ms}; };
}

ProbeSpec spec(const std::string& id, std::int64_t period, std::int64_t deadline, const std::string& driver = "d",
               const std::string& target = "") {
  return ProbeSpec(id, {target.empty() ? "t-" + id : target, ComponentKind::kVm}, driver, period, deadline);
}

// Unthrottled collector so timing tests see every release.
Collector make_collector(double latency_ms, const std::vector<ProbeSpec>& specs) {
  Collector c;
  c.register_driver("d", fixed_latency(latency_ms));
  for (const auto& s : specs) c.set_budget({s.target, 1e6, 1'000'000});
  return c;
}

// Serial-executor timeline for identical jobs released together: the k-th
// job in EDF order (0-based) finishes at ceil((k + 1) / workers) * latency.
std::int64_t synchronized_misses(std::vector<std::int64_t> deadlines, int workers, std::int64_t latency) {
  std::sort(deadlines.begin(), deadlines.end());
  std::int64_t missed = 0;
  for (std::size_t k = 0; k < deadlines.size(); ++k) {
    const std::int64_t finish = static_cast<std::int64_t>(k / workers + 1) * latency;
    missed += finish > deadlines[k] ? 1 : 0;
  }
  return missed;
}

}  // namespace

TEST_CASE("driver registration") {
  Collector c;
  c.register_driver("sim.ping", fixed_latency(0));
  CHECK(c.has_driver("sim.ping"));
  CHECK(code_of([&] { c.register_driver("sim.ping", fixed_latency(0)); }) == ErrorCode::kDuplicateDriver);

  const auto sched = c.build_schedule({spec("p", 1000, 1000, "sim.ping")}, 0);
  const auto cycle = c.run_cycle(sched, 1, 1);
  CHECK(cycle.report.fired == 1);
  REQUIRE(cycle.events.size() == 1);
  CHECK(cycle.events[0].source_kind == "probe.sim.ping");

  CHECK(code_of([&] { c.build_schedule({spec("q", 1000, 1000, "nope")}, 0); }) == ErrorCode::kUnknownDriver);
}

TEST_CASE("probe spec validation") {
  CHECK(code_of([] { spec("p", 100, 200); }) == ErrorCode::kInvalidSpec);
  CHECK(code_of([] { spec("p", 100, 0); }) == ErrorCode::kInvalidSpec);
  CHECK(code_of([] { spec("p", 0, 0); }) == ErrorCode::kInvalidSpec);
  CHECK(code_of([] { spec("", 100, 100); }) == ErrorCode::kInvalidSpec);
  CHECK(code_of([] { ProbeSpec("p", {"a|b", ComponentKind::kVm}, "d", 100, 100); }) == ErrorCode::kInvalidSpec);
  CHECK_NOTHROW(spec("p", 100, 100));

  Collector c;
  c.register_driver("d", fixed_latency(0));
  CHECK(code_of([&] { c.build_schedule({spec("p", 100, 100), spec("p", 200, 100)}, 0); }) == ErrorCode::kInvalidSpec);
}

TEST_CASE("authorize_probe scopes") {
  const ComponentId vm3{"vm-3", ComponentKind::kVm};
  CHECK(authorize_probe(CredentialRecord("c", "x", {ComponentKind::kVm}), vm3));
  CHECK_FALSE(authorize_probe(CredentialRecord("c", "x", {ComponentKind::kPhysicalHost}), vm3));
  CHECK(authorize_probe(CredentialRecord("c", "x", {}, {"vm-3"}), vm3));
  CHECK_FALSE(authorize_probe(CredentialRecord("c", "x", {}, {"vm-4"}), vm3));
}

TEST_CASE("credential scoping at schedule time") {
  Collector c;
  c.register_driver("d", fixed_latency(0));
  c.add_credential(CredentialRecord("hostcred", testing::secrets()[0], {ComponentKind::kPhysicalHost}));
  ProbeSpec p("p", {"vm-3", ComponentKind::kVm}, "d", 100, 100, "hostcred");
  CHECK(code_of([&] { c.build_schedule({p}, 0); }) == ErrorCode::kUnauthorizedProbe);
  ProbeSpec q("q", {"vm-3", ComponentKind::kVm}, "d", 100, 100, "missing");
  CHECK(code_of([&] { c.build_schedule({q}, 0); }) == ErrorCode::kUnauthorizedProbe);
  ProbeSpec ok("r", {"host-1", ComponentKind::kPhysicalHost}, "d", 100, 100, "hostcred");
  CHECK(c.build_schedule({ok}, 0).credentials.at(0).has_value());
  try {
    c.build_schedule({p}, 0);
  } catch (const Error& e) {
    CHECK_FALSE(testing::contains_secret(e.what()));
  }
}

TEST_CASE("credential rendering hides the secret") {
  const CredentialRecord cred("db", testing::secrets()[1], {ComponentKind::kService}, {"db-1"});
  CHECK(cred.reveal() == testing::secrets()[1]);
  CHECK(cred.display().find("***") != std::string::npos);
  CHECK_FALSE(testing::contains_secret(cred.display()));
  std::ostringstream os;
  os << cred;
  CHECK_FALSE(testing::contains_secret(os.str()));
}

TEST_CASE("drivers leaking their credential are scrubbed") {
  Collector c;
  c.register_driver("echo", [](const DriverContext& ctx) {
    DriverReply r;
    r.message = "login with " + ctx.credential->reveal() + " ok";
    r.metrics["x_" + ctx.credential->reveal()] = 1.0;
    return r;
  });
  c.register_driver("throws", [](const DriverContext& ctx) -> DriverReply {
    throw std::runtime_error("auth failed for secret " + ctx.credential->reveal());
  });
  c.add_credential(CredentialRecord("cred", testing::secrets()[2], {ComponentKind::kVm}));
  const auto sched = c.build_schedule({ProbeSpec("a", {"vm-1", ComponentKind::kVm}, "echo", 1000, 1000, "cred"),
                                       ProbeSpec("b", {"vm-2", ComponentKind::kVm}, "throws", 1000, 1000, "cred")},
                                      0);
  const auto cycle = c.run_cycle(sched, 2, 5000);
  CHECK(cycle.report.fired == 10);
  for (const auto& raw : cycle.events) {
    CHECK_FALSE(testing::contains_secret(payload_to_json(raw.payload).dump()));
    const auto ev = normalize(raw, NormalizationRuleset::builtin());
    CHECK_FALSE(testing::contains_secret(encode_ndjson(ev)));
  }
  for (const auto& r : cycle.results) {
    if (r.probe_id == "b") CHECK(r.outcome == ProbeOutcome::kProbeError);
    CHECK(r.message.find("***") != std::string::npos);
  }
}

TEST_CASE("EDF dispatch order") {
  Collector c = make_collector(10, {});
  const auto sched = c.build_schedule({spec("slow", 1000, 200), spec("fast", 1000, 50)}, 0);
  CHECK(sched.dispatch_order(0) == std::vector<std::string>{"fast", "slow"});
  const auto tie = c.build_schedule({spec("b", 1000, 100), spec("a", 1000, 100)}, 0);
  CHECK(tie.dispatch_order(0) == std::vector<std::string>{"a", "b"});

  const auto cycle = c.run_cycle(sched, 1, 1);
  REQUIRE(cycle.results.size() == 2);
  const auto fast = std::find_if(cycle.results.begin(), cycle.results.end(), [](auto& r) { return r.probe_id == "fast"; });
  CHECK(fast->started_at == 0);
  CHECK(fast->finished_at == 10);
}

TEST_CASE("due times over one second") {
  Collector c = make_collector(0, {});
  const auto sched = c.build_schedule({spec("p", 100, 100)}, 0);
  // Due times 0, 100, ..., 900 lie in [0, 1000).
  std::vector<TimestampMs> want;
  for (TimestampMs t = 0; t < 1000; t += 100) want.push_back(t);
  CHECK(sched.due_times(0, 1000) == want);
  const auto s2 = make_collector(0, sched.probes).build_schedule({spec("p", 100, 100)}, 0);
  const auto cycle = make_collector(0, sched.probes).run_cycle(s2, 1, 1000);
  CHECK(cycle.report.fired == 10);
}

TEST_CASE("run_cycle deadline examples") {
  SUBCASE("single zero-latency probe") {
    Collector c = make_collector(0, {});
    const auto cycle = c.run_cycle(c.build_schedule({spec("p", 100, 100)}, 0), 1, 1000);
    CHECK(cycle.report.missed == 0);
  }
  std::vector<ProbeSpec> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(spec("p" + std::to_string(i), 100, 60));
  Collector c = make_collector(50, ten);
  const auto sched = c.build_schedule(ten, 0);
  SUBCASE("serial") {
    const auto cycle = c.run_cycle(sched, 1, 1);
    // Finishes at 50, 100, ..., 500 against deadline 60.
    CHECK(synchronized_misses(std::vector<std::int64_t>(10, 60), 1, 50) == 9);
    CHECK(cycle.report.missed == 9);
    CHECK(cycle.report.fired == 10);
    CHECK(cycle.report.worst_lateness_ms == 500 - 60);
  }
  SUBCASE("parallel") {
    const auto cycle = c.run_cycle(sched, 10, 1);
    CHECK(cycle.report.missed == 0);
  }
  SUBCASE("deadline_missed flag") {
    const auto cycle = c.run_cycle(sched, 1, 1);
    for (const auto& r : cycle.results) {
      CHECK(r.finished_at >= r.started_at);
      CHECK(r.deadline_missed == (r.finished_at - r.due_at > 60));
    }
  }
}

TEST_CASE("required_workers examples") {
  CHECK(required_workers(std::vector<ProbeSpec>{spec("a", 100, 100), spec("b", 100, 50)}, 0) == 1);
  std::vector<ProbeSpec> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(spec("p" + std::to_string(i), 100, 60));
  CHECK(required_workers(ten, 50) == 10);
  Collector c = make_collector(50, ten);
  const auto sched = c.build_schedule(ten, 0);
  CHECK(c.run_cycle(sched, 9, 1000).report.missed > 0);
  CHECK(c.run_cycle(sched, 10, 1000).report.missed == 0);
  CHECK(required_workers(std::vector<ProbeSpec>{spec("a", 1000, 1000), spec("b", 1000, 1000)}, 10) == 1);
  CHECK(code_of([] { required_workers(std::vector<ProbeSpec>{spec("a", 100, 20)}, 50); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("property: required_workers is sufficient and minimal") {
  std::mt19937_64 rng(77);
  const std::vector<std::int64_t> periods{100, 200, 250, 500, 1000};
  for (int trial = 0; trial < 60; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 24)(rng);
    const std::int64_t latency = std::uniform_int_distribution<std::int64_t>(1, 40)(rng);
    std::vector<ProbeSpec> specs;
    for (int i = 0; i < n; ++i) {
      const auto period = periods[rng() % periods.size()];
      const auto deadline = std::uniform_int_distribution<std::int64_t>(latency, period)(rng);
      specs.push_back(spec("p" + std::to_string(i), period, deadline));
    }
    const int w = required_workers(specs, static_cast<double>(latency));
    Collector c = make_collector(static_cast<double>(latency), specs);
    const auto sched = c.build_schedule(specs, 0);
    const TimestampMs horizon = 10'000;
    CAPTURE(trial);
    CHECK(c.run_cycle(sched, w, horizon).report.missed == 0);
    if (w > 1) CHECK(c.run_cycle(sched, w - 1, horizon).report.missed > 0);
    // The synchronized burst alone gives a lower bound.
    std::vector<std::int64_t> deadlines;
    for (const auto& s : specs) deadlines.push_back(s.deadline_ms);
    CHECK(synchronized_misses(deadlines, w, latency) == 0);
  }
}

TEST_CASE("rate budget throttles each target") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const double rate = std::uniform_real_distribution<double>(0.3, 30)(rng);
    const int burst = std::uniform_int_distribution<int>(1, 20)(rng);
    const std::int64_t period = std::uniform_int_distribution<std::int64_t>(5, 400)(rng);
    Collector c;
    c.register_driver("d", fixed_latency(0));
    c.set_budget({{"tgt", ComponentKind::kVm}, rate, burst});
    const auto sched = c.build_schedule(
        {spec("a", period, period, "d", "tgt"), spec("b", period * 2, period, "d", "tgt"), spec("c", 1000, 1000, "d", "other")},
        0);
    const auto cycle = c.run_cycle(sched, 4, 60'000);
    std::vector<TimestampMs> fired;
    for (const auto& r : cycle.results) {
      if (r.target.id == "tgt") fired.push_back(r.started_at);
    }
    std::sort(fired.begin(), fired.end());
    // Sliding 10 s windows anchored at every firing.
    std::size_t worst = 0;
    for (std::size_t i = 0, j = 0; i < fired.size(); ++i) {
      while (j < fired.size() && fired[j] < fired[i] + 10'000) ++j;
      worst = std::max(worst, j - i);
    }
    CAPTURE(rate);
    CAPTURE(burst);
    CAPTURE(period);
    CHECK(static_cast<double>(worst) <= rate * 10 * 1.05);
    const auto& r = cycle.report;
    CHECK(r.fired + r.suppressed + r.overruns == r.due);
    CHECK(cycle.events.size() == static_cast<std::size_t>(r.fired));
    CHECK(r.missed <= r.fired);
  }
}

TEST_CASE("token bucket") {
  TokenBucket b(4.0, 10, 0);
  // Capacity min(10, max(1, floor(4 / 2))) = 2.
  CHECK(b.capacity() == 2.0);
  CHECK(b.try_acquire(0));
  CHECK(b.try_acquire(0));
  CHECK_FALSE(b.try_acquire(0));
  CHECK_FALSE(b.try_acquire(200));
  CHECK(b.try_acquire(250));
  CHECK(code_of([] { TokenBucket(0, 1, 0); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { TokenBucket(1, 0, 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("overrun when the previous firing is still running") {
  Collector c = make_collector(250, {spec("p", 100, 100)});
  const auto cycle = c.run_cycle(c.build_schedule({spec("p", 100, 100)}, 0), 4, 1000);
  // Runs at 0, 300, 600, 900; releases at 100, 200, 400, ... overrun.
  CHECK(cycle.report.due == 10);
  CHECK(cycle.report.fired == 4);
  CHECK(cycle.report.overruns == 6);
  CHECK(cycle.report.missed == 4);
}

TEST_CASE("probe results become raw events") {
  Collector c;
  c.register_driver("m", [](const DriverContext& ctx) {
    return DriverReply{.outcome = ctx.now_ms >= 500 ? ProbeOutcome::kDown : ProbeOutcome::kUp,
                       .latency_ms = 3.5,
                       .metrics = {{"rtt", 3.5}},
                       .message = "hi"};
  });
  const auto cycle = c.run_cycle(c.build_schedule({spec("p", 250, 250, "m")}, 0), 1, 1000);
  REQUIRE(cycle.events.size() == 4);
  const auto rules = NormalizationRuleset::builtin();
  for (std::size_t i = 0; i < cycle.events.size(); ++i) {
    const auto ev = normalize(cycle.events[i], rules);
    CHECK(ev.component.id == "t-p");
    CHECK(ev.event_class == "availability");
    CHECK(ev.occurred_at == static_cast<TimestampMs>(250 * i));
    CHECK(ev.metrics.at("up") == (i >= 2 ? 0.0 : 1.0));
    CHECK(ev.metrics.at("rtt") == 3.5);
    CHECK(ev.metrics.at("latency_ms") == 3.5);
    CHECK(ev.severity == (i >= 2 ? Severity::kCritical : Severity::kClear));
  }
}

TEST_CASE("live collector fires on a manual clock") {
  Collector c;
  c.register_driver("d", fixed_latency(0));
  c.set_budget({{"t-p", ComponentKind::kVm}, 1000, 1000});
  ManualClock clock(0);
  std::mutex mu;
  std::vector<RawEvent> got;
  LiveCollector live(c, c.build_schedule({spec("p", 100, 100)}, 0), 2, clock,
                     [&](const RawEvent& raw, const ProbeResult&) {
                       std::lock_guard lock(mu);
                       got.push_back(raw);
                     });
  live.start();
  for (int i = 0; i < 5; ++i) {
    clock.advance(100);
    std::this_thread::sleep_for(std::chrono::milliseconds(80));
  }
  live.stop();
  const auto report = live.report();
  CHECK(report.due == 6);
  CHECK(report.suppressed == 0);
  CHECK(report.fired + report.suppressed + report.overruns == report.due);
  std::lock_guard lock(mu);
  CHECK(got.size() == static_cast<std::size_t>(report.fired));
}
