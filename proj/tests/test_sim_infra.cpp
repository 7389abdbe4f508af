// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "support.hpp"

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

SimScenario small(std::vector<FailureSpec> failures = {}) {
  SimScenario s;
  s.seed = 1;
  s.hosts = 2;
  s.vms_per_host = 2;
  s.services_per_vm = 1;
  s.horizon_ms = 1000;
  s.probe_period_ms = 100;
  s.probe_deadline_ms = 100;
  s.failures = std::move(failures);
  return s;
}

}  // namespace

TEST_CASE("inventory shape and determinism") {
  SimInfra a(small()), b(small());
  CHECK(a.topology().node_count() == 2 + 4 + 4);
  CHECK(a.export_json().dump() == b.export_json().dump());
  const auto vm = a.topology().node("vm-2-1");
  REQUIRE(vm);
  CHECK(std::get<std::string>(vm->attrs.at("host_id")) == "host-2");
  CHECK(a.topology().parents("vm-2-1") == std::vector<std::string>{"host-2"});
  CHECK(a.topology().parents("svc-2-1-1") == std::vector<std::string>{"vm-2-1"});

  auto other = small();
  other.seed = 2;
  SimInfra c(other);
  CHECK(c.metrics("host-1", 100).metrics != a.metrics("host-1", 100).metrics);
  CHECK(a.metrics("host-1", 100).metrics == b.metrics("host-1", 100).metrics);
}

TEST_CASE("fault propagation along hosts edges") {
  SimInfra s(small({{"host-1", 100, 200}}));
  CHECK(s.ping("vm-1-1", 150).outcome == ProbeOutcome::kDown);
  CHECK(s.ping("svc-1-2-1", 150).outcome == ProbeOutcome::kDown);
  CHECK(s.ping("vm-1-1", 250).outcome == ProbeOutcome::kUp);
  CHECK(s.ping("vm-1-1", 200).outcome == ProbeOutcome::kUp);
  CHECK(s.ping("vm-1-1", 100).outcome == ProbeOutcome::kDown);
  CHECK(s.ping("vm-2-1", 150).outcome == ProbeOutcome::kUp);
  CHECK(s.metrics("host-1", 150).outcome == ProbeOutcome::kDown);
  CHECK(s.metrics("host-1", 150).metrics.empty());
  const auto obs = s.observe("vm-1-1", 150);
  const auto ev = normalize(obs, NormalizationRuleset::builtin());
  CHECK(ev.metrics.at("up") == 0.0);
  CHECK(ev.component == ComponentId{"vm-1-1", ComponentKind::kVm});
}

TEST_CASE("ground truth log") {
  SimInfra s(small({{"host-1", 100, 200}, {"vm-1-1", 150, 300}, {"vm-2-2", 0, 50}}));
  const auto& truth = s.ground_truth();
  CHECK(truth.transitions("vm-1-1") ==
        std::vector<StateTransition>{{0, true}, {100, false}, {300, true}});
  CHECK(truth.transitions("vm-2-2") == std::vector<StateTransition>{{0, false}, {50, true}});
  CHECK(truth.transitions("host-2") == std::vector<StateTransition>{{0, true}});
  CHECK(truth.down_intervals("svc-1-1-1") == std::vector<Interval>{{100, 300}});
  CHECK(truth.transitions_within("vm-1-1", 0, 1000) == 2);
  CHECK(truth.transitions_within("vm-1-1", 100, 300) == 0);
  CHECK(code_of([&] { truth.transitions("nope"); }) == ErrorCode::kUnknownComponent);
}

TEST_CASE("oracle availability examples") {
  SimInfra clean(small());
  CHECK(oracle_availability(clean.ground_truth(), "vm-1-1", 0, 1000) == 1.0);
  SimInfra s(small({{"host-1", 400, 700}}));
  CHECK(oracle_availability(s.ground_truth(), "host-1", 0, 1000) == doctest::Approx(0.7));
  CHECK(oracle_availability(s.ground_truth(), "svc-1-1-1", 0, 1000) == doctest::Approx(0.7));
  CHECK(oracle_availability(s.ground_truth(), "host-1", 450, 650) == 0.0);
  CHECK(code_of([&] { oracle_availability(s.ground_truth(), "nope", 0, 1); }) == ErrorCode::kUnknownComponent);
}

TEST_CASE("property: ground truth agrees with an interval oracle") {
  for (std::uint64_t seed = 1; seed <= 150; ++seed) {
    const SimScenario sc = testing::random_scenario(seed);
    SimInfra infra(sc);
    std::mt19937_64 rng(seed);
    for (const auto& id : infra.ground_truth().components()) {
      const auto& tr = infra.ground_truth().transitions(id);
      REQUIRE(tr.front().t_ms == 0);
      for (std::size_t i = 1; i < tr.size(); ++i) {
        REQUIRE(tr[i].up != tr[i - 1].up);
        REQUIRE(tr[i].t_ms > tr[i - 1].t_ms);
      }
      const TimestampMs a = std::uniform_int_distribution<TimestampMs>(0, sc.horizon_ms)(rng);
      const TimestampMs b = std::uniform_int_distribution<TimestampMs>(a, sc.horizon_ms)(rng);
      CAPTURE(seed);
      CAPTURE(id);
      REQUIRE(oracle_availability(infra.ground_truth(), id, a, b) ==
              doctest::Approx(testing::interval_oracle(sc, id, a, b)).epsilon(1e-12));
      REQUIRE(oracle_availability(infra.ground_truth(), id, 0, sc.horizon_ms) ==
              doctest::Approx(testing::interval_oracle(sc, id, 0, sc.horizon_ms)).epsilon(1e-12));
      const TimestampMs t = std::uniform_int_distribution<TimestampMs>(0, sc.horizon_ms - 1)(rng);
      REQUIRE(infra.ground_truth().up_at(id, t) == (testing::interval_oracle(sc, id, t, t + 1) == 1.0));
    }
  }
}

TEST_CASE("drivers plug into the collector") {
  SimInfra s(small({{"vm-1-2", 0, 500}}));
  Collector c;
  s.register_drivers(c);
  CHECK(c.has_driver(std::string(kPingDriver)));
  CHECK(c.has_driver(std::string(kMetricsDriver)));
  for (const auto& p : s.probe_specs()) c.set_budget({p.target, 1000, 1000});
  const auto specs = s.probe_specs();
  CHECK(specs.size() == 10 + 2);
  const auto cycle = c.run_cycle(c.build_schedule(specs, 0), 12, 1000);
  CHECK(cycle.report.fired == 12 * 10);
  const auto rules = NormalizationRuleset::builtin();
  for (const auto& raw : cycle.events) {
    const auto ev = normalize(raw, rules);
    if (ev.event_class != "availability") continue;
    CHECK(ev.metrics.at("up") == (s.ground_truth().up_at(ev.component.id, ev.occurred_at) ? 1.0 : 0.0));
  }
}

TEST_CASE("scenario validation") {
  CHECK_NOTHROW(validate(small()));
  auto bad = small({{"host-1", 200, 100}});
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::kInvalidScenario);
  bad = small({{"host-1", 100, 2000}});
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::kInvalidScenario);
  bad = small({{"host-9", 100, 200}});
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::kInvalidScenario);
  bad = small();
  bad.hosts = 0;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::kInvalidScenario);
  bad = small();
  bad.probe_deadline_ms = 200;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::kInvalidScenario);
  CHECK(code_of([] { SimInfra x([] {
          auto s = small();
          s.horizon_ms = 0;
          return s;
        }()); }) == ErrorCode::kInvalidScenario);
}

TEST_CASE("scenario json") {
  const auto doc = nlohmann::json::parse(R"({
    "scenario": {"name": "t", "seed": 3, "hosts": 1, "vms_per_host": 1, "services_per_vm": 0, "horizon_ms": 5000},
    "failures": [{"component": "vm-1-1", "down_at_ms": 1000, "up_at_ms": 2000}],
    "expect": {"roots": ["vm-1-1"], "deadline_misses": "none"}
  })");
  const auto s = scenario_from_json(doc);
  CHECK(s.name == "t");
  CHECK(s.seed == 3);
  CHECK(s.failures.size() == 1);
  CHECK(s.probe_deadline_ms == s.probe_period_ms);
  REQUIRE(s.expect.roots);
  CHECK(s.expect.roots->size() == 1);
  const auto again = scenario_from_json(nlohmann::json::parse(to_json(s).dump()));
  CHECK(to_json(again).dump() == to_json(s).dump());

  CHECK(code_of([] { scenario_from_json(nlohmann::json::parse(R"({"scenario": {"hosts": "two"}})")); }) ==
        ErrorCode::kConfigError);
  CHECK(code_of([] {
    scenario_from_json(nlohmann::json::parse(
        R"({"scenario": {"hosts": 1, "horizon_ms": 10}, "failures": [{"component": "host-2", "down_at_ms": 1, "up_at_ms": 2}]})"));
  }) == ErrorCode::kInvalidScenario);
}

TEST_CASE("bundled scenarios") {
  const auto names = bundled_scenario_names();
  CHECK(std::find(names.begin(), names.end(), "chain-failure") != names.end());
  CHECK(std::find(names.begin(), names.end(), "overload") != names.end());
  for (const auto& n : names) {
    const auto s = bundled_scenario(n);
    REQUIRE(s);
    CHECK_NOTHROW(validate(*s));
  }
  CHECK_FALSE(bundled_scenario("nope").has_value());
}

TEST_CASE("rca window") {
  SimInfra a(small({{"host-1", 100, 200}, {"vm-2-1", 300, 450}}));
  CHECK(a.rca_window() == TimeWindow{100, 449});
  SimInfra b(small());
  CHECK(b.rca_window() == TimeWindow{0, 1000});
}
