// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "support.hpp"

#include <cstdio>
#include <fstream>
#include <thread>

#include "cloudbus/error.hpp"
#include "cloudbus/server.hpp"

using namespace cloudbus;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(json::parse(text));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfigError);
    CHECK_FALSE(testing::contains_secret(e.what()));
    return e.what();
  }
  FAIL("config accepted: " << text);
  return {};
}

const std::string kGood = R"({
  "workers": 3,
  "credentials": [{"id": "c1", "secret": "hunter2-Zq9-secret", "scope": {"kinds": ["vm"], "ids": ["host-1"]}}],
  "budgets": [{"target": "vm-1", "max_per_sec": 2.5, "burst": 3}],
  "probes": [
    {"id": "ping-vm-1", "target": "vm-1", "kind": "vm", "driver": "sim.ping", "period_ms": 1000, "credential": "c1",
     "params": {"port": 22}},
    {"id": "ping-host-1", "target": "host-1", "kind": "physical_host", "driver": "sim.ping", "period_ms": 500,
     "deadline_ms": 250}
  ],
  "rules": [{"id": "cpu", "selector": {"class": "perf.*", "kinds": ["vm"], "min_severity": "info"},
             "metric": "cpu_pct", "cmp": "ge", "value": 90, "consecutive": 2, "severity": "critical"}],
  "topology": {"nodes": [{"id": "vm-1", "kind": "vm"}]}
})";

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(json::parse(kGood));
  CHECK(cfg.workers == 3);
  REQUIRE(cfg.credentials.size() == 1);
  CHECK(cfg.credentials[0].reveal() == testing::secrets()[0]);
  CHECK(cfg.credentials[0].kind_scope() == std::set{ComponentKind::kVm});
  CHECK(cfg.credentials[0].id_scope() == std::set<std::string>{"host-1"});
  REQUIRE(cfg.budgets.size() == 1);
  CHECK(cfg.budgets[0].max_probes_per_sec == 2.5);
  CHECK(cfg.budgets[0].burst == 3);
  REQUIRE(cfg.probes.size() == 2);
  CHECK(cfg.probes[0].deadline_ms == 1000);
  CHECK(cfg.probes[0].credential_ref == std::optional<std::string>("c1"));
  CHECK(std::get<std::int64_t>(cfg.probes[0].params.at("port")) == 22);
  CHECK(cfg.probes[1].deadline_ms == 250);
  CHECK(cfg.probes[1].target == ComponentId{"host-1", ComponentKind::kPhysicalHost});
  REQUIRE(cfg.rules.size() == 1);
  CHECK(cfg.rules[0].comparator == Comparator::kGe);
  CHECK(cfg.rules[0].consecutive == 2);
  CHECK(cfg.rules[0].breach_severity == Severity::kCritical);
  CHECK(cfg.rules[0].selector.class_glob == std::optional<std::string>("perf.*"));
  REQUIRE(cfg.topology);
  CHECK(cfg.topology->contains("vm-1"));
  CHECK_FALSE(cfg.scenario.has_value());
}

TEST_CASE("config errors name the offending key") {
  CHECK(config_error(R"({"probes": [{"id": "p", "target": "t", "driver": "d", "period_ms": 100, "deadline_ms": 200}]})")
            .starts_with("probes[0]"));
  CHECK(config_error(R"({"probes": [{"target": "t", "driver": "d", "period_ms": 100}]})").starts_with("probes[0].id"));
  CHECK(config_error(R"({"probes": [{"id": "p", "target": "t", "kind": "vm", "driver": "d", "period_ms": "x"}]})")
            .starts_with("probes[0].period_ms"));
  CHECK(config_error(R"({"bogus": 1})").starts_with("bogus"));
  CHECK(config_error(R"({"budgets": [{"target": "a", "max_per_sec": 0, "burst": 1}]})").starts_with("budgets[0].max_per_sec"));
  CHECK(config_error(R"({"rules": [{"id": "r", "metric": "m", "value": 1, "cmp": "eq"}]})").starts_with("rules[0].cmp"));
  CHECK(config_error(R"({"workers": -1})").starts_with("workers"));
  CHECK(config_error(R"({"failures": []})").starts_with("failures"));
  CHECK(config_error(R"({"topology": {"nodes": [{"id": "a", "kind": "martian"}]}})").starts_with("topology"));
  CHECK(config_error(R"([1, 2])").size() > 0);
}

TEST_CASE("config errors never echo a secret") {
  config_error(R"({"credentials": [{"id": "c", "secret": "s3cr3t-token-XYZ", "scope": {"kinds": ["s3cr3t-token-XYZ"]}}]})");
  config_error(R"({"credentials": [{"id": "c", "secret": "s3cr3t-token-XYZ", "scope": {"kinds": []}, "s3cr3t-token-XYZ": 1}]})");
  config_error(R"({"credentials": [{"id": "c", "secret": ["pa55w0rd-vault-77"], "scope": {}}]})");
}

TEST_CASE("config with a scenario") {
  const auto cfg = parse_config(json::parse(R"({
    "scenario": {"name": "x", "hosts": 1, "vms_per_host": 1, "horizon_ms": 10000},
    "failures": [{"component": "host-1", "down_at_ms": 100, "up_at_ms": 200}]
  })"));
  REQUIRE(cfg.scenario);
  CHECK(cfg.scenario->failures.size() == 1);
  CHECK(config_error(R"({"scenario": {"hosts": 0, "horizon_ms": 10}})").starts_with("scenario"));
}

TEST_CASE("config file loading") {
  const auto path = std::filesystem::temp_directory_path() / "cloudbus-test-config.json";
  {
    std::ofstream(path) << kGood;
  }
  CHECK(load_config_file(path).probes.size() == 2);
  {
    std::ofstream(path) << "{ not json";
  }
  CHECK_THROWS_AS(load_config_file(path), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config_file(path), Error);
}

TEST_CASE("token files") {
  const auto toks = parse_token_file(json::parse(
      R"({"tokens": [{"token": "a", "roles": ["mediator", "consumer"], "label": "script"}, {"token": "b", "roles": ["admin"]}]})"));
  REQUIRE(toks.size() == 2);
  CHECK(toks[0].roles == std::set{Role::kMediator, Role::kConsumer});
  CHECK(toks[0].label == "script");
  CHECK(toks[1].has(Role::kAdmin));
  auto fails = [](const char* text) {
    try {
      parse_token_file(json::parse(text));
    } catch (const Error& e) {
      CHECK_FALSE(std::string(e.what()).find("pa55w0rd-vault-77") != std::string::npos);
      return true;
    }
    return false;
  };
  CHECK(fails(R"({"tokens": [{"token": "pa55w0rd-vault-77", "roles": ["admin"]}, {"token": "pa55w0rd-vault-77", "roles": ["admin"]}]})"));
  CHECK(fails(R"({"tokens": [{"token": "", "roles": ["admin"]}]})"));
  CHECK(fails(R"({"tokens": [{"token": "x", "roles": []}]})"));
  CHECK(fails(R"({"tokens": [{"token": "x", "roles": ["root"]}]})"));
  CHECK(fails(R"({})"));
}

TEST_CASE("management server ingest and analytics") {
  Topology topo;
  topo.upsert_node(make_node({"host-1", ComponentKind::kPhysicalHost}));
  topo.upsert_node(make_node({"vm-1", ComponentKind::kVm}));
  topo.link("host-1", "vm-1", EdgeKind::kHosts);
  ThresholdRule rule{.rule_id = "hot", .selector = {}, .metric = "cpu_pct", .comparator = Comparator::kGt,
                     .value = 80, .consecutive = 1, .breach_severity = Severity::kError};
  ManagementServer server(topo, {rule}, {.id_seed = 5});
  server.bus().add_token({"med", {Role::kMediator}, "m"});
  server.bus().add_token({"con", {Role::kConsumer}, "c"});
  auto sub = server.bus().subscribe("con", {}, 64);

  RawEvent raw{.source_kind = "sim.metrics", .received_at = 10, .payload = {}};
  raw.payload["target"] = std::string("vm-1");
  raw.payload["kind"] = std::string("vm");
  raw.payload["metrics.cpu_pct"] = 95.0;
  CHECK(server.ingest_raw("med", raw) == 1);
  CHECK_THROWS_AS(server.ingest_raw("con", raw), Error);

  RawEvent broken{.source_kind = "nothing.matches", .received_at = 0, .payload = {}};
  try {
    server.ingest_raw("med", broken);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoMatchingRule);
  }
  // Authorization comes before normalization.
  try {
    server.ingest_raw("con", broken);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAuthError);
  }

  CHECK(server.pump_analytics() >= 1);
  std::vector<std::string> classes;
  while (auto d = sub.next(0ms)) classes.push_back(d->event.event_class);
  CHECK(classes == std::vector<std::string>{"perf", "threshold.breach"});

  server.ingest_internal(RawEvent{.source_kind = "sim.ping", .received_at = 20,
                                  .payload = {{"target", std::string("host-1")}, {"kind", std::string("physical_host")},
                                              {"up", false}}});
  server.ingest_internal(RawEvent{.source_kind = "sim.ping", .received_at = 21,
                                  .payload = {{"target", std::string("vm-1")}, {"kind", std::string("vm")}, {"up", false}}});
  server.pump_analytics();
  CHECK(server.analytics().rca({0, 100}).roots == std::set<ComponentId>{{"host-1", ComponentKind::kPhysicalHost}});
}

TEST_CASE("analytics thread drains on stop") {
  ManagementServer server(Topology{}, {}, {});
  server.bus().add_token({"med", {Role::kMediator}, "m"});
  server.start_analytics();
  for (int i = 0; i < 200; ++i) {
    server.ingest("med", testing::avail_event("vm-" + std::to_string(i % 7), ComponentKind::kVm, i % 2 == 0, i));
  }
  server.stop();
  CHECK(server.analytics().consumed() == 200);
  CHECK(server.analytics_dropped() == 0);
}

TEST_CASE("credential diagnostics point at the entry") {
  CHECK(config_error(R"({"credentials": [{"id": "c", "secret": "x", "extra": 1}]})") == "credentials[0]: unknown key");
  CHECK(config_error(R"({"credentials": [{"id": "c", "secret": "x", "scope": {"kinds": ["martian"]}}]})") ==
        "credentials[0].scope.kinds[0]: unknown component kind");
  CHECK(config_error(R"({"credentials": [{"id": "c"}]})") == "credentials[0].secret: missing required key");
}
