// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/sim_run.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "cloudbus/error.hpp"

namespace cloudbus {
namespace {

using nlohmann::ordered_json;

constexpr std::size_t kPumpEvery = 4096;
constexpr double kSlackMs = 1e-6;

std::string join_ids(const std::set<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ",") + id;
  return "[" + out + "]";
}

}  // namespace

bool SimReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.ok; });
}

std::optional<std::string> SimReport::first_failure() const {
  for (const auto& c : checks) {
    if (!c.ok) return c.name;
  }
  return std::nullopt;
}

ordered_json SimReport::to_json() const {
  ordered_json doc;
  doc["scenario"] = scenario;
  doc["ok"] = ok();
  auto ff = first_failure();
  doc["first_failure"] = ff ? ordered_json(*ff) : ordered_json(nullptr);
  doc["workers"] = workers;
  doc["required_workers"] = required_workers;
  doc["deadline"] = cloudbus::to_json(deadline);
  ordered_json av = ordered_json::array();
  for (const auto& a : availability) {
    av.push_back({{"component", a.component},
                  {"pipeline_ratio", a.pipeline_ratio ? ordered_json(*a.pipeline_ratio) : ordered_json(nullptr)},
                  {"oracle_ratio", a.oracle_ratio},
                  {"delta_ms", a.delta_ms},
                  {"allowed_ms", a.allowed_ms},
                  {"transitions", a.transitions},
                  {"ok", a.ok}});
  }
  doc["availability"] = std::move(av);
  doc["rca"] = cloudbus::to_json(rca);
  doc["correlation"] = {{"down_events", down_events}, {"correlated", correlated_events}};
  doc["dedup"] = {{"repeat_entries", repeat_entries}, {"max_count", max_count}};
  doc["events_published"] = events_published;
  ordered_json cs = ordered_json::array();
  for (const auto& c : checks) cs.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
  doc["checks"] = std::move(cs);
  return doc;
}

SimRun::SimRun(SimScenario scenario, SimRunOptions options)
    : options_(options), infra_(std::make_unique<SimInfra>(std::move(scenario))) {
  if (options_.workers < 0) throw Error(ErrorCode::kInvalidArgument, "workers must be >= 0");
  std::uint64_t id_seed = infra_->scenario().seed ^ 0x5DEECE66DULL;
  if (id_seed == 0) id_seed = 1;
  server_ = std::make_unique<ManagementServer>(infra_->topology(), std::vector<ThresholdRule>{},
                                               ServerOptions{.id_seed = id_seed});
  infra_->register_drivers(collector_);
}

const SimReport& SimRun::run() {
  if (report_) return *report_;
  const SimScenario& sc = infra_->scenario();
  const GroundTruthLog& truth = infra_->ground_truth();
  SimReport rep;
  rep.scenario = sc.name;

  // Probes.
  const std::vector<ProbeSpec> specs = infra_->probe_specs();
  const double latency = sc.metrics_probes ? std::max(sc.ping_latency_ms, sc.metrics_latency_ms) : sc.ping_latency_ms;
  try {
    rep.required_workers = required_workers(specs, latency);
  } catch (const Error& e) {
    rep.required_workers = static_cast<int>(specs.size());
    spdlog::warn("sim-run {}: {}", sc.name, e.what());
  }
  rep.workers = options_.workers > 0 ? options_.workers : rep.required_workers;
  const Schedule schedule = collector_.build_schedule(specs, 0);
  cycle_ = collector_.run_cycle(schedule, rep.workers, sc.horizon_ms);
  rep.deadline = cycle_.report;

  // Pipeline.
  std::size_t rejected = 0;
  std::string first_reject;
  for (std::size_t i = 0; i < cycle_.events.size(); ++i) {
    try {
      server_->ingest_internal(cycle_.events[i]);
    } catch (const Error& e) {
      if (rejected++ == 0) first_reject = e.what();
    }
    if ((i + 1) % kPumpEvery == 0) server_->pump_analytics();
  }
  server_->pump_analytics();
  rep.events_published = server_->bus().last_seq();
  rep.checks.push_back({"normalization", rejected == 0,
                        rejected == 0 ? std::to_string(cycle_.events.size()) + " events normalized"
                                      : std::to_string(rejected) + " rejected, first: " + first_reject});

  // Deadlines.
  {
    CheckResult c{.name = "deadlines"};
    c.detail = "missed=" + std::to_string(rep.deadline.missed) + " expected " +
               std::string(to_string(sc.expect.deadline_misses));
    switch (sc.expect.deadline_misses) {
      case MissExpectation::kNone: c.ok = rep.deadline.missed == 0; break;
      case MissExpectation::kSome: c.ok = rep.deadline.missed > 0; break;
      case MissExpectation::kAny: c.ok = true; break;
    }
    rep.checks.push_back(std::move(c));
  }

  // Availability against the oracle.
  const AnalyticsEngine& engine = server_->analytics();
  std::size_t bad = 0;
  std::string first_bad;
  for (const auto& id : truth.components()) {
    AvailabilityCheck a;
    a.component = id;
    a.oracle_ratio = oracle_availability(truth, id, 0, sc.horizon_ms);
    a.transitions = truth.transitions_within(id, 0, sc.horizon_ms);
    a.allowed_ms = static_cast<double>(a.transitions) * static_cast<double>(sc.probe_period_ms);
    try {
      a.pipeline_ratio = engine.availability(id, 0, sc.horizon_ms).ratio;
    } catch (const Error&) {
    }
    if (a.pipeline_ratio) {
      a.delta_ms = std::abs(*a.pipeline_ratio - a.oracle_ratio) * static_cast<double>(sc.horizon_ms);
      a.ok = a.delta_ms <= a.allowed_ms + kSlackMs;
    }
    if (!a.ok && bad++ == 0) first_bad = id;
    rep.availability.push_back(std::move(a));
  }
  if (sc.expect.check_availability) {
    rep.checks.push_back({"availability", bad == 0,
                          bad == 0 ? std::to_string(rep.availability.size()) + " components within bound"
                                   : std::to_string(bad) + " components out of bound, first: " + first_bad});
  }

  // Root cause and correlation.
  const TimeWindow window = infra_->rca_window();
  rep.rca = engine.rca(window);
  correlation_ = engine.correlate_window(window);
  if (sc.expect.roots) {
    std::set<std::string> got;
    for (const auto& r : rep.rca.roots) got.insert(r.id);
    rep.checks.push_back({"rca.roots", got == *sc.expect.roots,
                          "roots=" + join_ids(got) + " expected " + join_ids(*sc.expect.roots)});
  }
  {
    std::map<std::string, std::string> event_component;
    for (const auto& ev : correlation_.events) event_component[ev.event_id] = ev.component.id;
    std::size_t wrong = 0;
    for (const auto& ev : correlation_.events) {
      const bool down = ev.event_class == kAvailabilityClass && ev.metrics.contains("up") && ev.metrics.at("up") < 0.5;
      if (!down || !window.contains(ev.occurred_at) || !rep.rca.suppressed.contains(ev.component)) continue;
      ++rep.down_events;
      if (!ev.correlated_to) continue;
      auto it = event_component.find(*ev.correlated_to);
      if (it != event_component.end() && it->second == ultimate_root(rep.rca, ev.component).id) {
        ++rep.correlated_events;
      } else {
        ++wrong;
      }
    }
    rep.checks.push_back({"correlation", rep.correlated_events == rep.down_events && wrong == 0,
                          std::to_string(rep.correlated_events) + "/" + std::to_string(rep.down_events) +
                              " symptom events correlated to their root"});
  }

  // Deduplication: every component down for two probe periods or more must
  // have a repeat-counted critical entry.
  {
    std::map<std::string, std::int64_t> best;
    auto note = [&](const NormalizedEvent& e) {
      if (e.event_class != kAvailabilityClass || e.severity != Severity::kCritical) return;
      if (e.count > 1) ++rep.repeat_entries;
      rep.max_count = std::max(rep.max_count, e.count);
      auto& b = best[e.component.id];
      b = std::max(b, e.count);
    };
    for (const auto& [key, e] : engine.open_events()) note(e);
    for (const auto& e : engine.dedup_closed()) note(e);
    std::size_t missing = 0;
    std::string first_missing;
    for (const auto& id : truth.components()) {
      bool long_outage = false;
      for (const auto& iv : truth.down_intervals(id)) {
        long_outage = long_outage || std::min(iv.end_ms, sc.horizon_ms) - iv.start_ms >= 2 * sc.probe_period_ms;
      }
      if (long_outage && best[id] < 2 && missing++ == 0) first_missing = id;
    }
    if (sc.expect.check_availability) {
      rep.checks.push_back({"dedup", missing == 0,
                            missing == 0 ? std::to_string(rep.repeat_entries) + " repeat-counted entries"
                                         : std::to_string(missing) + " outages without repeat count, first: " +
                                               first_missing});
    }
  }

  report_ = std::move(rep);
  return *report_;
}

SimReport run_simulation(const SimScenario& scenario, SimRunOptions options) {
  SimRun run(scenario, options);
  return run.run();
}

}  // namespace cloudbus
