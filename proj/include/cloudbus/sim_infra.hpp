// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// Deterministic simulated infrastructure: host/vm/service inventory, failure
// injection with downward fault propagation, probe drivers answering from the
// injected state, and the exact ground-truth timeline used as an oracle.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cloudbus/analytics.hpp"
#include "cloudbus/collector.hpp"
#include "cloudbus/event_model.hpp"
#include "cloudbus/topology.hpp"

namespace cloudbus {

struct FailureSpec {
  std::string component;
  TimestampMs down_at_ms = 0;
  TimestampMs up_at_ms = 0;
};

enum class MissExpectation { kNone, kSome, kAny };

std::string_view to_string(MissExpectation expectation);

struct ScenarioExpect {
  /// Expected RCA roots over the rca window; unchecked when absent.
  std::optional<std::set<std::string>> roots;
  MissExpectation deadline_misses = MissExpectation::kNone;
  bool check_availability = true;
};

struct SimScenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  int hosts = 1;
  int vms_per_host = 0;
  int services_per_vm = 0;
  std::vector<FailureSpec> failures;
  TimestampMs horizon_ms = 60'000;

  std::int64_t probe_period_ms = 1'000;
  std::int64_t probe_deadline_ms = 1'000;
  double ping_latency_ms = 5.0;
  double metrics_latency_ms = 10.0;
  /// Adds a sim.metrics probe per host.
  bool metrics_probes = true;

  /// Window for RCA checks; defaults to the span of the injected failures.
  std::optional<TimeWindow> rca_window;
  ScenarioExpect expect;
};

/// Throws Error(kInvalidScenario).
void validate(const SimScenario& scenario);

/// Parses {"scenario": {...}, "failures": [...], "expect": {...}}. Shape
/// errors throw kConfigError naming the key; the result is validated.
SimScenario scenario_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const SimScenario& scenario);

/// Scenarios shipped with the library ("chain-failure", "overload").
std::vector<std::string> bundled_scenario_names();
std::optional<SimScenario> bundled_scenario(std::string_view name);

std::string host_id(int h);
std::string vm_id(int h, int i);
std::string service_id(int h, int i, int j);

struct StateTransition {
  TimestampMs t_ms = 0;
  bool up = true;

  bool operator==(const StateTransition&) const = default;
};

struct Interval {
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;  // exclusive

  bool operator==(const Interval&) const = default;
};

class GroundTruthLog {
 public:
  GroundTruthLog() = default;
  GroundTruthLog(const Topology& topology, const std::vector<FailureSpec>& failures);

  bool contains(std::string_view component) const;
  std::vector<std::string> components() const;

  /// Alternating states starting at t=0. Throws kUnknownComponent.
  const std::vector<StateTransition>& transitions(std::string_view component) const;
  /// Merged down intervals, sorted.
  const std::vector<Interval>& down_intervals(std::string_view component) const;
  bool up_at(std::string_view component, TimestampMs t) const;
  /// State changes at instants in (start_ms, end_ms).
  std::size_t transitions_within(std::string_view component, TimestampMs start_ms, TimestampMs end_ms) const;

  nlohmann::ordered_json to_json() const;

 private:
  std::map<std::string, std::vector<Interval>, std::less<>> down_;
  std::map<std::string, std::vector<StateTransition>, std::less<>> transitions_;
};

/// Exact up-time fraction over [start_ms, end_ms). A zero-length window
/// reports the state at start. Throws kUnknownComponent, kInvalidArgument.
double oracle_availability(const GroundTruthLog& truth, std::string_view component, TimestampMs start_ms,
                           TimestampMs end_ms);

inline constexpr std::string_view kPingDriver = "sim.ping";
inline constexpr std::string_view kMetricsDriver = "sim.metrics";

// Immutable once built; the drivers read it from collector worker threads.
class SimInfra {
 public:
  /// Validates and builds. Throws kInvalidScenario.
  explicit SimInfra(SimScenario scenario);
  SimInfra(const SimInfra&) = delete;
  SimInfra& operator=(const SimInfra&) = delete;

  const SimScenario& scenario() const { return scenario_; }
  const Topology& topology() const { return topology_; }
  const GroundTruthLog& ground_truth() const { return truth_; }

  /// Registers sim.ping and sim.metrics. The drivers reference this object.
  void register_drivers(Collector& collector) const;

  DriverReply ping(std::string_view component, TimestampMs t) const;
  DriverReply metrics(std::string_view component, TimestampMs t) const;

  /// One ping probe per component plus metrics probes per host, all
  /// released together at the schedule origin.
  std::vector<ProbeSpec> probe_specs() const;

  /// Direct observation as a "sim.ping" raw event.
  RawEvent observe(std::string_view component, TimestampMs t) const;

  /// RCA window from the scenario, else [first failure, last recovery - 1].
  TimeWindow rca_window() const;

  /// Topology, ground truth and scenario; byte-identical for equal inputs.
  nlohmann::ordered_json export_json() const;

 private:
  SimScenario scenario_;
  Topology topology_;
  GroundTruthLog truth_;
};

}  // namespace cloudbus
