// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// End-to-end simulation: collector on simulated time, normalization, bus,
// analytics, then every result checked against the scenario's ground truth.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cloudbus/analytics.hpp"
#include "cloudbus/collector.hpp"
#include "cloudbus/server.hpp"
#include "cloudbus/sim_infra.hpp"

namespace cloudbus {

struct SimRunOptions {
  /// 0 uses required_workers for the scenario's probes.
  int workers = 0;
};

struct AvailabilityCheck {
  std::string component;
  std::optional<double> pipeline_ratio;
  double oracle_ratio = 0.0;
  double delta_ms = 0.0;
  double allowed_ms = 0.0;
  std::size_t transitions = 0;
  bool ok = false;
};

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct SimReport {
  std::string scenario;
  int workers = 0;
  int required_workers = 0;
  DeadlineReport deadline;
  std::vector<AvailabilityCheck> availability;
  RcaResult rca;
  std::size_t down_events = 0;
  std::size_t correlated_events = 0;
  std::size_t repeat_entries = 0;
  std::int64_t max_count = 0;
  std::int64_t events_published = 0;
  std::vector<CheckResult> checks;

  bool ok() const;
  /// Name of the first failed check.
  std::optional<std::string> first_failure() const;
  nlohmann::ordered_json to_json() const;
};

// Owns the simulated infrastructure and the server the pipeline ran on so
// callers can query the server afterwards.
class SimRun {
 public:
  explicit SimRun(SimScenario scenario, SimRunOptions options = {});

  /// Runs once; later calls return the first report.
  const SimReport& run();

  const SimInfra& infra() const { return *infra_; }
  ManagementServer& server() { return *server_; }
  const CycleResult& cycle() const { return cycle_; }
  /// Analytics view of the run window with correlation applied.
  const Correlation& correlation() const { return correlation_; }

 private:
  SimRunOptions options_;
  std::unique_ptr<SimInfra> infra_;
  std::unique_ptr<ManagementServer> server_;
  Collector collector_;
  CycleResult cycle_;
  Correlation correlation_;
  std::optional<SimReport> report_;
};

SimReport run_simulation(const SimScenario& scenario, SimRunOptions options = {});

}  // namespace cloudbus
