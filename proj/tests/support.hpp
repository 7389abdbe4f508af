// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// Shared test helpers: secret registry and log capture, random generators,
// and brute-force oracles that do not reuse library algorithms.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/sinks/base_sink.h>
#include <spdlog/spdlog.h>

#include "cloudbus/analytics.hpp"
#include "cloudbus/event_model.hpp"
#include "cloudbus/sim_infra.hpp"
#include "cloudbus/topology.hpp"

namespace testing {

// Every credential secret used anywhere in the tests comes from this list so
// that output can be scanned for all of them.
inline const std::vector<std::string>& secrets() {
  static const std::vector<std::string> s{"hunter2-Zq9-secret", "s3cr3t-token-XYZ", "pa55w0rd-vault-77"};
  return s;
}

inline bool contains_secret(std::string_view text) {
  for (const auto& s : secrets()) {
    if (text.find(s) != std::string_view::npos) return true;
  }
  return false;
}

class CaptureSink final : public spdlog::sinks::base_sink<std::mutex> {
 public:
  std::vector<std::string> lines() {
    std::lock_guard lock(mutex_);
    return lines_;
  }
  void clear() {
    std::lock_guard lock(mutex_);
    lines_.clear();
  }

 protected:
  void sink_it_(const spdlog::details::log_msg& msg) override {
    spdlog::memory_buf_t buf;
    formatter_->format(msg, buf);
    lines_.emplace_back(buf.data(), buf.size());
  }
  void flush_() override {}

 private:
  std::vector<std::string> lines_;
};

/// Installed by the test mains as the only sink of the default logger.
std::shared_ptr<CaptureSink> log_capture();
void install_log_capture();
/// Number of captured log lines containing a registered secret.
std::size_t leaked_log_lines();

// ---------------------------------------------------------------------------
// Random DAGs for RCA

struct RandomDag {
  cloudbus::Topology graph;
  std::vector<cloudbus::ComponentId> nodes;
  // Causal edges only (hosts, depends_on), parent -> child, by node index.
  std::vector<std::pair<std::size_t, std::size_t>> causal;
  std::set<cloudbus::ComponentId> down;
};

RandomDag random_dag(std::mt19937_64& rng, std::size_t max_nodes = 15);

/// Roots and nearest-ancestor suppression by explicit ancestor-set
/// enumeration and an all-pairs shortest-path table.
cloudbus::RcaResult brute_force_rca(const RandomDag& dag, cloudbus::TimeWindow window);

// ---------------------------------------------------------------------------
// Scenarios

cloudbus::SimScenario random_scenario(std::uint64_t seed);

/// Independent availability oracle: samples the failure intervals directly
/// (ancestor failures found by walking the host/vm naming scheme).
double interval_oracle(const cloudbus::SimScenario& scenario, const std::string& component, cloudbus::TimestampMs start,
                       cloudbus::TimestampMs end);

// ---------------------------------------------------------------------------
// Events

cloudbus::NormalizedEvent random_event(std::mt19937_64& rng, cloudbus::EventIdGenerator& ids);

/// Payloads as the built-in drivers and the collector produce them, with
/// random but valid contents.
cloudbus::RawEvent random_driver_payload(std::mt19937_64& rng);

cloudbus::NormalizedEvent make_event(const std::string& id, cloudbus::ComponentKind kind, const std::string& cls,
                                     cloudbus::Severity severity, cloudbus::TimestampMs at,
                                     std::map<std::string, double> metrics = {});

inline cloudbus::NormalizedEvent avail_event(const std::string& id, cloudbus::ComponentKind kind, bool up,
                                             cloudbus::TimestampMs at) {
  return make_event(id, kind, "availability", up ? cloudbus::Severity::kClear : cloudbus::Severity::kCritical, at,
                    {{"up", up ? 1.0 : 0.0}});
}

}  // namespace testing
