// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// Management server core: one bus, one topology, one analytics pipeline fed
// from its own bus subscription, plus the config and token-file loaders.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cloudbus/analytics.hpp"
#include "cloudbus/clock.hpp"
#include "cloudbus/collector.hpp"
#include "cloudbus/event_bus.hpp"
#include "cloudbus/event_model.hpp"
#include "cloudbus/sim_infra.hpp"
#include "cloudbus/topology.hpp"

namespace cloudbus {

struct ServerConfig {
  std::vector<ProbeSpec> probes;
  std::vector<CredentialRecord> credentials;
  std::vector<RateBudget> budgets;
  std::vector<ThresholdRule> rules;
  /// Inventory loaded from "topology"; merged with the scenario's, if any.
  std::optional<Topology> topology;
  std::optional<SimScenario> scenario;
  /// Collector workers; 0 sizes the pool with required_workers.
  int workers = 0;
  AnalyticsOptions analytics;
  std::int64_t heartbeat_ms = 15'000;
};

/// Throws Error(kConfigError) whose message starts with the offending key.
ServerConfig parse_config(const nlohmann::json& document);
ServerConfig load_config_file(const std::filesystem::path& path);

/// {"tokens": [{"token", "roles": [...], "label"}]}. Throws kConfigError.
std::vector<AuthToken> parse_token_file(const nlohmann::json& document);
std::vector<AuthToken> load_token_file(const std::filesystem::path& path);

struct ServerOptions {
  AnalyticsOptions analytics;
  /// Seed for event ids; 0 draws from the system entropy source.
  std::uint64_t id_seed = 0;
  std::size_t analytics_queue = 1u << 20;
};

class ManagementServer {
 public:
  ManagementServer(Topology topology, std::vector<ThresholdRule> rules, ServerOptions options = {});
  ManagementServer(const ManagementServer&) = delete;
  ManagementServer& operator=(const ManagementServer&) = delete;
  ~ManagementServer();

  EventBus& bus() { return bus_; }
  const EventBus& bus() const { return bus_; }
  const Topology& topology() const { return topology_; }
  Topology& topology() { return topology_; }
  AnalyticsEngine& analytics() { return *analytics_; }
  const AnalyticsEngine& analytics() const { return *analytics_; }
  const NormalizationRuleset& rules() const { return rules_; }
  EventIdGenerator& ids() { return ids_; }

  /// normalize() then publish(). Errors propagate (kAuthError first).
  SeqNo ingest_raw(std::string_view token, const RawEvent& raw);
  SeqNo ingest(std::string_view token, const NormalizedEvent& event);
  /// Publishes with the server's own mediator identity.
  SeqNo ingest_internal(const RawEvent& raw);

  /// Feeds every queued delivery to analytics and publishes the derived
  /// events, repeating until the queue is empty. Returns events consumed.
  /// Not to be mixed with start_analytics().
  std::size_t pump_analytics();
  void start_analytics();
  /// Stops the analytics thread after draining what is queued.
  void stop();

  std::uint64_t analytics_dropped() const { return analytics_sub_.dropped_count(); }

 private:
  void analytics_loop(std::stop_token stop);
  void consume_one(const Delivery& d);

  EventIdGenerator ids_;
  EventBus bus_;
  Topology topology_;
  NormalizationRuleset rules_;
  std::string internal_token_;
  std::unique_ptr<AnalyticsEngine> analytics_;
  Subscription analytics_sub_;
  std::jthread analytics_thread_;
};

}  // namespace cloudbus
