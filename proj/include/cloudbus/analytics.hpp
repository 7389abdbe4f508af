// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// Analytics over normalized events: threshold testing, availability
// measurement, deduplication and topology-aware root-cause analysis.

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cloudbus/event_bus.hpp"
#include "cloudbus/event_model.hpp"
#include "cloudbus/topology.hpp"

namespace cloudbus {

inline constexpr std::string_view kAvailabilityClass = "availability";
inline constexpr TimestampMs kDefaultCorrelationWindowMs = 30'000;

// ---------------------------------------------------------------------------
// Thresholds

enum class Comparator { kGt, kGe, kLt, kLe };

std::string_view to_string(Comparator comparator);
std::optional<Comparator> parse_comparator(std::string_view text);
bool compare(Comparator comparator, double sample, double threshold);

struct ThresholdRule {
  std::string rule_id;
  EventFilter selector;
  std::string metric;
  Comparator comparator = Comparator::kGt;
  double value = 0.0;
  int consecutive = 1;
  Severity breach_severity = Severity::kWarning;
};

/// Streaming form of eval_threshold; keeps one episode state per component.
class ThresholdEvaluator {
 public:
  explicit ThresholdEvaluator(ThresholdRule rule);

  const ThresholdRule& rule() const { return rule_; }

  /// Returns a threshold.breach or threshold.clear event when `sample`
  /// opens or closes an episode. Samples the selector rejects, or that lack
  /// the metric, are ignored.
  std::optional<NormalizedEvent> observe(const NormalizedEvent& sample,
                                         EventIdGenerator& ids = EventIdGenerator::process_default());

 private:
  struct Episode {
    int run = 0;
    bool open = false;
  };

  NormalizedEvent make_event(const NormalizedEvent& sample, bool breach, EventIdGenerator& ids) const;

  ThresholdRule rule_;
  std::map<std::string, Episode> episodes_;
};

std::vector<NormalizedEvent> eval_threshold(const ThresholdRule& rule, std::span<const NormalizedEvent> samples,
                                            EventIdGenerator& ids = EventIdGenerator::process_default());

// ---------------------------------------------------------------------------
// Availability

struct AvailabilityWindow {
  ComponentId component;
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;
  std::int64_t up_ms = 0;
  std::int64_t known_ms = 0;
  /// Absent when nothing is known about the window.
  std::optional<double> ratio;
};

/// Integrates the last-observation-carried-forward state over
/// [start_ms, end_ms). Only availability events of `component` with an "up"
/// metric count; time before the first observation is unknown.
/// Throws kInvalidArgument when end_ms < start_ms.
AvailabilityWindow availability(const ComponentId& component, TimestampMs start_ms, TimestampMs end_ms,
                                std::span<const NormalizedEvent> events);

// ---------------------------------------------------------------------------
// Deduplication

enum class DedupAction {
  kNew,      // stored as a new open entry
  kUpdated,  // merged into the open entry with the same key and severity
  kCleared,  // clear event closed the open entry for its key
  kIgnored,  // clear event with nothing open
};

struct DedupOutcome {
  DedupAction action = DedupAction::kNew;
  /// The stored entry after the operation (the closed one for kCleared, the
  /// incoming event for kNew and kIgnored).
  NormalizedEvent event;
};

class DedupStore {
 public:
  DedupOutcome deduplicate(const NormalizedEvent& event);

  const std::map<std::string, NormalizedEvent>& open() const { return open_; }
  /// Entries closed by a clear event or superseded by a different severity.
  const std::vector<NormalizedEvent>& closed() const { return closed_; }
  std::optional<NormalizedEvent> find_open(const std::string& key) const;

 private:
  std::map<std::string, NormalizedEvent> open_;
  std::vector<NormalizedEvent> closed_;
};

// ---------------------------------------------------------------------------
// Root cause

struct TimeWindow {
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;

  bool contains(TimestampMs t) const { return t >= start_ms && t <= end_ms; }
  bool operator==(const TimeWindow&) const = default;
};

struct RcaResult {
  TimeWindow window;
  std::set<ComponentId> roots;
  /// Symptom -> nearest down ancestor.
  std::map<ComponentId, ComponentId> suppressed;

  bool operator==(const RcaResult&) const = default;
};

/// Roots are down components with no down ancestor along hosts/depends_on.
/// Every other down component maps to its nearest down ancestor (fewest hops,
/// ties to the smallest id). Throws kUnknownComponent.
RcaResult root_cause(const std::set<ComponentId>& down, const Topology& graph, TimeWindow window);

/// Follows the suppression map to the root explaining `component`.
ComponentId ultimate_root(const RcaResult& result, const ComponentId& component);

/// Components with an availability event reporting up == 0 inside `window`.
std::set<ComponentId> down_set(std::span<const NormalizedEvent> events, TimeWindow window);

struct Correlation {
  RcaResult rca;
  /// Input events, with correlated_to set on the in-window down events of
  /// suppressed components (pointing at their root's earliest down event).
  std::vector<NormalizedEvent> events;
};

/// Components absent from the graph are left uncorrelated.
Correlation correlate(std::span<const NormalizedEvent> events, const Topology& graph, TimeWindow window);

nlohmann::ordered_json to_json(const AvailabilityWindow& window);
nlohmann::ordered_json to_json(const RcaResult& result);

// ---------------------------------------------------------------------------
// Pipeline stage

struct AnalyticsOptions {
  TimestampMs correlation_window_ms = kDefaultCorrelationWindowMs;
  /// Oldest availability observations are discarded beyond this many.
  std::size_t history_limit = 2'000'000;
};

// One analytics pipeline instance fed from a single bus subscription.
// consume() is called from one thread; the query methods may be called
// concurrently from others.
class AnalyticsEngine {
 public:
  AnalyticsEngine(const Topology& topology, std::vector<ThresholdRule> rules, AnalyticsOptions options = {},
                  EventIdGenerator& ids = EventIdGenerator::process_default());

  /// Records the event and returns derived threshold events to publish.
  std::vector<NormalizedEvent> consume(const NormalizedEvent& event);

  /// Throws kUnknownComponent when the component was never observed and is
  /// not in the topology; kInvalidArgument on end < start.
  AvailabilityWindow availability(std::string_view component_id, TimestampMs start_ms, TimestampMs end_ms) const;
  RcaResult rca(TimeWindow window) const;
  /// Uses the configured correlation window ending at `at`.
  Correlation correlate_at(TimestampMs at) const;
  Correlation correlate_window(TimeWindow window) const;

  std::vector<NormalizedEvent> availability_history() const;
  std::map<std::string, NormalizedEvent> open_events() const;
  std::vector<NormalizedEvent> dedup_closed() const;
  std::size_t consumed() const;
  const AnalyticsOptions& options() const { return options_; }

 private:
  const Topology& topology_;
  AnalyticsOptions options_;
  EventIdGenerator& ids_;

  mutable std::mutex mu_;
  std::vector<ThresholdEvaluator> evaluators_;
  DedupStore dedup_;
  std::vector<NormalizedEvent> history_;
  std::map<std::string, ComponentId> seen_;
  std::size_t consumed_ = 0;
};

}  // namespace cloudbus
