// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// Common event format and the normalization pipeline feeding it.
//
// Every observation, whatever its origin (collector probe, external script,
// topology tracker, analytics), travels through the bus as a NormalizedEvent.
// A NormalizationRuleset maps heterogeneous RawEvent payloads onto that
// record; rules are tried in order and the first match wins.

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace cloudbus {

using TimestampMs = std::int64_t;

enum class ComponentKind { kPhysicalHost, kNetworkSwitch, kVm, kService, kExternal };

std::string_view to_string(ComponentKind kind);
std::optional<ComponentKind> parse_component_kind(std::string_view text);

struct ComponentId {
  std::string id;
  ComponentKind kind = ComponentKind::kExternal;

  auto operator<=>(const ComponentId&) const = default;
};

/// True when `id` is nonempty and free of '\n', '\r' and '|'.
bool is_valid_component_id(std::string_view id);

enum class Severity : std::uint8_t { kClear = 0, kInfo = 1, kWarning = 2, kError = 3, kCritical = 4 };

std::string_view to_string(Severity severity);
/// Accepts the lowercase names as well as the numeric levels "0".."4".
std::optional<Severity> parse_severity(std::string_view text);

using Scalar = std::variant<bool, std::int64_t, double, std::string>;
using Payload = std::map<std::string, Scalar, std::less<>>;

/// Renders a scalar the way rule tables and messages see it: booleans as
/// "true"/"false", integers in decimal, doubles in shortest round-trip form.
std::string scalar_to_string(const Scalar& value);

struct RawEvent {
  std::string source_kind;
  TimestampMs received_at = 0;
  Payload payload;
};

struct NormalizedEvent {
  std::string event_id;
  TimestampMs occurred_at = 0;
  ComponentId component;
  std::string event_class;
  Severity severity = Severity::kInfo;
  std::map<std::string, double> metrics;
  std::string message;
  std::string dedup_key;
  std::int64_t count = 1;
  TimestampMs first_seen = 0;
  TimestampMs last_seen = 0;
  std::optional<std::string> correlated_to;

  bool operator==(const NormalizedEvent&) const = default;
};

/// Lowercase, dot-separated tokens of [a-z0-9_-].
bool is_valid_event_class(std::string_view event_class);

std::string dedup_key(const ComponentId& component, std::string_view event_class);

/// Returns a description of the first violated invariant, if any.
std::optional<std::string> check_event(const NormalizedEvent& event);

/// Field-wise equality ignoring event_id.
bool equal_except_id(const NormalizedEvent& a, const NormalizedEvent& b);

// 128-bit identifiers rendered as 32 lowercase hex characters. A seeded
// generator yields a reproducible sequence; the default one is seeded from
// std::random_device. Safe for concurrent use.
class EventIdGenerator {
 public:
  EventIdGenerator();
  explicit EventIdGenerator(std::uint64_t seed);

  std::string next();

  static EventIdGenerator& process_default();

 private:
  std::mutex mu_;
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Normalization rules

struct SeverityMapping {
  /// Payload key whose rendered value is looked up in `table`. Empty means
  /// every event gets `fixed`.
  std::string key;
  std::map<std::string, Severity, std::less<>> table;
  Severity fixed = Severity::kInfo;
};

struct FieldMapping {
  std::string component_key = "target";
  /// Either a payload key holding the kind name, or the fixed default.
  std::string kind_key;
  ComponentKind default_kind = ComponentKind::kExternal;
  std::string class_key;
  std::string default_class;
  SeverityMapping severity;
  /// (payload key, metric name) pairs; the keys are required.
  std::vector<std::pair<std::string, std::string>> metrics;
  /// Payload keys with this prefix become metrics named by the remainder.
  std::string metric_prefix;
  // The following keys are optional: absent keys fall back to defaults.
  std::string occurred_at_key;
  std::string message_key;
  std::string default_message;
  std::string correlated_to_key;
};

struct NormalizationRule {
  std::string name;
  /// Glob over source_kind where '*' matches any run of characters.
  std::string source_pattern = "*";
  std::vector<std::string> required_keys;
  FieldMapping mapping;

  bool matches(const RawEvent& raw) const;
};

struct NormalizationRuleset {
  std::vector<NormalizationRule> rules;

  const NormalizationRule* find(const RawEvent& raw) const;

  /// Rules for the built-in drivers (sim.ping, sim.metrics, collector
  /// probe.* output) followed by the catch-all passthrough rule.
  static NormalizationRuleset builtin();
};

/// Name of the passthrough rule in the built-in ruleset.
inline constexpr std::string_view kPassthroughRule = "passthrough";

/// Converts a raw observation to the common format.
/// Throws Error with kNoMatchingRule, kMissingField, kInvalidComponent or
/// kSchemaViolation (a mapped value has the wrong type or breaks an invariant).
NormalizedEvent normalize(const RawEvent& raw, const NormalizationRuleset& rules,
                          EventIdGenerator& ids = EventIdGenerator::process_default());

/// The payload the passthrough rule maps back onto `event` (minus id and
/// dedup bookkeeping).
RawEvent to_passthrough_raw(const NormalizedEvent& event, std::string source_kind = "passthrough");

// ---------------------------------------------------------------------------
// NDJSON wire format

nlohmann::ordered_json to_json(const NormalizedEvent& event);
/// Throws Error(kSchemaViolation) on missing or mistyped fields or on a
/// broken invariant. Unknown fields are ignored.
NormalizedEvent event_from_json(const nlohmann::json& object);

/// One line, no trailing newline.
std::string encode_ndjson(const NormalizedEvent& event);
/// Throws kMalformedLine when the text is not a single JSON object line.
NormalizedEvent decode_ndjson(std::string_view line);

/// Flattens a JSON object of scalars (nested objects joined with '.') into a
/// payload. Throws kSchemaViolation on arrays or nulls.
Payload payload_from_json(const nlohmann::json& object);
nlohmann::ordered_json payload_to_json(const Payload& payload);

}  // namespace cloudbus
