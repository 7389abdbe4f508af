// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/event_model.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "cloudbus/error.hpp"

namespace cloudbus {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::array<std::pair<ComponentKind, std::string_view>, 5> kKindNames{{
    {ComponentKind::kPhysicalHost, "physical_host"},
    {ComponentKind::kNetworkSwitch, "network_switch"},
    {ComponentKind::kVm, "vm"},
    {ComponentKind::kService, "service"},
    {ComponentKind::kExternal, "external"},
}};

constexpr std::array<std::string_view, 5> kSeverityNames{"clear", "info", "warning", "error",
                                                         "critical"};

bool glob_match(std::string_view pattern, std::string_view text) {
  // Iterative wildcard match with single-star backtracking.
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

[[noreturn]] void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

const Scalar& require(const RawEvent& raw, const std::string& key, const NormalizationRule& rule) {
  auto it = raw.payload.find(key);
  if (it == raw.payload.end()) {
    fail(ErrorCode::kMissingField, "rule '" + rule.name + "' needs payload key '" + key + "'");
  }
  return it->second;
}

const Scalar* lookup(const RawEvent& raw, const std::string& key) {
  if (key.empty()) return nullptr;
  auto it = raw.payload.find(key);
  return it == raw.payload.end() ? nullptr : &it->second;
}

double scalar_to_metric(const Scalar& value, const std::string& key) {
  if (const auto* b = std::get_if<bool>(&value)) return *b ? 1.0 : 0.0;
  if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&value)) {
    if (!std::isfinite(*d)) fail(ErrorCode::kSchemaViolation, "metric '" + key + "' is not finite");
    return *d;
  }
  fail(ErrorCode::kSchemaViolation, "metric '" + key + "' is not numeric");
}

TimestampMs scalar_to_timestamp(const Scalar& value, const std::string& key) {
  if (const auto* i = std::get_if<std::int64_t>(&value)) {
    if (*i >= 0) return *i;
  } else if (const auto* d = std::get_if<double>(&value)) {
    if (*d >= 0 && std::trunc(*d) == *d && *d < 9.2e18) return static_cast<TimestampMs>(*d);
  }
  fail(ErrorCode::kSchemaViolation, "'" + key + "' is not a nonnegative integer timestamp");
}

std::string scalar_as_text(const Scalar& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  return scalar_to_string(value);
}

template <typename T>
T get_field(const json& object, const char* key) {
  auto it = object.find(key);
  if (it == object.end()) fail(ErrorCode::kSchemaViolation, std::string("missing field '") + key + "'");
  try {
    if constexpr (std::is_same_v<T, std::int64_t>) {
      if (!it->is_number_integer()) throw std::invalid_argument("not an integer");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw std::invalid_argument("not a string");
    }
    return it->get<T>();
  } catch (const std::exception&) {
    fail(ErrorCode::kSchemaViolation, std::string("field '") + key + "' has the wrong type");
  }
}

void flatten_into(const json& object, const std::string& prefix, Payload& out) {
  for (const auto& [key, value] : object.items()) {
    std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten_into(value, name, out);
    } else if (value.is_boolean()) {
      out[name] = value.get<bool>();
    } else if (value.is_number_integer()) {
      out[name] = value.get<std::int64_t>();
    } else if (value.is_number_float()) {
      out[name] = value.get<double>();
    } else if (value.is_string()) {
      out[name] = value.get<std::string>();
    } else {
      fail(ErrorCode::kSchemaViolation, "payload key '" + name + "' is not a scalar");
    }
  }
}

}  // namespace

std::string_view to_string(ComponentKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "external";
}

std::optional<ComponentKind> parse_component_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

bool is_valid_component_id(std::string_view id) {
  return !id.empty() && id.find_first_of("\n\r|") == std::string_view::npos;
}

std::string_view to_string(Severity severity) {
  return kSeverityNames[static_cast<std::size_t>(severity)];
}

std::optional<Severity> parse_severity(std::string_view text) {
  for (std::size_t i = 0; i < kSeverityNames.size(); ++i) {
    if (kSeverityNames[i] == text) return static_cast<Severity>(i);
  }
  if (text.size() == 1 && text[0] >= '0' && text[0] <= '4') {
    return static_cast<Severity>(text[0] - '0');
  }
  return std::nullopt;
}

std::string scalar_to_string(const Scalar& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          std::array<char, 64> buf{};
          auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
          return ec == std::errc{} ? std::string(buf.data(), end) : std::string("nan");
        } else {
          return v;
        }
      },
      value);
}

bool is_valid_event_class(std::string_view event_class) {
  if (event_class.empty() || event_class.front() == '.' || event_class.back() == '.') return false;
  char prev = 0;
  for (char c : event_class) {
    const bool token_char = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!token_char && c != '.') return false;
    if (c == '.' && prev == '.') return false;
    prev = c;
  }
  return true;
}

std::string dedup_key(const ComponentId& component, std::string_view event_class) {
  std::string key;
  key.reserve(component.id.size() + 1 + event_class.size());
  key.append(component.id).append("|").append(event_class);
  return key;
}

std::optional<std::string> check_event(const NormalizedEvent& event) {
  if (event.event_id.empty()) return "event_id is empty";
  if (!is_valid_component_id(event.component.id)) return "component id is empty or has reserved characters";
  if (!is_valid_event_class(event.event_class)) return "class '" + event.event_class + "' is not lowercase dotted tokens";
  if (event.count < 1) return "count must be >= 1";
  if (event.first_seen > event.last_seen) return "first_seen is after last_seen";
  if (event.count == 1 && event.first_seen != event.last_seen) return "count 1 requires first_seen == last_seen";
  if (event.occurred_at < 0 || event.first_seen < 0) return "timestamps must be nonnegative";
  if (event.dedup_key != dedup_key(event.component, event.event_class)) return "dedup_key does not match component and class";
  for (const auto& [name, value] : event.metrics) {
    if (!std::isfinite(value)) return "metric '" + name + "' is not finite";
  }
  if (event.correlated_to && event.correlated_to->empty()) return "correlated_to is empty";
  return std::nullopt;
}

bool equal_except_id(const NormalizedEvent& a, const NormalizedEvent& b) {
  NormalizedEvent copy = b;
  copy.event_id = a.event_id;
  return a == copy;
}

EventIdGenerator::EventIdGenerator() {
  std::random_device rd;
  std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd()};
  engine_.seed(seq);
}

EventIdGenerator::EventIdGenerator(std::uint64_t seed) : engine_(seed) {}

std::string EventIdGenerator::next() {
  std::uint64_t hi, lo;
  {
    std::lock_guard lock(mu_);
    hi = engine_();
    lo = engine_();
  }
  std::array<char, 33> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return std::string(buf.data(), 32);
}

EventIdGenerator& EventIdGenerator::process_default() {
  static EventIdGenerator instance;
  return instance;
}

bool NormalizationRule::matches(const RawEvent& raw) const {
  if (!glob_match(source_pattern, raw.source_kind)) return false;
  for (const auto& key : required_keys) {
    if (!raw.payload.contains(key)) return false;
  }
  return true;
}

const NormalizationRule* NormalizationRuleset::find(const RawEvent& raw) const {
  for (const auto& rule : rules) {
    if (rule.matches(raw)) return &rule;
  }
  return nullptr;
}

NormalizationRuleset NormalizationRuleset::builtin() {
  const std::map<std::string, Severity, std::less<>> outcome_severity{
      {"up", Severity::kClear},
      {"degraded", Severity::kWarning},
      {"down", Severity::kCritical},
      {"probe_error", Severity::kError},
  };

  NormalizationRuleset set;

  NormalizationRule ping{.name = "sim.ping", .source_pattern = "sim.ping", .required_keys = {"target", "up"}};
  ping.mapping.kind_key = "kind";
  ping.mapping.default_class = "availability";
  ping.mapping.severity.key = "up";
  ping.mapping.severity.table = {{"true", Severity::kClear}, {"false", Severity::kCritical}};
  ping.mapping.metrics = {{"up", "up"}};
  ping.mapping.occurred_at_key = "observed_at";
  set.rules.push_back(ping);

  NormalizationRule metrics{.name = "sim.metrics", .source_pattern = "sim.metrics", .required_keys = {"target"}};
  metrics.mapping.kind_key = "kind";
  metrics.mapping.class_key = "class";
  metrics.mapping.default_class = "perf";
  metrics.mapping.metric_prefix = "metrics.";
  metrics.mapping.occurred_at_key = "observed_at";
  set.rules.push_back(metrics);

  // Collector output: failed probes carry "error" and no "up".
  NormalizationRule probe_error{.name = "probe.error", .source_pattern = "probe.*", .required_keys = {"target", "error"}};
  probe_error.mapping.kind_key = "kind";
  probe_error.mapping.default_class = "collector.probe_error";
  probe_error.mapping.severity.fixed = Severity::kError;
  probe_error.mapping.metrics = {{"latency_ms", "latency_ms"}};
  probe_error.mapping.occurred_at_key = "started_at";
  probe_error.mapping.message_key = "error";
  set.rules.push_back(probe_error);

  NormalizationRule probe{.name = "probe.availability", .source_pattern = "probe.*", .required_keys = {"target", "up", "outcome"}};
  probe.mapping.kind_key = "kind";
  probe.mapping.class_key = "class";
  probe.mapping.default_class = "availability";
  probe.mapping.severity.key = "outcome";
  probe.mapping.severity.table = outcome_severity;
  probe.mapping.metrics = {{"up", "up"}, {"latency_ms", "latency_ms"}};
  probe.mapping.metric_prefix = "metrics.";
  probe.mapping.occurred_at_key = "started_at";
  probe.mapping.message_key = "message";
  set.rules.push_back(probe);

  NormalizationRule passthrough{.name = std::string(kPassthroughRule),
                                .source_pattern = "*",
                                .required_keys = {"component.id", "component.kind", "class", "severity"}};
  passthrough.mapping.component_key = "component.id";
  passthrough.mapping.kind_key = "component.kind";
  passthrough.mapping.class_key = "class";
  passthrough.mapping.severity.key = "severity";
  for (std::size_t i = 0; i < kSeverityNames.size(); ++i) {
    passthrough.mapping.severity.table[std::string(kSeverityNames[i])] = static_cast<Severity>(i);
    passthrough.mapping.severity.table[std::to_string(i)] = static_cast<Severity>(i);
  }
  passthrough.mapping.metric_prefix = "metrics.";
  passthrough.mapping.occurred_at_key = "occurred_at";
  passthrough.mapping.message_key = "message";
  passthrough.mapping.correlated_to_key = "correlated_to";
  set.rules.push_back(passthrough);

  return set;
}

NormalizedEvent normalize(const RawEvent& raw, const NormalizationRuleset& rules, EventIdGenerator& ids) {
  if (raw.received_at < 0) fail(ErrorCode::kSchemaViolation, "received_at is negative");
  const NormalizationRule* rule = rules.find(raw);
  if (rule == nullptr) {
    fail(ErrorCode::kNoMatchingRule, "no normalization rule matches source '" + raw.source_kind + "'");
  }
  const FieldMapping& m = rule->mapping;

  NormalizedEvent ev;
  ev.component.id = scalar_as_text(require(raw, m.component_key, *rule));
  if (!is_valid_component_id(ev.component.id)) {
    fail(ErrorCode::kInvalidComponent, "component id '" + ev.component.id + "' is invalid");
  }
  ev.component.kind = m.default_kind;
  if (!m.kind_key.empty()) {
    const std::string kind_text = scalar_as_text(require(raw, m.kind_key, *rule));
    auto kind = parse_component_kind(kind_text);
    if (!kind) fail(ErrorCode::kInvalidComponent, "unknown component kind '" + kind_text + "'");
    ev.component.kind = *kind;
  }

  ev.event_class = m.default_class;
  if (!m.class_key.empty()) {
    if (const Scalar* cls = lookup(raw, m.class_key)) {
      ev.event_class = scalar_as_text(*cls);
    } else if (m.default_class.empty()) {
      require(raw, m.class_key, *rule);
    }
  }
  if (!is_valid_event_class(ev.event_class)) {
    fail(ErrorCode::kSchemaViolation, "class '" + ev.event_class + "' is not lowercase dotted tokens");
  }

  ev.severity = m.severity.fixed;
  if (!m.severity.key.empty()) {
    const std::string text = scalar_as_text(require(raw, m.severity.key, *rule));
    auto it = m.severity.table.find(text);
    if (it == m.severity.table.end()) {
      fail(ErrorCode::kSchemaViolation, "severity value '" + text + "' is not mapped by rule '" + rule->name + "'");
    }
    ev.severity = it->second;
  }

  for (const auto& [key, name] : m.metrics) {
    ev.metrics[name] = scalar_to_metric(require(raw, key, *rule), key);
  }
  if (!m.metric_prefix.empty()) {
    for (auto it = raw.payload.lower_bound(m.metric_prefix);
         it != raw.payload.end() && it->first.starts_with(m.metric_prefix); ++it) {
      std::string name = it->first.substr(m.metric_prefix.size());
      if (name.empty()) continue;
      ev.metrics[name] = scalar_to_metric(it->second, it->first);
    }
  }

  ev.occurred_at = raw.received_at;
  if (const Scalar* at = lookup(raw, m.occurred_at_key)) ev.occurred_at = scalar_to_timestamp(*at, m.occurred_at_key);
  ev.message = m.default_message;
  if (const Scalar* msg = lookup(raw, m.message_key)) ev.message = scalar_as_text(*msg);
  if (const Scalar* corr = lookup(raw, m.correlated_to_key)) {
    std::string target = scalar_as_text(*corr);
    if (!target.empty()) ev.correlated_to = std::move(target);
  }

  ev.dedup_key = dedup_key(ev.component, ev.event_class);
  ev.count = 1;
  ev.first_seen = ev.last_seen = ev.occurred_at;
  ev.event_id = ids.next();
  return ev;
}

RawEvent to_passthrough_raw(const NormalizedEvent& event, std::string source_kind) {
  RawEvent raw{.source_kind = std::move(source_kind), .received_at = event.occurred_at, .payload = {}};
  raw.payload["component.id"] = event.component.id;
  raw.payload["component.kind"] = std::string(to_string(event.component.kind));
  raw.payload["class"] = event.event_class;
  raw.payload["severity"] = std::string(to_string(event.severity));
  raw.payload["occurred_at"] = static_cast<std::int64_t>(event.occurred_at);
  raw.payload["message"] = event.message;
  for (const auto& [name, value] : event.metrics) raw.payload["metrics." + name] = value;
  if (event.correlated_to) raw.payload["correlated_to"] = *event.correlated_to;
  return raw;
}

ordered_json to_json(const NormalizedEvent& event) {
  ordered_json j;
  j["event_id"] = event.event_id;
  j["occurred_at"] = event.occurred_at;
  j["component"] = {{"id", event.component.id}, {"kind", to_string(event.component.kind)}};
  j["class"] = event.event_class;
  j["severity"] = to_string(event.severity);
  ordered_json metrics = ordered_json::object();
  for (const auto& [name, value] : event.metrics) metrics[name] = value;
  j["metrics"] = std::move(metrics);
  j["message"] = event.message;
  j["dedup_key"] = event.dedup_key;
  j["count"] = event.count;
  j["first_seen"] = event.first_seen;
  j["last_seen"] = event.last_seen;
  j["correlated_to"] = event.correlated_to ? ordered_json(*event.correlated_to) : ordered_json(nullptr);
  return j;
}

NormalizedEvent event_from_json(const json& object) {
  if (!object.is_object()) fail(ErrorCode::kSchemaViolation, "event is not a JSON object");
  NormalizedEvent ev;
  ev.event_id = get_field<std::string>(object, "event_id");
  ev.occurred_at = get_field<std::int64_t>(object, "occurred_at");

  auto comp = object.find("component");
  if (comp == object.end() || !comp->is_object()) fail(ErrorCode::kSchemaViolation, "missing object field 'component'");
  ev.component.id = get_field<std::string>(*comp, "id");
  const auto kind_text = get_field<std::string>(*comp, "kind");
  auto kind = parse_component_kind(kind_text);
  if (!kind) fail(ErrorCode::kSchemaViolation, "unknown component kind '" + kind_text + "'");
  ev.component.kind = *kind;

  ev.event_class = get_field<std::string>(object, "class");
  const auto severity_text = get_field<std::string>(object, "severity");
  auto severity = parse_severity(severity_text);
  if (!severity) fail(ErrorCode::kSchemaViolation, "unknown severity '" + severity_text + "'");
  ev.severity = *severity;

  auto metrics = object.find("metrics");
  if (metrics == object.end() || !metrics->is_object()) fail(ErrorCode::kSchemaViolation, "missing object field 'metrics'");
  for (const auto& [name, value] : metrics->items()) {
    if (!value.is_number()) fail(ErrorCode::kSchemaViolation, "metric '" + name + "' is not a number");
    ev.metrics[name] = value.get<double>();
  }

  ev.message = get_field<std::string>(object, "message");
  ev.dedup_key = get_field<std::string>(object, "dedup_key");
  ev.count = get_field<std::int64_t>(object, "count");
  ev.first_seen = get_field<std::int64_t>(object, "first_seen");
  ev.last_seen = get_field<std::int64_t>(object, "last_seen");
  if (auto corr = object.find("correlated_to"); corr != object.end() && !corr->is_null()) {
    if (!corr->is_string()) fail(ErrorCode::kSchemaViolation, "field 'correlated_to' has the wrong type");
    ev.correlated_to = corr->get<std::string>();
  }

  if (auto problem = check_event(ev)) fail(ErrorCode::kSchemaViolation, *problem);
  return ev;
}

std::string encode_ndjson(const NormalizedEvent& event) {
  // dump() escapes control characters, so the line never embeds a newline.
  return to_json(event).dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

NormalizedEvent decode_ndjson(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.find('\n') != std::string_view::npos) fail(ErrorCode::kMalformedLine, "line contains an embedded newline");
  json parsed = json::parse(line, nullptr, false);
  if (parsed.is_discarded()) fail(ErrorCode::kMalformedLine, "line is not valid JSON");
  if (!parsed.is_object()) fail(ErrorCode::kMalformedLine, "line is not a JSON object");
  return event_from_json(parsed);
}

Payload payload_from_json(const json& object) {
  if (!object.is_object()) fail(ErrorCode::kSchemaViolation, "payload is not a JSON object");
  Payload out;
  flatten_into(object, "", out);
  return out;
}

ordered_json payload_to_json(const Payload& payload) {
  ordered_json j = ordered_json::object();
  for (const auto& [key, value] : payload) {
    std::visit([&](const auto& v) { j[key] = v; }, value);
  }
  return j;
}

}  // namespace cloudbus
