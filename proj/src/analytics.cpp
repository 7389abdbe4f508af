// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/analytics.hpp"

#include <algorithm>

#include "cloudbus/error.hpp"

namespace cloudbus {

namespace {

using nlohmann::ordered_json;

std::string format_value(double v) { return scalar_to_string(Scalar{v}); }

bool is_down_observation(const NormalizedEvent& ev) {
  if (ev.event_class != kAvailabilityClass) return false;
  auto it = ev.metrics.find("up");
  return it != ev.metrics.end() && it->second < 0.5;
}

}  // namespace

std::string_view to_string(Comparator comparator) {
  switch (comparator) {
    case Comparator::kGt: return "gt";
    case Comparator::kGe: return "ge";
    case Comparator::kLt: return "lt";
    case Comparator::kLe: return "le";
  }
  return "gt";
}

std::optional<Comparator> parse_comparator(std::string_view text) {
  if (text == "gt") return Comparator::kGt;
  if (text == "ge") return Comparator::kGe;
  if (text == "lt") return Comparator::kLt;
  if (text == "le") return Comparator::kLe;
  return std::nullopt;
}

bool compare(Comparator comparator, double sample, double threshold) {
  switch (comparator) {
    case Comparator::kGt: return sample > threshold;
    case Comparator::kGe: return sample >= threshold;
    case Comparator::kLt: return sample < threshold;
    case Comparator::kLe: return sample <= threshold;
  }
  return false;
}

ThresholdEvaluator::ThresholdEvaluator(ThresholdRule rule) : rule_(std::move(rule)) {
  if (rule_.consecutive < 1) throw Error(ErrorCode::kInvalidArgument, "rule " + rule_.rule_id + ": consecutive must be >= 1");
  if (rule_.metric.empty()) throw Error(ErrorCode::kInvalidArgument, "rule " + rule_.rule_id + ": metric is empty");
}

NormalizedEvent ThresholdEvaluator::make_event(const NormalizedEvent& sample, bool breach, EventIdGenerator& ids) const {
  NormalizedEvent ev;
  ev.event_id = ids.next();
  ev.occurred_at = sample.occurred_at;
  ev.component = sample.component;
  ev.event_class = breach ? "threshold.breach" : "threshold.clear";
  ev.severity = breach ? rule_.breach_severity : Severity::kClear;
  ev.metrics = {{rule_.metric, sample.metrics.at(rule_.metric)}, {"threshold", rule_.value}};
  ev.message = "rule " + rule_.rule_id + ": " + rule_.metric + " " + std::string(to_string(rule_.comparator)) + " " +
               format_value(rule_.value) + (breach ? " for " + std::to_string(rule_.consecutive) + " samples" : " cleared");
  ev.dedup_key = dedup_key(ev.component, ev.event_class);
  ev.first_seen = ev.last_seen = ev.occurred_at;
  return ev;
}

std::optional<NormalizedEvent> ThresholdEvaluator::observe(const NormalizedEvent& sample, EventIdGenerator& ids) {
  if (sample.event_class.starts_with("threshold.")) return std::nullopt;
  if (!rule_.selector.matches(sample)) return std::nullopt;
  auto metric = sample.metrics.find(rule_.metric);
  if (metric == sample.metrics.end()) return std::nullopt;

  Episode& ep = episodes_[sample.component.id];
  if (compare(rule_.comparator, metric->second, rule_.value)) {
    ++ep.run;
    if (!ep.open && ep.run >= rule_.consecutive) {
      ep.open = true;
      return make_event(sample, true, ids);
    }
    return std::nullopt;
  }
  ep.run = 0;
  if (ep.open) {
    ep.open = false;
    return make_event(sample, false, ids);
  }
  return std::nullopt;
}

std::vector<NormalizedEvent> eval_threshold(const ThresholdRule& rule, std::span<const NormalizedEvent> samples,
                                            EventIdGenerator& ids) {
  ThresholdEvaluator evaluator(rule);
  std::vector<NormalizedEvent> out;
  for (const auto& s : samples) {
    if (auto ev = evaluator.observe(s, ids)) out.push_back(std::move(*ev));
  }
  return out;
}

AvailabilityWindow availability(const ComponentId& component, TimestampMs start_ms, TimestampMs end_ms,
                                std::span<const NormalizedEvent> events) {
  if (end_ms < start_ms) throw Error(ErrorCode::kInvalidArgument, "availability window ends before it starts");
  AvailabilityWindow w{.component = component, .start_ms = start_ms, .end_ms = end_ms};

  std::vector<std::pair<TimestampMs, bool>> obs;
  for (const auto& ev : events) {
    if (ev.component.id != component.id || ev.event_class != kAvailabilityClass) continue;
    auto up = ev.metrics.find("up");
    if (up == ev.metrics.end()) continue;
    obs.emplace_back(ev.occurred_at, up->second >= 0.5);
  }
  std::stable_sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::optional<bool> state;
  TimestampMs cursor = start_ms;
  auto advance = [&](TimestampMs to) {
    if (state && to > cursor) {
      w.known_ms += to - cursor;
      if (*state) w.up_ms += to - cursor;
    }
    cursor = std::max(cursor, to);
  };
  for (const auto& [t, up] : obs) {
    if (t >= end_ms) break;
    advance(std::max(t, start_ms));
    state = up;
  }
  advance(end_ms);
  if (w.known_ms > 0) w.ratio = static_cast<double>(w.up_ms) / static_cast<double>(w.known_ms);
  return w;
}

DedupOutcome DedupStore::deduplicate(const NormalizedEvent& event) {
  auto it = open_.find(event.dedup_key);
  if (event.severity == Severity::kClear) {
    if (it == open_.end()) return {DedupAction::kIgnored, event};
    NormalizedEvent closed = std::move(it->second);
    open_.erase(it);
    closed_.push_back(closed);
    return {DedupAction::kCleared, std::move(closed)};
  }
  if (it != open_.end() && it->second.severity == event.severity) {
    NormalizedEvent& existing = it->second;
    ++existing.count;
    existing.last_seen = std::max(existing.last_seen, event.occurred_at);
    return {DedupAction::kUpdated, existing};
  }
  if (it != open_.end()) {
    closed_.push_back(std::move(it->second));
    open_.erase(it);
  }
  open_.emplace(event.dedup_key, event);
  return {DedupAction::kNew, event};
}

std::optional<NormalizedEvent> DedupStore::find_open(const std::string& key) const {
  auto it = open_.find(key);
  if (it == open_.end()) return std::nullopt;
  return it->second;
}

RcaResult root_cause(const std::set<ComponentId>& down, const Topology& graph, TimeWindow window) {
  RcaResult result{.window = window};
  std::map<std::string, ComponentId> down_by_id;
  for (const auto& c : down) {
    if (!graph.contains(c.id)) throw Error(ErrorCode::kUnknownComponent, "unknown component '" + c.id + "'");
    down_by_id.emplace(c.id, c);
  }

  for (const auto& c : down) {
    // Upward breadth-first levels; the first level holding a down node
    // names the nearest down ancestor.
    std::set<std::string> seen{c.id};
    std::set<std::string> level{c.id};
    std::optional<ComponentId> nearest;
    while (!level.empty() && !nearest) {
      std::set<std::string> next;
      for (const auto& id : level) {
        for (auto& p : graph.parents(id)) {
          if (seen.insert(p).second) next.insert(p);
        }
      }
      for (const auto& id : next) {
        if (auto it = down_by_id.find(id); it != down_by_id.end()) {
          nearest = it->second;
          break;
        }
      }
      level = std::move(next);
    }
    if (nearest) {
      result.suppressed.emplace(c, *nearest);
    } else {
      result.roots.insert(c);
    }
  }
  return result;
}

ComponentId ultimate_root(const RcaResult& result, const ComponentId& component) {
  ComponentId cur = component;
  for (std::size_t guard = 0; guard <= result.suppressed.size(); ++guard) {
    auto it = result.suppressed.find(cur);
    if (it == result.suppressed.end()) return cur;
    cur = it->second;
  }
  return cur;
}

std::set<ComponentId> down_set(std::span<const NormalizedEvent> events, TimeWindow window) {
  std::set<ComponentId> down;
  for (const auto& ev : events) {
    if (window.contains(ev.occurred_at) && is_down_observation(ev)) down.insert(ev.component);
  }
  return down;
}

Correlation correlate(std::span<const NormalizedEvent> events, const Topology& graph, TimeWindow window) {
  Correlation out;
  std::set<ComponentId> down;
  for (const auto& c : down_set(events, window)) {
    if (graph.contains(c.id)) down.insert(c);
  }
  out.rca = root_cause(down, graph, window);
  out.events.assign(events.begin(), events.end());
  if (out.rca.suppressed.empty()) return out;

  std::map<ComponentId, std::pair<TimestampMs, std::string>> root_event;
  for (const auto& ev : events) {
    if (!window.contains(ev.occurred_at) || !is_down_observation(ev) || !out.rca.roots.contains(ev.component)) continue;
    auto [it, inserted] = root_event.try_emplace(ev.component, ev.occurred_at, ev.event_id);
    if (!inserted && ev.occurred_at < it->second.first) it->second = {ev.occurred_at, ev.event_id};
  }
  for (auto& ev : out.events) {
    if (!window.contains(ev.occurred_at) || !is_down_observation(ev)) continue;
    if (!out.rca.suppressed.contains(ev.component)) continue;
    ComponentId root = ultimate_root(out.rca, ev.component);
    if (auto it = root_event.find(root); it != root_event.end()) ev.correlated_to = it->second.second;
  }
  return out;
}

ordered_json to_json(const AvailabilityWindow& w) {
  ordered_json j;
  j["component"] = {{"id", w.component.id}, {"kind", to_string(w.component.kind)}};
  j["start_ms"] = w.start_ms;
  j["end_ms"] = w.end_ms;
  j["up_ms"] = w.up_ms;
  j["known_ms"] = w.known_ms;
  j["ratio"] = w.ratio ? ordered_json(*w.ratio) : ordered_json(nullptr);
  return j;
}

ordered_json to_json(const RcaResult& r) {
  ordered_json j;
  j["window"] = {{"start_ms", r.window.start_ms}, {"end_ms", r.window.end_ms}};
  ordered_json roots = ordered_json::array();
  for (const auto& c : r.roots) roots.push_back(c.id);
  j["roots"] = std::move(roots);
  ordered_json suppressed = ordered_json::object();
  for (const auto& [symptom, cause] : r.suppressed) suppressed[symptom.id] = cause.id;
  j["suppressed"] = std::move(suppressed);
  return j;
}

AnalyticsEngine::AnalyticsEngine(const Topology& topology, std::vector<ThresholdRule> rules, AnalyticsOptions options,
                                 EventIdGenerator& ids)
    : topology_(topology), options_(options), ids_(ids) {
  for (auto& r : rules) evaluators_.emplace_back(std::move(r));
}

std::vector<NormalizedEvent> AnalyticsEngine::consume(const NormalizedEvent& event) {
  std::lock_guard lock(mu_);
  ++consumed_;
  seen_.try_emplace(event.component.id, event.component);
  dedup_.deduplicate(event);
  if (event.event_class == kAvailabilityClass && event.metrics.contains("up")) {
    history_.push_back(event);
    if (history_.size() > options_.history_limit) {
      history_.erase(history_.begin(), history_.begin() + static_cast<std::ptrdiff_t>(history_.size() / 2));
    }
  }
  std::vector<NormalizedEvent> derived;
  for (auto& evaluator : evaluators_) {
    if (auto ev = evaluator.observe(event, ids_)) derived.push_back(std::move(*ev));
  }
  return derived;
}

AvailabilityWindow AnalyticsEngine::availability(std::string_view component_id, TimestampMs start_ms,
                                                 TimestampMs end_ms) const {
  ComponentId component;
  std::vector<NormalizedEvent> events;
  {
    std::lock_guard lock(mu_);
    if (auto it = seen_.find(std::string(component_id)); it != seen_.end()) {
      component = it->second;
    } else if (auto node = topology_.node(component_id)) {
      component = node->component;
    } else {
      throw Error(ErrorCode::kUnknownComponent, "unknown component '" + std::string(component_id) + "'");
    }
    for (const auto& ev : history_) {
      if (ev.component.id == component.id) events.push_back(ev);
    }
  }
  return cloudbus::availability(component, start_ms, end_ms, events);
}

RcaResult AnalyticsEngine::rca(TimeWindow window) const { return correlate_window(window).rca; }

Correlation AnalyticsEngine::correlate_at(TimestampMs at) const {
  return correlate_window({at - options_.correlation_window_ms, at});
}

Correlation AnalyticsEngine::correlate_window(TimeWindow window) const {
  if (window.end_ms < window.start_ms) throw Error(ErrorCode::kInvalidArgument, "window ends before it starts");
  std::vector<NormalizedEvent> events;
  {
    std::lock_guard lock(mu_);
    for (const auto& ev : history_) {
      if (window.contains(ev.occurred_at)) events.push_back(ev);
    }
  }
  return correlate(events, topology_, window);
}

std::vector<NormalizedEvent> AnalyticsEngine::availability_history() const {
  std::lock_guard lock(mu_);
  return history_;
}

std::map<std::string, NormalizedEvent> AnalyticsEngine::open_events() const {
  std::lock_guard lock(mu_);
  return dedup_.open();
}

std::vector<NormalizedEvent> AnalyticsEngine::dedup_closed() const {
  std::lock_guard lock(mu_);
  return dedup_.closed();
}

std::size_t AnalyticsEngine::consumed() const {
  std::lock_guard lock(mu_);
  return consumed_;
}

}  // namespace cloudbus
