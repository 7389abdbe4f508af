// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/sim_infra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cloudbus/error.hpp"
#include "json_fields.hpp"

namespace cloudbus {
namespace detail {
extern const std::pair<std::string_view, std::string_view> kBundledScenarios[];
extern const std::size_t kBundledScenarioCount;
}  // namespace detail

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::int64_t kMaxComponents = 100'000;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Uniform in [0, 1), a pure function of its arguments.
double unit(std::uint64_t seed, std::string_view id, TimestampMs t, std::uint64_t stream) {
  const std::uint64_t h = splitmix(seed ^ splitmix(fnv1a(id) ^ splitmix(static_cast<std::uint64_t>(t) + stream)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::kInvalidScenario, what); }

std::int64_t component_count(const SimScenario& s) {
  const std::int64_t h = s.hosts;
  const std::int64_t v = h * s.vms_per_host;
  return h + v + v * s.services_per_vm;
}

std::set<std::string> component_ids(const SimScenario& s) {
  std::set<std::string> ids;
  for (int h = 1; h <= s.hosts; ++h) {
    ids.insert(host_id(h));
    for (int i = 1; i <= s.vms_per_host; ++i) {
      ids.insert(vm_id(h, i));
      for (int j = 1; j <= s.services_per_vm; ++j) ids.insert(service_id(h, i, j));
    }
  }
  return ids;
}

std::vector<Interval> merge(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) {
    return a.start_ms != b.start_ms ? a.start_ms < b.start_ms : a.end_ms < b.end_ms;
  });
  std::vector<Interval> out;
  for (const Interval& iv : v) {
    if (!out.empty() && iv.start_ms <= out.back().end_ms) {
      out.back().end_ms = std::max(out.back().end_ms, iv.end_ms);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(MissExpectation expectation) {
  switch (expectation) {
    case MissExpectation::kNone: return "none";
    case MissExpectation::kSome: return "some";
    case MissExpectation::kAny: return "any";
  }
  return "any";
}

std::vector<std::string> bundled_scenario_names() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < detail::kBundledScenarioCount; ++i) out.emplace_back(detail::kBundledScenarios[i].first);
  return out;
}

std::optional<SimScenario> bundled_scenario(std::string_view name) {
  for (std::size_t i = 0; i < detail::kBundledScenarioCount; ++i) {
    if (detail::kBundledScenarios[i].first == name) {
      return scenario_from_json(json::parse(detail::kBundledScenarios[i].second));
    }
  }
  return std::nullopt;
}

std::string host_id(int h) { return "host-" + std::to_string(h); }
std::string vm_id(int h, int i) { return "vm-" + std::to_string(h) + "-" + std::to_string(i); }
std::string service_id(int h, int i, int j) {
  return "svc-" + std::to_string(h) + "-" + std::to_string(i) + "-" + std::to_string(j);
}

void validate(const SimScenario& s) {
  if (s.hosts < 1) invalid("hosts must be >= 1");
  if (s.vms_per_host < 0) invalid("vms_per_host must be >= 0");
  if (s.services_per_vm < 0) invalid("services_per_vm must be >= 0");
  if (s.hosts > kMaxComponents || s.vms_per_host > kMaxComponents || s.services_per_vm > kMaxComponents ||
      component_count(s) > kMaxComponents) {
    invalid("scenario exceeds " + std::to_string(kMaxComponents) + " components");
  }
  if (s.horizon_ms <= 0) invalid("horizon_ms must be > 0");
  if (s.probe_period_ms <= 0) invalid("probe_period_ms must be > 0");
  if (s.probe_deadline_ms <= 0 || s.probe_deadline_ms > s.probe_period_ms) {
    invalid("probe_deadline_ms must be in (0, probe_period_ms]");
  }
  if (!std::isfinite(s.ping_latency_ms) || s.ping_latency_ms < 0) invalid("ping_latency_ms must be >= 0");
  if (!std::isfinite(s.metrics_latency_ms) || s.metrics_latency_ms < 0) invalid("metrics_latency_ms must be >= 0");

  const auto ids = component_ids(s);
  for (std::size_t k = 0; k < s.failures.size(); ++k) {
    const FailureSpec& f = s.failures[k];
    const std::string where = "failures[" + std::to_string(k) + "]";
    if (!ids.contains(f.component)) invalid(where + ": unknown component '" + f.component + "'");
    if (f.down_at_ms < 0) invalid(where + ": down_at_ms must be >= 0");
    if (f.down_at_ms >= f.up_at_ms) invalid(where + ": down_at_ms must be < up_at_ms");
    if (f.up_at_ms > s.horizon_ms) invalid(where + ": up_at_ms must be <= horizon_ms");
  }
  if (s.rca_window && s.rca_window->end_ms < s.rca_window->start_ms) invalid("rca_window: end_ms < start_ms");
  if (s.expect.roots) {
    for (const auto& r : *s.expect.roots) {
      if (!ids.contains(r)) invalid("expect.roots: unknown component '" + r + "'");
    }
  }
}

SimScenario scenario_from_json(const json& doc) {
  using namespace detail;
  require_object(doc, "");
  SimScenario s;
  const json* sc = member(doc, "scenario");
  if (sc == nullptr) config_fail("scenario", "missing required key");
  require_object(*sc, "scenario");
  const std::string p = "scenario";
  s.name = get_or<std::string>(*sc, p, "name", get_or<std::string>(doc, "", "name", s.name));
  s.seed = get_or<std::uint64_t>(*sc, p, "seed", s.seed);
  s.hosts = need<int>(*sc, p, "hosts");
  s.vms_per_host = get_or<int>(*sc, p, "vms_per_host", 0);
  s.services_per_vm = get_or<int>(*sc, p, "services_per_vm", 0);
  s.horizon_ms = need<std::int64_t>(*sc, p, "horizon_ms");
  s.probe_period_ms = get_or<std::int64_t>(*sc, p, "probe_period_ms", s.probe_period_ms);
  s.probe_deadline_ms = get_or<std::int64_t>(*sc, p, "probe_deadline_ms", s.probe_period_ms);
  s.ping_latency_ms = get_or<double>(*sc, p, "ping_latency_ms", s.ping_latency_ms);
  s.metrics_latency_ms = get_or<double>(*sc, p, "metrics_latency_ms", s.metrics_latency_ms);
  s.metrics_probes = get_or<bool>(*sc, p, "metrics_probes", s.metrics_probes);

  if (const json* fs = member(doc, "failures")) {
    require_array(*fs, "failures");
    for (std::size_t i = 0; i < fs->size(); ++i) {
      const std::string fp = index_path("failures", i);
      const json& f = (*fs)[i];
      require_object(f, fp);
      s.failures.push_back(FailureSpec{.component = need<std::string>(f, fp, "component"),
                                       .down_at_ms = need<std::int64_t>(f, fp, "down_at_ms"),
                                       .up_at_ms = need<std::int64_t>(f, fp, "up_at_ms")});
    }
  }
  if (const json* w = member(doc, "rca_window")) {
    require_object(*w, "rca_window");
    s.rca_window = TimeWindow{need<std::int64_t>(*w, "rca_window", "start_ms"),
                              need<std::int64_t>(*w, "rca_window", "end_ms")};
  }
  if (const json* e = member(doc, "expect")) {
    require_object(*e, "expect");
    if (const json* roots = member(*e, "roots")) {
      require_array(*roots, "expect.roots");
      std::set<std::string> r;
      for (std::size_t i = 0; i < roots->size(); ++i) r.insert(as<std::string>((*roots)[i], index_path("expect.roots", i)));
      s.expect.roots = std::move(r);
    }
    if (auto m = maybe<std::string>(*e, "expect", "deadline_misses")) {
      if (*m == "none") s.expect.deadline_misses = MissExpectation::kNone;
      else if (*m == "some") s.expect.deadline_misses = MissExpectation::kSome;
      else if (*m == "any") s.expect.deadline_misses = MissExpectation::kAny;
      else config_fail("expect.deadline_misses", "expected one of none, some, any");
    }
    s.expect.check_availability = get_or<bool>(*e, "expect", "availability", true);
  }
  validate(s);
  return s;
}

ordered_json to_json(const SimScenario& s) {
  ordered_json doc;
  doc["scenario"] = {{"name", s.name},
                     {"seed", s.seed},
                     {"hosts", s.hosts},
                     {"vms_per_host", s.vms_per_host},
                     {"services_per_vm", s.services_per_vm},
                     {"horizon_ms", s.horizon_ms},
                     {"probe_period_ms", s.probe_period_ms},
                     {"probe_deadline_ms", s.probe_deadline_ms},
                     {"ping_latency_ms", s.ping_latency_ms},
                     {"metrics_latency_ms", s.metrics_latency_ms},
                     {"metrics_probes", s.metrics_probes}};
  doc["failures"] = ordered_json::array();
  for (const auto& f : s.failures) {
    doc["failures"].push_back({{"component", f.component}, {"down_at_ms", f.down_at_ms}, {"up_at_ms", f.up_at_ms}});
  }
  if (s.rca_window) doc["rca_window"] = {{"start_ms", s.rca_window->start_ms}, {"end_ms", s.rca_window->end_ms}};
  ordered_json expect;
  if (s.expect.roots) expect["roots"] = *s.expect.roots;
  expect["deadline_misses"] = to_string(s.expect.deadline_misses);
  expect["availability"] = s.expect.check_availability;
  doc["expect"] = std::move(expect);
  return doc;
}

// ---------------------------------------------------------------------------

GroundTruthLog::GroundTruthLog(const Topology& topology, const std::vector<FailureSpec>& failures) {
  std::map<std::string, std::vector<Interval>, std::less<>> own;
  for (const auto& f : failures) own[f.component].push_back(Interval{f.down_at_ms, f.up_at_ms});

  for (const auto& node : topology.nodes()) {
    const std::string& id = node.component.id;
    std::vector<Interval> all;
    auto add = [&](std::string_view cid) {
      if (auto it = own.find(cid); it != own.end()) all.insert(all.end(), it->second.begin(), it->second.end());
    };
    add(id);
    for (const auto& a : topology.ancestors(id, {EdgeKind::kHosts})) add(a.id);
    std::vector<Interval> merged = merge(std::move(all));

    std::vector<StateTransition> tr{{0, true}};
    for (const Interval& iv : merged) {
      if (iv.start_ms <= 0) {
        tr.back().up = false;
      } else {
        tr.push_back({iv.start_ms, false});
      }
      tr.push_back({iv.end_ms, true});
    }
    transitions_.emplace(id, std::move(tr));
    down_.emplace(id, std::move(merged));
  }
}

bool GroundTruthLog::contains(std::string_view component) const { return down_.contains(component); }

std::vector<std::string> GroundTruthLog::components() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : down_) out.push_back(id);
  return out;
}

const std::vector<StateTransition>& GroundTruthLog::transitions(std::string_view component) const {
  auto it = transitions_.find(component);
  if (it == transitions_.end()) {
    throw Error(ErrorCode::kUnknownComponent, "unknown component '" + std::string(component) + "'");
  }
  return it->second;
}

const std::vector<Interval>& GroundTruthLog::down_intervals(std::string_view component) const {
  auto it = down_.find(component);
  if (it == down_.end()) {
    throw Error(ErrorCode::kUnknownComponent, "unknown component '" + std::string(component) + "'");
  }
  return it->second;
}

bool GroundTruthLog::up_at(std::string_view component, TimestampMs t) const {
  for (const Interval& iv : down_intervals(component)) {
    if (t >= iv.start_ms && t < iv.end_ms) return false;
  }
  return true;
}

std::size_t GroundTruthLog::transitions_within(std::string_view component, TimestampMs start_ms,
                                               TimestampMs end_ms) const {
  const auto& tr = transitions(component);
  std::size_t n = 0;
  for (std::size_t i = 1; i < tr.size(); ++i) {
    if (tr[i].t_ms > start_ms && tr[i].t_ms < end_ms) ++n;
  }
  return n;
}

ordered_json GroundTruthLog::to_json() const {
  ordered_json out = ordered_json::object();
  for (const auto& [id, tr] : transitions_) {
    ordered_json list = ordered_json::array();
    for (const auto& s : tr) list.push_back({{"t_ms", s.t_ms}, {"state", s.up ? "up" : "down"}});
    out[id] = std::move(list);
  }
  return out;
}

double oracle_availability(const GroundTruthLog& truth, std::string_view component, TimestampMs start_ms,
                           TimestampMs end_ms) {
  if (end_ms < start_ms) throw Error(ErrorCode::kInvalidArgument, "window end precedes start");
  const auto& down = truth.down_intervals(component);
  if (end_ms == start_ms) return truth.up_at(component, start_ms) ? 1.0 : 0.0;
  std::int64_t down_ms = 0;
  for (const Interval& iv : down) {
    const TimestampMs a = std::max(iv.start_ms, start_ms);
    const TimestampMs b = std::min(iv.end_ms, end_ms);
    if (b > a) down_ms += b - a;
  }
  const std::int64_t span = end_ms - start_ms;
  return static_cast<double>(span - down_ms) / static_cast<double>(span);
}

// ---------------------------------------------------------------------------

SimInfra::SimInfra(SimScenario scenario) : scenario_(std::move(scenario)) {
  validate(scenario_);
  const auto& s = scenario_;
  for (int h = 1; h <= s.hosts; ++h) {
    const std::string hid = host_id(h);
    topology_.upsert_node(make_node({hid, ComponentKind::kPhysicalHost}));
    for (int i = 1; i <= s.vms_per_host; ++i) {
      const std::string vid = vm_id(h, i);
      topology_.upsert_node(make_node({vid, ComponentKind::kVm}, {{"host_id", hid}}));
      topology_.link(hid, vid, EdgeKind::kHosts);
      for (int j = 1; j <= s.services_per_vm; ++j) {
        const std::string sid = service_id(h, i, j);
        topology_.upsert_node(make_node({sid, ComponentKind::kService}, {{"vm_id", vid}}));
        topology_.link(vid, sid, EdgeKind::kHosts);
      }
    }
  }
  truth_ = GroundTruthLog(topology_, s.failures);
}

void SimInfra::register_drivers(Collector& collector) const {
  collector.register_driver(std::string(kPingDriver),
                            [this](const DriverContext& ctx) { return ping(ctx.spec.target.id, ctx.now_ms); });
  collector.register_driver(std::string(kMetricsDriver),
                            [this](const DriverContext& ctx) { return metrics(ctx.spec.target.id, ctx.now_ms); });
}

DriverReply SimInfra::ping(std::string_view component, TimestampMs t) const {
  DriverReply r;
  r.outcome = truth_.up_at(component, t) ? ProbeOutcome::kUp : ProbeOutcome::kDown;
  r.latency_ms = scenario_.ping_latency_ms;
  if (r.outcome == ProbeOutcome::kDown) r.message = std::string(component) + " unreachable";
  return r;
}

DriverReply SimInfra::metrics(std::string_view component, TimestampMs t) const {
  DriverReply r;
  r.event_class = "perf";
  r.latency_ms = scenario_.metrics_latency_ms;
  if (!truth_.up_at(component, t)) {
    r.outcome = ProbeOutcome::kDown;
    r.message = std::string(component) + " unreachable";
    return r;
  }
  // Rounded to 0.01 so the values survive any text round trip unchanged.
  auto pct = [&](double lo, double span, std::uint64_t stream) {
    return std::round((lo + span * unit(scenario_.seed, component, t, stream)) * 100.0) / 100.0;
  };
  r.metrics["cpu_pct"] = pct(5.0, 85.0, 1);
  r.metrics["mem_pct"] = pct(20.0, 70.0, 2);
  return r;
}

std::vector<ProbeSpec> SimInfra::probe_specs() const {
  std::vector<ProbeSpec> specs;
  for (const auto& node : topology_.nodes()) {
    specs.emplace_back("ping-" + node.component.id, node.component, std::string(kPingDriver), scenario_.probe_period_ms,
                       scenario_.probe_deadline_ms);
    if (scenario_.metrics_probes && node.component.kind == ComponentKind::kPhysicalHost) {
      specs.emplace_back("metrics-" + node.component.id, node.component, std::string(kMetricsDriver),
                         scenario_.probe_period_ms, scenario_.probe_deadline_ms);
    }
  }
  return specs;
}

RawEvent SimInfra::observe(std::string_view component, TimestampMs t) const {
  auto node = topology_.node(component);
  if (!node) throw Error(ErrorCode::kUnknownComponent, "unknown component '" + std::string(component) + "'");
  RawEvent raw{.source_kind = std::string(kPingDriver), .received_at = t, .payload = {}};
  raw.payload["target"] = std::string(component);
  raw.payload["kind"] = std::string(to_string(node->component.kind));
  raw.payload["up"] = truth_.up_at(component, t);
  raw.payload["observed_at"] = static_cast<std::int64_t>(t);
  return raw;
}

TimeWindow SimInfra::rca_window() const {
  if (scenario_.rca_window) return *scenario_.rca_window;
  if (scenario_.failures.empty()) return TimeWindow{0, scenario_.horizon_ms};
  TimestampMs lo = std::numeric_limits<TimestampMs>::max();
  TimestampMs hi = std::numeric_limits<TimestampMs>::min();
  for (const auto& f : scenario_.failures) {
    lo = std::min(lo, f.down_at_ms);
    hi = std::max(hi, f.up_at_ms - 1);
  }
  return TimeWindow{lo, hi};
}

ordered_json SimInfra::export_json() const {
  ordered_json doc;
  doc["scenario"] = to_json(scenario_);
  doc["topology"] = topology_.to_json();
  doc["ground_truth"] = truth_.to_json();
  return doc;
}

}  // namespace cloudbus
