// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "cloudbus/collector.hpp"

namespace testing {

using namespace cloudbus;

std::shared_ptr<CaptureSink> log_capture() {
  static auto sink = std::make_shared<CaptureSink>();
  return sink;
}

void install_log_capture() {
  auto logger = std::make_shared<spdlog::logger>("test", log_capture());
  logger->set_level(spdlog::level::trace);
  spdlog::set_default_logger(logger);
}

std::size_t leaked_log_lines() {
  std::size_t n = 0;
  for (const auto& line : log_capture()->lines()) n += contains_secret(line) ? 1 : 0;
  return n;
}

// ---------------------------------------------------------------------------

namespace {

constexpr ComponentKind kKinds[] = {ComponentKind::kPhysicalHost, ComponentKind::kNetworkSwitch, ComponentKind::kVm,
                                    ComponentKind::kService, ComponentKind::kExternal};

int layer_rank(ComponentKind k) {
  switch (k) {
    case ComponentKind::kPhysicalHost:
    case ComponentKind::kNetworkSwitch: return 0;
    case ComponentKind::kVm: return 1;
    default: return 2;
  }
}

template <typename T>
T pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::string random_id(std::mt19937_64& rng) {
  static const std::vector<std::string> stems{"host", "vm", "svc", "sw", "db", "lb", "ext"};
  return pick(rng, stems) + "-" + std::to_string(std::uniform_int_distribution<int>(0, 40)(rng));
}

std::string random_class(std::mt19937_64& rng) {
  static const std::vector<std::string> classes{"availability", "perf.cpu", "perf.mem", "config.change",
                                                "threshold.breach", "net.link-state", "app.http_5xx", "perf"};
  return pick(rng, classes);
}

std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> parts{"disk", " full", "\"quoted\"", "back\\slash", "tab\there", "line\nbreak",
                                              "caf\xC3\xA9", "\xE2\x9C\x93 ok", "", "99%", "{json}", "a|b"};
  std::string out;
  const int n = std::uniform_int_distribution<int>(0, 4)(rng);
  for (int i = 0; i < n; ++i) out += pick(rng, parts);
  return out;
}

double random_metric(std::mt19937_64& rng) {
  switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
    case 0: return std::uniform_real_distribution<double>(0, 1)(rng);
    case 1: return static_cast<double>(std::uniform_int_distribution<int>(-1000, 1000)(rng));
    case 2: return std::uniform_real_distribution<double>(-1e12, 1e12)(rng);
    case 3: return std::ldexp(std::uniform_real_distribution<double>(0.5, 1)(rng),
                              std::uniform_int_distribution<int>(-60, 60)(rng));
    default: return 0.1 * std::uniform_int_distribution<int>(0, 100)(rng);
  }
}

}  // namespace

RandomDag random_dag(std::mt19937_64& rng, std::size_t max_nodes) {
  RandomDag dag;
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, max_nodes)(rng);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("c" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  std::shuffle(names.begin(), names.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    const ComponentKind kind = kKinds[std::uniform_int_distribution<int>(0, 4)(rng)];
    dag.nodes.push_back({names[i], kind});
    dag.graph.upsert_node(make_node(dag.nodes.back()));
  }
  const double p = std::uniform_real_distribution<double>(0.05, 0.45)(rng);
  std::bernoulli_distribution edge(p), coin(0.5), side(0.1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (side(rng)) dag.graph.link(dag.nodes[j].id, dag.nodes[i].id, EdgeKind::kConnects);
      if (!edge(rng)) continue;
      const bool hosts_ok = layer_rank(dag.nodes[j].kind) == layer_rank(dag.nodes[i].kind) + 1 &&
                            layer_rank(dag.nodes[i].kind) < 2;
      const EdgeKind kind = hosts_ok && coin(rng) ? EdgeKind::kHosts : EdgeKind::kDependsOn;
      dag.graph.link(dag.nodes[i].id, dag.nodes[j].id, kind);
      dag.causal.emplace_back(i, j);
    }
  }
  const double q = std::uniform_real_distribution<double>(0.1, 0.7)(rng);
  std::bernoulli_distribution is_down(q);
  for (const auto& c : dag.nodes) {
    if (is_down(rng)) dag.down.insert(c);
  }
  return dag;
}

RcaResult brute_force_rca(const RandomDag& dag, TimeWindow window) {
  const std::size_t n = dag.nodes.size();
  constexpr int kInf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, kInf));
  for (std::size_t i = 0; i < n; ++i) dist[i][i] = 0;
  for (auto [a, b] : dag.causal) dist[a][b] = 1;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) dist[i][j] = std::min(dist[i][j], dist[i][k] + dist[k][j]);
    }
  }
  RcaResult out;
  out.window = window;
  for (std::size_t d = 0; d < n; ++d) {
    if (!dag.down.contains(dag.nodes[d])) continue;
    std::optional<std::size_t> best;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == d || dist[a][d] >= kInf || !dag.down.contains(dag.nodes[a])) continue;
      if (!best || dist[a][d] < dist[*best][d] ||
          (dist[a][d] == dist[*best][d] && dag.nodes[a].id < dag.nodes[*best].id)) {
        best = a;
      }
    }
    if (best) {
      out.suppressed[dag.nodes[d]] = dag.nodes[*best];
    } else {
      out.roots.insert(dag.nodes[d]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

SimScenario random_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  SimScenario s;
  s.name = "random-" + std::to_string(seed);
  s.seed = seed;
  s.hosts = static_cast<int>(uni(1, 3));
  s.vms_per_host = static_cast<int>(uni(0, 3));
  s.services_per_vm = s.vms_per_host > 0 ? static_cast<int>(uni(0, 2)) : 0;
  s.horizon_ms = uni(30'000, 120'000);
  s.probe_period_ms = std::vector<std::int64_t>{500, 1000, 2000}[uni(0, 2)];
  s.probe_deadline_ms = uni(0, 1) == 0 ? s.probe_period_ms : s.probe_period_ms / 2;
  s.ping_latency_ms = static_cast<double>(uni(0, 20));
  s.metrics_latency_ms = static_cast<double>(uni(0, 20));
  s.metrics_probes = uni(0, 1) == 1;

  std::vector<std::string> ids;
  for (int h = 1; h <= s.hosts; ++h) {
    ids.push_back(host_id(h));
    for (int i = 1; i <= s.vms_per_host; ++i) {
      ids.push_back(vm_id(h, i));
      for (int j = 1; j <= s.services_per_vm; ++j) ids.push_back(service_id(h, i, j));
    }
  }
  const int failures = static_cast<int>(uni(0, 4));
  for (int k = 0; k < failures; ++k) {
    FailureSpec f;
    f.component = ids[static_cast<std::size_t>(uni(0, static_cast<std::int64_t>(ids.size()) - 1))];
    f.down_at_ms = uni(0, s.horizon_ms - 1);
    f.up_at_ms = uni(f.down_at_ms + 1, s.horizon_ms);
    s.failures.push_back(f);
  }
  return s;
}

double interval_oracle(const SimScenario& s, const std::string& component, TimestampMs start, TimestampMs end) {
  // Every id names its ancestors: svc-H-I-J under vm-H-I under host-H.
  std::set<std::string> chain{component};
  std::string rest = component.substr(component.find('-') + 1);
  std::vector<std::string> parts;
  for (std::size_t pos = 0; pos <= rest.size();) {
    const std::size_t dash = std::min(rest.find('-', pos), rest.size());
    parts.push_back(rest.substr(pos, dash - pos));
    pos = dash + 1;
  }
  if (parts.size() >= 1) chain.insert("host-" + parts[0]);
  if (parts.size() >= 2) chain.insert("vm-" + parts[0] + "-" + parts[1]);

  std::set<TimestampMs> cuts{start, end};
  std::vector<std::pair<TimestampMs, TimestampMs>> down;
  for (const auto& f : s.failures) {
    if (!chain.contains(f.component)) continue;
    down.emplace_back(f.down_at_ms, f.up_at_ms);
    if (f.down_at_ms > start && f.down_at_ms < end) cuts.insert(f.down_at_ms);
    if (f.up_at_ms > start && f.up_at_ms < end) cuts.insert(f.up_at_ms);
  }
  if (end == start) return 1.0;
  std::int64_t up = 0;
  for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it) {
    const TimestampMs a = *it, b = *std::next(it);
    bool is_down = false;
    for (auto [d, u] : down) is_down = is_down || (a >= d && a < u);
    if (!is_down) up += b - a;
  }
  return static_cast<double>(up) / static_cast<double>(end - start);
}

// ---------------------------------------------------------------------------

NormalizedEvent random_event(std::mt19937_64& rng, EventIdGenerator& ids) {
  NormalizedEvent ev;
  ev.event_id = ids.next();
  ev.component = {random_id(rng), kKinds[std::uniform_int_distribution<int>(0, 4)(rng)]};
  ev.event_class = random_class(rng);
  ev.severity = static_cast<Severity>(std::uniform_int_distribution<int>(0, 4)(rng));
  const int nm = std::uniform_int_distribution<int>(0, 4)(rng);
  static const std::vector<std::string> names{"up", "latency_ms", "cpu_pct", "mem.free", "x_1", "threshold"};
  for (int i = 0; i < nm; ++i) ev.metrics[pick(rng, names)] = random_metric(rng);
  ev.message = random_text(rng);
  ev.dedup_key = dedup_key(ev.component, ev.event_class);
  ev.occurred_at = std::uniform_int_distribution<TimestampMs>(0, 4'000'000'000'000)(rng);
  ev.count = std::bernoulli_distribution(0.5)(rng) ? 1 : std::uniform_int_distribution<std::int64_t>(2, 500)(rng);
  ev.first_seen = ev.occurred_at;
  ev.last_seen = ev.count == 1 ? ev.first_seen : ev.first_seen + std::uniform_int_distribution<TimestampMs>(0, 10'000'000)(rng);
  if (std::bernoulli_distribution(0.3)(rng)) ev.correlated_to = ids.next();
  return ev;
}

RawEvent random_driver_payload(std::mt19937_64& rng) {
  const TimestampMs now = std::uniform_int_distribution<TimestampMs>(0, 4'000'000'000'000)(rng);
  const ComponentId target{random_id(rng), kKinds[std::uniform_int_distribution<int>(0, 4)(rng)]};
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0: {
      RawEvent raw{.source_kind = "sim.ping", .received_at = now, .payload = {}};
      raw.payload["target"] = target.id;
      raw.payload["kind"] = std::string(to_string(target.kind));
      raw.payload["up"] = std::bernoulli_distribution(0.5)(rng);
      if (std::bernoulli_distribution(0.5)(rng)) raw.payload["observed_at"] = static_cast<std::int64_t>(now - 5);
      if (std::bernoulli_distribution(0.5)(rng)) raw.payload["latency_ms"] = random_metric(rng);
      return raw;
    }
    case 1: {
      RawEvent raw{.source_kind = "sim.metrics", .received_at = now, .payload = {}};
      raw.payload["target"] = target.id;
      raw.payload["kind"] = std::string(to_string(target.kind));
      if (std::bernoulli_distribution(0.5)(rng)) raw.payload["class"] = std::string("perf.cpu");
      raw.payload["metrics.cpu_pct"] = random_metric(rng);
      raw.payload["metrics.load"] = static_cast<std::int64_t>(std::uniform_int_distribution<int>(0, 64)(rng));
      return raw;
    }
    case 2: {
      ProbeResult r;
      r.probe_id = "p-" + target.id;
      r.driver = std::bernoulli_distribution(0.5)(rng) ? "sim.ping" : "sim.metrics";
      r.target = target;
      r.due_at = now;
      r.started_at = now + std::uniform_int_distribution<int>(0, 50)(rng);
      r.latency_ms = std::abs(random_metric(rng));
      r.finished_at = r.started_at + static_cast<TimestampMs>(std::ceil(std::min(r.latency_ms, 1e6)));
      r.outcome = static_cast<ProbeOutcome>(std::uniform_int_distribution<int>(0, 3)(rng));
      r.message = random_text(rng);
      r.event_class = std::bernoulli_distribution(0.7)(rng) ? "availability" : "perf";
      const int nm = std::uniform_int_distribution<int>(0, 3)(rng);
      for (int i = 0; i < nm; ++i) r.metrics["m" + std::to_string(i)] = random_metric(rng);
      r.deadline_missed = std::bernoulli_distribution(0.2)(rng);
      return to_raw_event(r);
    }
    default: {
      static EventIdGenerator ids(99);
      return to_passthrough_raw(random_event(rng, ids));
    }
  }
}

NormalizedEvent make_event(const std::string& id, ComponentKind kind, const std::string& cls, Severity severity,
                           TimestampMs at, std::map<std::string, double> metrics) {
  static EventIdGenerator ids(4242);
  NormalizedEvent ev;
  ev.event_id = ids.next();
  ev.occurred_at = at;
  ev.component = {id, kind};
  ev.event_class = cls;
  ev.severity = severity;
  ev.metrics = std::move(metrics);
  ev.dedup_key = dedup_key(ev.component, cls);
  ev.first_seen = ev.last_seen = at;
  return ev;
}

}  // namespace testing
