// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/server.hpp"

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cloudbus/error.hpp"
#include "json_fields.hpp"

namespace cloudbus {
namespace {

using nlohmann::json;
using namespace detail;

std::uint64_t seed_or_entropy(std::uint64_t seed) {
  if (seed != 0) return seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, path.string() + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
}

void check_keys(const json& obj, const std::string& base, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) config_fail(join_path(base, key), "unknown key");
  }
}

ComponentKind need_kind(const json& obj, const std::string& base, std::string_view key) {
  const std::string text = need<std::string>(obj, base, key);
  auto kind = parse_component_kind(text);
  if (!kind) config_fail(join_path(base, key), "unknown component kind '" + text + "'");
  return *kind;
}

EventFilter parse_filter(const json& obj, const std::string& base) {
  require_object(obj, base);
  check_keys(obj, base, {"class", "kinds", "min_severity"});
  EventFilter f;
  f.class_glob = maybe<std::string>(obj, base, "class");
  if (const json* kinds = member(obj, "kinds")) {
    const std::string kp = join_path(base, "kinds");
    require_array(*kinds, kp);
    std::set<ComponentKind> set;
    for (std::size_t i = 0; i < kinds->size(); ++i) {
      const std::string text = as<std::string>((*kinds)[i], index_path(kp, i));
      auto k = parse_component_kind(text);
      if (!k) config_fail(index_path(kp, i), "unknown component kind '" + text + "'");
      set.insert(*k);
    }
    f.component_kinds = std::move(set);
  }
  if (const json* sev = member(obj, "min_severity")) {
    const std::string sp = join_path(base, "min_severity");
    std::string text = sev->is_number_integer() ? std::to_string(sev->get<std::int64_t>()) : as<std::string>(*sev, sp);
    auto s = parse_severity(text);
    if (!s) config_fail(sp, "unknown severity '" + text + "'");
    f.min_severity = *s;
  }
  return f;
}

template <typename F>
void each(const json& doc, std::string_view key, F&& fn) {
  const json* arr = member(doc, key);
  if (arr == nullptr) return;
  const std::string path(key);
  require_array(*arr, path);
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const std::string ip = index_path(path, i);
    require_object((*arr)[i], ip);
    fn((*arr)[i], ip);
  }
}

}  // namespace

ServerConfig parse_config(const json& doc) {
  require_object(doc, "");
  check_keys(doc, "", {"workers", "heartbeat_ms", "analytics", "credentials", "budgets", "probes", "rules", "topology",
                       "scenario", "failures", "expect", "rca_window", "name"});
  ServerConfig cfg;
  cfg.workers = get_or<int>(doc, "", "workers", 0);
  if (cfg.workers < 0) config_fail("workers", "must be >= 0");
  cfg.heartbeat_ms = get_or<std::int64_t>(doc, "", "heartbeat_ms", cfg.heartbeat_ms);
  if (cfg.heartbeat_ms <= 0) config_fail("heartbeat_ms", "must be > 0");

  if (const json* a = member(doc, "analytics")) {
    require_object(*a, "analytics");
    check_keys(*a, "analytics", {"correlation_window_ms", "history_limit"});
    cfg.analytics.correlation_window_ms =
        get_or<std::int64_t>(*a, "analytics", "correlation_window_ms", cfg.analytics.correlation_window_ms);
    if (cfg.analytics.correlation_window_ms < 0) config_fail("analytics.correlation_window_ms", "must be >= 0");
    cfg.analytics.history_limit = get_or<std::size_t>(*a, "analytics", "history_limit", cfg.analytics.history_limit);
  }

  each(doc, "credentials", [&](const json& c, const std::string& p) {
    // Nothing from a credential entry is echoed: a misplaced secret could
    // sit in any key or value.
    for (const auto& [key, _] : c.items()) {
      if (key != "id" && key != "secret" && key != "scope") config_fail(p, "unknown key");
    }
    std::set<ComponentKind> kinds;
    std::set<std::string> ids;
    if (const json* scope = member(c, "scope")) {
      const std::string sp = join_path(p, "scope");
      require_object(*scope, sp);
      for (const auto& [key, _] : scope->items()) {
        if (key != "kinds" && key != "ids") config_fail(sp, "unknown key");
      }
      if (const json* ks = member(*scope, "kinds")) {
        require_array(*ks, sp + ".kinds");
        for (std::size_t i = 0; i < ks->size(); ++i) {
          const std::string ip = index_path(sp + ".kinds", i);
          const std::string text = as<std::string>((*ks)[i], ip);
          auto k = parse_component_kind(text);
          if (!k) config_fail(ip, "unknown component kind");
          kinds.insert(*k);
        }
      }
      if (const json* is = member(*scope, "ids")) {
        require_array(*is, sp + ".ids");
        for (std::size_t i = 0; i < is->size(); ++i) ids.insert(as<std::string>((*is)[i], index_path(sp + ".ids", i)));
      }
    }
    // The secret is never echoed, not even in diagnostics.
    const json* secret = member(c, "secret");
    if (secret == nullptr) config_fail(join_path(p, "secret"), "missing required key");
    if (!secret->is_string()) config_fail(join_path(p, "secret"), "expected a string");
    cfg.credentials.emplace_back(need<std::string>(c, p, "id"), secret->get<std::string>(), std::move(kinds),
                                 std::move(ids));
  });

  each(doc, "budgets", [&](const json& b, const std::string& p) {
    check_keys(b, p, {"target", "kind", "max_per_sec", "burst"});
    RateBudget budget;
    budget.target.id = need<std::string>(b, p, "target");
    if (member(b, "kind") != nullptr) budget.target.kind = need_kind(b, p, "kind");
    budget.max_probes_per_sec = get_or<double>(b, p, "max_per_sec", budget.max_probes_per_sec);
    budget.burst = get_or<int>(b, p, "burst", budget.burst);
    if (!(budget.max_probes_per_sec > 0)) config_fail(join_path(p, "max_per_sec"), "must be > 0");
    if (budget.burst < 1) config_fail(join_path(p, "burst"), "must be >= 1");
    cfg.budgets.push_back(std::move(budget));
  });

  each(doc, "probes", [&](const json& pr, const std::string& p) {
    check_keys(pr, p, {"id", "target", "kind", "driver", "period_ms", "deadline_ms", "credential", "params"});
    Payload params;
    if (const json* pj = member(pr, "params")) {
      try {
        params = payload_from_json(*pj);
      } catch (const Error& e) {
        config_fail(join_path(p, "params"), e.what());
      }
    }
    std::string id = need<std::string>(pr, p, "id");
    ComponentId target{need<std::string>(pr, p, "target"), need_kind(pr, p, "kind")};
    std::string driver = need<std::string>(pr, p, "driver");
    const auto period = need<std::int64_t>(pr, p, "period_ms");
    const auto deadline = get_or<std::int64_t>(pr, p, "deadline_ms", period);
    auto credential = maybe<std::string>(pr, p, "credential");
    try {
      cfg.probes.emplace_back(std::move(id), std::move(target), std::move(driver), period, deadline,
                              std::move(credential), std::move(params));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfigError) throw;
      config_fail(p, e.what());
    }
  });

  each(doc, "rules", [&](const json& r, const std::string& p) {
    check_keys(r, p, {"id", "selector", "metric", "cmp", "value", "consecutive", "severity"});
    ThresholdRule rule;
    rule.rule_id = need<std::string>(r, p, "id");
    if (const json* sel = member(r, "selector")) rule.selector = parse_filter(*sel, join_path(p, "selector"));
    rule.metric = need<std::string>(r, p, "metric");
    const std::string cmp = get_or<std::string>(r, p, "cmp", "gt");
    auto c = parse_comparator(cmp);
    if (!c) config_fail(join_path(p, "cmp"), "expected one of gt, ge, lt, le");
    rule.comparator = *c;
    rule.value = need<double>(r, p, "value");
    rule.consecutive = get_or<int>(r, p, "consecutive", 1);
    if (rule.consecutive < 1) config_fail(join_path(p, "consecutive"), "must be >= 1");
    const std::string sev = get_or<std::string>(r, p, "severity", "warning");
    auto s = parse_severity(sev);
    if (!s || *s == Severity::kClear) config_fail(join_path(p, "severity"), "expected info, warning, error or critical");
    rule.breach_severity = *s;
    cfg.rules.push_back(std::move(rule));
  });

  if (const json* t = member(doc, "topology")) {
    try {
      cfg.topology = Topology::from_json(*t);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfigError) throw;
      config_fail("topology", e.what());
    }
  }

  if (member(doc, "scenario") != nullptr) {
    try {
      cfg.scenario = scenario_from_json(doc);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfigError) throw;
      config_fail("scenario", e.what());
    }
  } else if (member(doc, "failures") != nullptr) {
    config_fail("failures", "requires a scenario");
  }
  return cfg;
}

ServerConfig load_config_file(const std::filesystem::path& path) { return parse_config(read_json_file(path)); }

std::vector<AuthToken> parse_token_file(const json& doc) {
  require_object(doc, "");
  check_keys(doc, "", {"tokens"});
  std::vector<AuthToken> out;
  std::set<std::string> seen;
  if (member(doc, "tokens") == nullptr) config_fail("tokens", "missing required key");
  each(doc, "tokens", [&](const json& t, const std::string& p) {
    check_keys(t, p, {"token", "roles", "label"});
    AuthToken tok;
    tok.token = need<std::string>(t, p, "token");
    if (tok.token.empty()) config_fail(join_path(p, "token"), "must be nonempty");
    if (!seen.insert(tok.token).second) config_fail(join_path(p, "token"), "duplicate token");
    tok.label = get_or<std::string>(t, p, "label", "token-" + std::to_string(out.size() + 1));
    const json* roles = member(t, "roles");
    if (roles == nullptr) config_fail(join_path(p, "roles"), "missing required key");
    require_array(*roles, join_path(p, "roles"));
    for (std::size_t i = 0; i < roles->size(); ++i) {
      const std::string rp = index_path(join_path(p, "roles"), i);
      const std::string text = as<std::string>((*roles)[i], rp);
      auto role = parse_role(text);
      if (!role) config_fail(rp, "unknown role '" + text + "'");
      tok.roles.insert(*role);
    }
    if (tok.roles.empty()) config_fail(join_path(p, "roles"), "must name at least one role");
    out.push_back(std::move(tok));
  });
  return out;
}

std::vector<AuthToken> load_token_file(const std::filesystem::path& path) {
  return parse_token_file(read_json_file(path));
}

// ---------------------------------------------------------------------------

ManagementServer::ManagementServer(Topology topology, std::vector<ThresholdRule> rules, ServerOptions options)
    : ids_(seed_or_entropy(options.id_seed)),
      topology_(std::move(topology)),
      rules_(NormalizationRuleset::builtin()) {
  EventIdGenerator token_ids;
  internal_token_ = "internal-" + token_ids.next();
  bus_.add_token(AuthToken{.token = internal_token_, .roles = {Role::kMediator, Role::kConsumer}, .label = "internal"});
  analytics_ = std::make_unique<AnalyticsEngine>(topology_, std::move(rules), options.analytics, ids_);
  analytics_sub_ = bus_.subscribe(internal_token_, EventFilter{}, options.analytics_queue);
}

ManagementServer::~ManagementServer() { stop(); }

SeqNo ManagementServer::ingest_raw(std::string_view token, const RawEvent& raw) {
  auto auth = bus_.authenticate(token);
  if (!auth || !auth->has(Role::kMediator)) {
    throw Error(ErrorCode::kAuthError, auth ? "token lacks the mediator role" : "unknown token");
  }
  return bus_.publish(token, normalize(raw, rules_, ids_));
}

SeqNo ManagementServer::ingest(std::string_view token, const NormalizedEvent& event) {
  return bus_.publish(token, event);
}

SeqNo ManagementServer::ingest_internal(const RawEvent& raw) { return ingest_raw(internal_token_, raw); }

void ManagementServer::consume_one(const Delivery& d) {
  for (const auto& derived : analytics_->consume(d.event)) bus_.publish(internal_token_, derived);
}

std::size_t ManagementServer::pump_analytics() {
  std::size_t n = 0;
  while (auto d = analytics_sub_.next(std::chrono::milliseconds(0))) {
    consume_one(*d);
    ++n;
  }
  return n;
}

void ManagementServer::start_analytics() {
  if (analytics_thread_.joinable()) return;
  analytics_thread_ = std::jthread([this](std::stop_token st) { analytics_loop(st); });
}

void ManagementServer::analytics_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    try {
      if (auto d = analytics_sub_.next(std::chrono::milliseconds(100))) consume_one(*d);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kClosed) return;
      spdlog::error("analytics: {}", e.what());
    }
  }
  try {
    pump_analytics();
  } catch (const Error&) {
  }
}

void ManagementServer::stop() {
  if (analytics_thread_.joinable()) {
    analytics_thread_.request_stop();
    analytics_thread_.join();
  }
}

}  // namespace cloudbus
