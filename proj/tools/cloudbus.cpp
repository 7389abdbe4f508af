// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// cloudbus: operator command line. Every subcommand except serve and sim-run
// is a plain client of the gateway.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cloudbus/clock.hpp"
#include "cloudbus/collector.hpp"
#include "cloudbus/error.hpp"
#include "cloudbus/gateway.hpp"
#include "cloudbus/server.hpp"
#include "cloudbus/sim_infra.hpp"
#include "cloudbus/sim_run.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cloudbus;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : std::move(fallback);
}

// Milliseconds since construction; simulated scenarios start at t=0.
class ElapsedClock final : public Clock {
 public:
  ElapsedClock() : start_(base_.now_ms()) {}
  TimestampMs now_ms() const override { return base_.now_ms() - start_; }

 private:
  SystemClock base_;
  TimestampMs start_;
};

struct ClientOpts {
  std::string server = env_or("CLOUDBUS_SERVER", "http://127.0.0.1:8080");
  std::string token = env_or("CLOUDBUS_TOKEN", "");
  bool json = false;
};

void add_client_flags(CLI::App* cmd, ClientOpts& o) {
  cmd->add_option("--server", o.server, "Gateway base URL (env CLOUDBUS_SERVER)");
  cmd->add_option("--token", o.token, "Bearer token (env CLOUDBUS_TOKEN)");
  cmd->add_flag("--json", o.json, "NDJSON output");
}

std::string base_url(const std::string& server) {
  if (server.find("://") != std::string::npos) return server;
  return "http://" + server;
}

std::unique_ptr<httplib::Client> make_client(const ClientOpts& o) {
  if (o.token.empty()) throw UsageError("no token: pass --token or set CLOUDBUS_TOKEN");
  auto c = std::make_unique<httplib::Client>(base_url(o.server));
  if (!c->is_valid()) throw UsageError("invalid server address '" + o.server + "'");
  c->set_bearer_token_auth(o.token);
  c->set_connection_timeout(5, 0);
  c->set_read_timeout(30, 0);
  return c;
}

[[noreturn]] void fail_transport(const ClientOpts& o, httplib::Error err) {
  throw Error(ErrorCode::kInvalidArgument, "cannot reach " + o.server + ": " + httplib::to_string(err));
}

std::string describe_error(const httplib::Response& res) {
  json j = json::parse(res.body, nullptr, false);
  if (j.is_object() && j.contains("error") && j["error"].is_string()) {
    std::string code = j.contains("code") && j["code"].is_string() ? j["code"].get<std::string>() : "";
    return std::to_string(res.status) + " " + code + ": " + j["error"].get<std::string>();
  }
  return std::to_string(res.status);
}

json get_json(const ClientOpts& o, const std::string& path, const httplib::Params& params) {
  auto c = make_client(o);
  auto res = c->Get(path, params, httplib::Headers{});
  if (!res) fail_transport(o, res.error());
  if (res->status != 200) throw Error(ErrorCode::kInvalidArgument, describe_error(*res));
  json j = json::parse(res->body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidArgument, "server sent malformed JSON");
  return j;
}

std::string human_event(const json& ev) {
  std::ostringstream os;
  os << ev.value("occurred_at", 0LL) << " " << ev.value("severity", "?") << " "
     << (ev.contains("component") ? ev["component"].value("id", "?") : "?") << " " << ev.value("class", "?");
  if (ev.contains("count") && ev["count"].is_number_integer() && ev["count"].get<long long>() > 1) {
    os << " x" << ev["count"].get<long long>();
  }
  const std::string msg = ev.value("message", "");
  if (!msg.empty()) os << " " << msg;
  if (ev.contains("correlated_to") && ev["correlated_to"].is_string()) {
    os << " (correlated to " << ev["correlated_to"].get<std::string>() << ")";
  }
  return os.str();
}

// ---------------------------------------------------------------------------

struct ServeOpts {
  std::string addr = env_or("GATEWAY_ADDR", "127.0.0.1:8080");
  std::string config;
  std::string token_file = env_or("TOKEN_FILE", "");
  std::int64_t heartbeat_ms = 0;
};

int cmd_serve(const ServeOpts& o) {
  if (o.token_file.empty()) throw UsageError("no token file: pass --token-file or set TOKEN_FILE");
  ServerConfig cfg = o.config.empty() ? ServerConfig{} : load_config_file(o.config);
  const std::vector<AuthToken> tokens = load_token_file(o.token_file);
  const auto [host, port] = parse_listen_address(o.addr);

  std::unique_ptr<SimInfra> infra;
  if (cfg.scenario) infra = std::make_unique<SimInfra>(*cfg.scenario);
  Topology topology = cfg.topology.value_or(Topology{});
  if (infra) {
    for (const auto& n : infra->topology().nodes()) topology.upsert_node(n);
    for (const auto& e : infra->topology().edges()) topology.link(e.parent.id, e.child.id, e.kind);
  }

  ManagementServer server(std::move(topology), cfg.rules, ServerOptions{.analytics = cfg.analytics});
  for (const auto& t : tokens) server.bus().add_token(t);

  Collector collector;
  if (infra) infra->register_drivers(collector);
  for (const auto& c : cfg.credentials) collector.add_credential(c);
  for (const auto& b : cfg.budgets) collector.set_budget(b);
  std::vector<ProbeSpec> probes = cfg.probes;
  if (infra) {
    auto sim = infra->probe_specs();
    probes.insert(probes.end(), sim.begin(), sim.end());
  }
  std::unique_ptr<Clock> clock;
  if (infra) {
    clock = std::make_unique<ElapsedClock>();
  } else {
    clock = std::make_unique<SystemClock>();
  }
  Schedule schedule = collector.build_schedule(probes, clock->now_ms());
  int workers = cfg.workers;
  if (workers == 0 && !probes.empty()) {
    const double latency =
        infra ? std::max(infra->scenario().ping_latency_ms, infra->scenario().metrics_latency_ms) : 1.0;
    try {
      workers = required_workers(probes, latency);
    } catch (const Error&) {
      workers = static_cast<int>(probes.size());
    }
  }

  GatewayOptions gopts;
  gopts.heartbeat = std::chrono::milliseconds(o.heartbeat_ms > 0 ? o.heartbeat_ms : cfg.heartbeat_ms);
  Gateway gateway(server, gopts);
  const int bound = gateway.bind(host, port);
  server.start_analytics();
  gateway.start();

  std::unique_ptr<LiveCollector> live;
  if (!probes.empty()) {
    live = std::make_unique<LiveCollector>(collector, schedule, std::max(1, workers), *clock,
                                           [&server](const RawEvent& raw, const ProbeResult&) {
                                             try {
                                               server.ingest_internal(raw);
                                             } catch (const Error& e) {
                                               spdlog::warn("dropped probe event: {}", e.what());
                                             }
                                           });
    live->start();
  }

  std::cout << "cloudbus ready addr=" << host << ":" << bound << " probes=" << probes.size() << " workers=" << workers
            << std::endl;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {} received, shutting down", sig);

  if (live) live->stop();
  gateway.stop();
  server.stop();
  return kOk;
}

int cmd_ingest(const ClientOpts& o) {
  auto c = make_client(o);
  std::string line;
  std::size_t lineno = 0;
  std::size_t failed = 0;
  while (std::getline(std::cin, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto res = c->Post("/v1/events", line, "application/x-ndjson");
    if (!res) fail_transport(o, res.error());
    if (res->status == 200) {
      json j = json::parse(res->body, nullptr, false);
      const long long seq = j.is_object() ? j.value("seq_no", 0LL) : 0LL;
      if (o.json) {
        std::cout << json{{"line", lineno}, {"seq_no", seq}}.dump() << "\n";
      } else {
        std::cout << seq << "\n";
      }
    } else {
      ++failed;
      std::cerr << "line " << lineno << ": " << describe_error(*res) << "\n";
      if (res->status == 401 || res->status == 403) break;
    }
  }
  std::cout.flush();
  return failed == 0 ? kOk : kFailed;
}

struct TailOpts {
  std::string event_class;
  std::string kind;
  std::string min_severity;
  std::size_t capacity = 0;
  std::size_t count = 0;
};

int cmd_tail(const ClientOpts& o, const TailOpts& t) {
  auto c = make_client(o);
  c->set_read_timeout(24 * 3600, 0);
  httplib::Params params;
  if (!t.event_class.empty()) params.emplace("class", t.event_class);
  if (!t.kind.empty()) params.emplace("kind", t.kind);
  if (!t.min_severity.empty()) params.emplace("min_severity", t.min_severity);
  if (t.capacity > 0) params.emplace("capacity", std::to_string(t.capacity));
  const std::string path = httplib::append_query_params("/v1/events/stream", params);

  std::string buffer;
  std::size_t seen = 0;
  int status = 0;
  std::string error_body;
  auto res = c->Get(
      path, httplib::Headers{},
      [&](const httplib::Response& r) {
        status = r.status;
        return true;
      },
      [&](const char* data, std::size_t len) {
        if (status != 200) {
          error_body.append(data, len);
          return true;
        }
        buffer.append(data, len);
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
          std::string line = buffer.substr(0, nl);
          buffer.erase(0, nl + 1);
          if (line.empty() || line[0] == '#') continue;
          if (o.json) {
            std::cout << line << "\n";
          } else {
            json ev = json::parse(line, nullptr, false);
            std::cout << (ev.is_object() ? human_event(ev) : line) << "\n";
          }
          std::cout.flush();
          if (t.count > 0 && ++seen >= t.count) return false;
        }
        return true;
      });
  if (t.count > 0 && seen >= t.count) return kOk;
  if (!res) {
    if (status == 0) fail_transport(o, res.error());
    if (status != 200) {
      httplib::Response r;
      r.status = status;
      r.body = error_body;
      throw Error(ErrorCode::kInvalidArgument, describe_error(r));
    }
    throw Error(ErrorCode::kInvalidArgument, "stream interrupted: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    httplib::Response r = *res;
    if (r.body.empty()) r.body = error_body;
    throw Error(ErrorCode::kInvalidArgument, describe_error(r));
  }
  return kOk;
}

int cmd_status(const ClientOpts& o, const TailOpts& t) {
  auto c = make_client(o);
  httplib::Params params;
  if (!t.event_class.empty()) params.emplace("class", t.event_class);
  if (!t.kind.empty()) params.emplace("kind", t.kind);
  if (!t.min_severity.empty()) params.emplace("min_severity", t.min_severity);
  auto res = c->Get("/v1/status", params, httplib::Headers{});
  if (!res) fail_transport(o, res.error());
  if (res->status != 200) throw Error(ErrorCode::kInvalidArgument, describe_error(*res));
  if (!o.json) std::cout << "# as of seq " << res->get_header_value("X-As-Of-Seq") << "\n";
  std::istringstream in(res->body);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (o.json) {
      std::cout << line << "\n";
    } else {
      json ev = json::parse(line, nullptr, false);
      std::cout << (ev.is_object() ? human_event(ev) : line) << "\n";
    }
  }
  return kOk;
}

int cmd_avail(const ClientOpts& o, const std::string& component, std::int64_t start, std::int64_t end) {
  json j = get_json(o, "/v1/availability",
                    {{"component", component}, {"start", std::to_string(start)}, {"end", std::to_string(end)}});
  if (o.json) {
    std::cout << j.dump() << "\n";
    return kOk;
  }
  std::cout << component << " ratio=" << (j["ratio"].is_null() ? std::string("unknown") : j["ratio"].dump())
            << " up_ms=" << j.value("up_ms", 0LL) << " known_ms=" << j.value("known_ms", 0LL) << "\n";
  return kOk;
}

int cmd_rca(const ClientOpts& o, std::int64_t start, std::int64_t end) {
  json j = get_json(o, "/v1/rca", {{"start", std::to_string(start)}, {"end", std::to_string(end)}});
  if (o.json) {
    std::cout << j.dump() << "\n";
    return kOk;
  }
  std::cout << "roots:";
  for (const auto& r : j["roots"]) std::cout << " " << r.get<std::string>();
  std::cout << "\n";
  for (const auto& [sym, parent] : j["suppressed"].items()) {
    std::cout << "suppressed: " << sym << " -> " << parent.get<std::string>() << "\n";
  }
  return kOk;
}

int cmd_token(const ClientOpts& o, const std::string& roles, const std::string& label) {
  auto c = make_client(o);
  json body{{"roles", json::array()}, {"label", label}};
  std::stringstream ss(roles);
  std::string r;
  while (std::getline(ss, r, ',')) {
    if (!r.empty()) body["roles"].push_back(r);
  }
  if (body["roles"].empty()) throw UsageError("--roles needs at least one role");
  auto res = c->Post("/v1/tokens", body.dump(), "application/json");
  if (!res) fail_transport(o, res.error());
  if (res->status != 201) throw Error(ErrorCode::kInvalidArgument, describe_error(*res));
  json j = json::parse(res->body, nullptr, false);
  if (o.json) {
    std::cout << j.dump() << "\n";
  } else {
    std::cout << j.value("token", "") << "\n";
  }
  return kOk;
}

struct SimOpts {
  std::string scenario;
  int workers = 0;
  std::string report;
};

int cmd_sim_run(const SimOpts& o, bool json_out) {
  std::optional<SimScenario> scenario;
  if (fs::exists(o.scenario)) {
    std::ifstream in(o.scenario);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::kConfigError, o.scenario + ": not valid JSON");
    scenario = scenario_from_json(doc);
  } else {
    scenario = bundled_scenario(o.scenario);
  }
  if (!scenario) throw UsageError("scenario '" + o.scenario + "' is neither a file nor a bundled scenario");
  if (o.workers < 0) throw UsageError("--workers must be >= 0");

  SimReport report = run_simulation(*scenario, SimRunOptions{.workers = o.workers});
  const std::string text = report.to_json().dump(2) + "\n";
  if (o.report.empty() || o.report == "-") {
    std::cout << text;
  } else {
    std::ofstream out(o.report);
    if (!out || !(out << text)) throw Error(ErrorCode::kInvalidArgument, "cannot write report to " + o.report);
  }
  const auto first = report.first_failure();
  if (json_out) {
    std::cerr << json{{"scenario", report.scenario}, {"ok", report.ok()}, {"first_failure", first ? json(*first) : json()}}
                     .dump()
              << "\n";
  } else if (first) {
    std::cerr << "sim-run " << report.scenario << ": check failed: " << *first << "\n";
  } else {
    std::cerr << "sim-run " << report.scenario << ": all checks passed\n";
  }
  return report.ok() ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  // Signals are taken synchronously by serve; writes to closed sockets must
  // not kill the process.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  std::signal(SIGPIPE, SIG_IGN);

  auto logger = spdlog::stderr_color_mt("cloudbus");
  spdlog::set_default_logger(logger);

  CLI::App app{"cloudbus: event bus, collector and analytics for mixed physical/virtual infrastructure"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  ServeOpts serve;
  auto* s = app.add_subcommand("serve", "Run the management server");
  s->add_option("--addr", serve.addr, "Listen address host:port (env GATEWAY_ADDR)");
  s->add_option("--config", serve.config, "Config file (JSON)");
  s->add_option("--token-file", serve.token_file, "Token file (env TOKEN_FILE)");
  s->add_option("--heartbeat-ms", serve.heartbeat_ms, "Stream heartbeat interval");

  ClientOpts ingest_o;
  auto* ing = app.add_subcommand("ingest", "POST NDJSON events read from stdin");
  add_client_flags(ing, ingest_o);

  ClientOpts tail_o;
  TailOpts tail_t;
  auto* tl = app.add_subcommand("tail", "Stream events");
  add_client_flags(tl, tail_o);
  tl->add_option("--class", tail_t.event_class, "Class glob");
  tl->add_option("--kind", tail_t.kind, "Comma-separated component kinds");
  tl->add_option("--min-severity", tail_t.min_severity, "Minimum severity");
  tl->add_option("--capacity", tail_t.capacity, "Subscription queue capacity");
  tl->add_option("--count", tail_t.count, "Exit after this many events");

  ClientOpts status_o;
  TailOpts status_t;
  auto* st = app.add_subcommand("status", "Latest event per component and class");
  add_client_flags(st, status_o);
  st->add_option("--class", status_t.event_class, "Class glob");
  st->add_option("--kind", status_t.kind, "Comma-separated component kinds");
  st->add_option("--min-severity", status_t.min_severity, "Minimum severity");

  ClientOpts avail_o;
  std::string avail_component;
  std::int64_t avail_start = 0, avail_end = 0;
  auto* av = app.add_subcommand("avail", "Availability of a component over a window");
  add_client_flags(av, avail_o);
  av->add_option("--component", avail_component, "Component id")->required();
  av->add_option("--start", avail_start, "Window start (ms)")->required();
  av->add_option("--end", avail_end, "Window end (ms)")->required();

  ClientOpts rca_o;
  std::int64_t rca_start = 0, rca_end = 0;
  auto* rc = app.add_subcommand("rca", "Root causes over a window");
  add_client_flags(rc, rca_o);
  rc->add_option("--start", rca_start, "Window start (ms)")->required();
  rc->add_option("--end", rca_end, "Window end (ms)")->required();

  ClientOpts token_o;
  std::string token_roles, token_label = "cli";
  auto* tk = app.add_subcommand("token", "Mint a bus token (admin)");
  add_client_flags(tk, token_o);
  tk->add_option("--roles", token_roles, "Comma-separated roles")->required();
  tk->add_option("--label", token_label, "Token label");

  SimOpts sim;
  bool sim_json = false;
  auto* sr = app.add_subcommand("sim-run", "Run a simulated scenario end to end");
  sr->add_option("--scenario", sim.scenario, "Bundled scenario name or file path")->required();
  sr->add_option("--workers", sim.workers, "Collector workers (0 = required_workers)");
  sr->add_option("--report", sim.report, "Report file (default stdout)");
  sr->add_flag("--json", sim_json, "NDJSON summary on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }
  auto level = spdlog::level::from_str(log_level);
  if (level == spdlog::level::off && log_level != "off") {
    std::cerr << "usage error: unknown log level '" << log_level << "'\n";
    return kUsage;
  }
  spdlog::set_level(level);

  try {
    if (*s) {
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      return cmd_serve(serve);
    }
    if (*ing) return cmd_ingest(ingest_o);
    if (*tl) return cmd_tail(tail_o, tail_t);
    if (*st) return cmd_status(status_o, status_t);
    if (*av) return cmd_avail(avail_o, avail_component, avail_start, avail_end);
    if (*rc) return cmd_rca(rca_o, rca_start, rca_end);
    if (*tk) return cmd_token(token_o, token_roles, token_label);
    if (*sr) return cmd_sim_run(sim, sim_json);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
