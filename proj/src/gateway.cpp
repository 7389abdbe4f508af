// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/gateway.hpp"

#include <atomic>
#include <charconv>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cloudbus/error.hpp"

namespace cloudbus {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kNdjson = "application/x-ndjson";
constexpr const char* kJson = "application/json";

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

void send_error(httplib::Response& res, const HttpError& e) {
  res.status = e.status;
  ordered_json body{{"error", e.message}, {"code", e.code}};
  res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace) + "\n", kJson);
}

void send_json(httplib::Response& res, const ordered_json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace) + "\n", kJson);
}

std::optional<std::string> bearer(const httplib::Request& req) {
  const std::string h = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
  return h.substr(prefix.size());
}

std::int64_t parse_int(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) throw HttpError{400, "bad_request", std::string("missing query parameter '") + name + "'"};
  const std::string v = req.get_param_value(name);
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw HttpError{400, "bad_request", std::string("query parameter '") + name + "' is not an integer"};
  }
  return out;
}

EventFilter filter_from_query(const httplib::Request& req) {
  EventFilter f;
  if (req.has_param("class") && !req.get_param_value("class").empty()) f.class_glob = req.get_param_value("class");
  if (req.has_param("kind") && !req.get_param_value("kind").empty()) {
    std::set<ComponentKind> kinds;
    std::string_view list = req.get_param_value("kind");
    while (!list.empty()) {
      const auto comma = list.find(',');
      const std::string_view item = list.substr(0, comma);
      auto k = parse_component_kind(item);
      if (!k) throw HttpError{400, "bad_request", "unknown component kind '" + std::string(item) + "'"};
      kinds.insert(*k);
      list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
    }
    f.component_kinds = std::move(kinds);
  }
  if (req.has_param("min_severity") && !req.get_param_value("min_severity").empty()) {
    auto s = parse_severity(req.get_param_value("min_severity"));
    if (!s) throw HttpError{400, "bad_request", "unknown severity '" + req.get_param_value("min_severity") + "'"};
    f.min_severity = *s;
  }
  return f;
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoMatchingRule:
    case ErrorCode::kMissingField:
    case ErrorCode::kInvalidComponent:
    case ErrorCode::kMalformedLine:
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kValidationError: return 422;
    case ErrorCode::kAuthError: return 403;
    case ErrorCode::kUnknownComponent:
    case ErrorCode::kUnknownSubscription: return 404;
    case ErrorCode::kInvalidArgument: return 400;
    default: return 500;
  }
}

// Body of POST /v1/events: exactly one JSON object, either a raw observation
// ({"source_kind", "received_at"?, "payload"}) or a normalized event.
struct EventBody {
  std::optional<RawEvent> raw;
  std::optional<NormalizedEvent> normalized;
};

EventBody parse_event_body(std::string_view body) {
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.remove_suffix(1);
  if (body.find('\n') != std::string_view::npos) {
    throw Error(ErrorCode::kMalformedLine, "body must hold exactly one event");
  }
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kMalformedLine, "body is not a JSON object");
  EventBody out;
  if (j.contains("source_kind")) {
    const auto& sk = j["source_kind"];
    if (!sk.is_string() || sk.get<std::string>().empty()) {
      throw Error(ErrorCode::kSchemaViolation, "source_kind must be a nonempty string");
    }
    RawEvent raw{.source_kind = sk.get<std::string>(), .received_at = SystemClock().now_ms(), .payload = {}};
    if (j.contains("received_at")) {
      if (!j["received_at"].is_number_integer()) throw Error(ErrorCode::kSchemaViolation, "received_at must be an integer");
      raw.received_at = j["received_at"].get<std::int64_t>();
    }
    if (!j.contains("payload")) throw Error(ErrorCode::kMissingField, "raw event needs a payload object");
    raw.payload = payload_from_json(j["payload"]);
    for (const auto& [key, _] : j.items()) {
      if (key != "source_kind" && key != "received_at" && key != "payload") {
        throw Error(ErrorCode::kSchemaViolation, "unexpected raw event key '" + key + "'");
      }
    }
    out.raw = std::move(raw);
  } else {
    out.normalized = event_from_json(j);
  }
  return out;
}

}  // namespace

std::pair<std::string, int> parse_listen_address(const std::string& address) {
  std::string host = "0.0.0.0";
  std::string port_text = address;
  if (const auto colon = address.rfind(':'); colon != std::string::npos) {
    host = address.substr(0, colon);
    port_text = address.substr(colon + 1);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    if (host.empty()) host = "0.0.0.0";
  }
  int port = -1;
  auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || p != port_text.data() + port_text.size() || port < 0 || port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "invalid listen address '" + address + "'");
  }
  return {host, port};
}

struct Gateway::Impl {
  Impl(ManagementServer& s, GatewayOptions o) : server(s), options(o) {}

  ManagementServer& server;
  GatewayOptions options;
  httplib::Server http;
  std::jthread thread;
  std::atomic<bool> stopping{false};
  std::atomic<std::size_t> streams{0};
  int port = -1;

  // Returns the authenticated token or fills a 401/403 response.
  std::optional<std::string> authorize(const httplib::Request& req, httplib::Response& res, Role role) {
    auto token = bearer(req);
    auto auth = token ? server.bus().authenticate(*token) : std::nullopt;
    if (!auth) {
      send_error(res, {401, "unauthenticated", "missing or unknown bearer token"});
      return std::nullopt;
    }
    if (!auth->has(role)) {
      send_error(res, {403, "forbidden", "token lacks the " + std::string(to_string(role)) + " role"});
      return std::nullopt;
    }
    return token;
  }

  template <typename F>
  httplib::Server::Handler guarded(Role role, F fn) {
    return [this, role, fn](const httplib::Request& req, httplib::Response& res) {
      auto token = authorize(req, res, role);
      if (!token) return;
      try {
        fn(*token, req, res);
      } catch (const HttpError& e) {
        send_error(res, e);
      } catch (const Error& e) {
        send_error(res, {status_for(e.code()), std::string(error_code_name(e.code())), e.what()});
      } catch (const std::exception& e) {
        spdlog::error("gateway {} {}: {}", req.method, req.path, e.what());
        send_error(res, {500, "internal", "internal error"});
      }
    };
  }

  void routes() {
    http.Post("/v1/events", guarded(Role::kMediator, [this](const std::string& token, const auto& req, auto& res) {
      EventBody body = parse_event_body(req.body);
      const SeqNo seq = body.raw ? server.ingest_raw(token, *body.raw) : server.ingest(token, *body.normalized);
      send_json(res, {{"seq_no", seq}});
    }));

    http.Get("/v1/events/stream", guarded(Role::kConsumer, [this](const std::string& token, const auto& req, auto& res) {
      std::size_t capacity = options.default_stream_capacity;
      if (req.has_param("capacity")) {
        const std::int64_t c = parse_int(req, "capacity");
        if (c < 1 || static_cast<std::size_t>(c) > options.max_stream_capacity) {
          throw HttpError{400, "bad_request", "capacity out of range"};
        }
        capacity = static_cast<std::size_t>(c);
      }
      auto sub = std::make_shared<Subscription>(server.bus().subscribe(token, filter_from_query(req), capacity));
      ++streams;
      spdlog::debug("stream {} opened", sub->id());
      auto last_write = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
      res.set_header("X-Subscription-Id", sub->id());
      res.set_chunked_content_provider(
          kNdjson,
          [this, sub, last_write](std::size_t, httplib::DataSink& sink) {
            if (stopping.load()) {
              sink.done();
              return true;
            }
            if (!sink.is_writable()) return false;
            std::optional<Delivery> d;
            try {
              d = sub->next(options.poll);
            } catch (const Error&) {
              sink.done();  // revoked
              return true;
            }
            const auto now = std::chrono::steady_clock::now();
            if (d) {
              const std::string line = encode_ndjson(d->event) + "\n";
              *last_write = now;
              return sink.write(line.data(), line.size());
            }
            if (now - *last_write >= options.heartbeat) {
              const std::string line = std::string(kHeartbeatLine) + "\n";
              *last_write = now;
              return sink.write(line.data(), line.size());
            }
            return true;
          },
          [this, sub](bool) {
            server.bus().revoke_internal(sub->id());
            --streams;
            spdlog::debug("stream {} closed", sub->id());
          });
    }));

    http.Get("/v1/status", guarded(Role::kConsumer, [this](const std::string& token, const auto& req, auto& res) {
      const StatusSnapshot snap = server.bus().snapshot(token, filter_from_query(req));
      std::string body;
      for (const auto& [key, ev] : snap.entries) body += encode_ndjson(ev) + "\n";
      res.set_header("X-As-Of-Seq", std::to_string(snap.as_of_seq));
      res.set_content(body, kNdjson);
    }));

    http.Get("/v1/topology", guarded(Role::kConsumer, [this](const std::string&, const auto&, auto& res) {
      send_json(res, server.topology().to_json());
    }));

    http.Get("/v1/availability", guarded(Role::kConsumer, [this](const std::string&, const auto& req, auto& res) {
      if (!req.has_param("component") || req.get_param_value("component").empty()) {
        throw HttpError{400, "bad_request", "missing query parameter 'component'"};
      }
      const std::int64_t start = parse_int(req, "start");
      const std::int64_t end = parse_int(req, "end");
      if (end < start) throw HttpError{400, "bad_request", "end precedes start"};
      send_json(res, to_json(server.analytics().availability(req.get_param_value("component"), start, end)));
    }));

    http.Get("/v1/rca", guarded(Role::kConsumer, [this](const std::string&, const auto& req, auto& res) {
      const std::int64_t start = parse_int(req, "start");
      const std::int64_t end = parse_int(req, "end");
      if (end < start) throw HttpError{400, "bad_request", "end precedes start"};
      send_json(res, to_json(server.analytics().rca(TimeWindow{start, end})));
    }));

    http.Post("/v1/tokens", guarded(Role::kAdmin, [this](const std::string& token, const auto& req, auto& res) {
      json j = json::parse(req.body, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw HttpError{400, "bad_request", "body is not a JSON object"};
      std::set<Role> roles;
      if (!j.contains("roles") || !j["roles"].is_array()) throw HttpError{400, "bad_request", "roles must be an array"};
      for (const auto& r : j["roles"]) {
        auto role = r.is_string() ? parse_role(r.get<std::string>()) : std::nullopt;
        if (!role) throw HttpError{400, "bad_request", "unknown role " + r.dump()};
        roles.insert(*role);
      }
      std::string label = "minted";
      if (j.contains("label")) {
        if (!j["label"].is_string()) throw HttpError{400, "bad_request", "label must be a string"};
        label = j["label"].get<std::string>();
      }
      AuthToken minted = server.bus().mint_token(token, roles, label);
      ordered_json names = ordered_json::array();
      for (Role r : minted.roles) names.push_back(to_string(r));
      send_json(res, {{"token", minted.token}, {"roles", names}, {"label", minted.label}}, 201);
    }));

    http.Get("/v1/subscriptions", guarded(Role::kAdmin, [this](const std::string&, const auto&, auto& res) {
      send_json(res, {{"subscriptions", server.bus().subscription_ids()}});
    }));

    http.Delete(R"(/v1/subscriptions/([^/]+))",
                guarded(Role::kAdmin, [this](const std::string& token, const auto& req, auto& res) {
                  const std::string id = req.matches[1];
                  server.bus().revoke(token, id);
                  send_json(res, {{"revoked", id}});
                }));

    http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, {res.status, res.status == 404 ? "not_found" : "http_error", httplib::status_message(res.status)});
      }
    });
    http.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });
  }
};

Gateway::Gateway(ManagementServer& server, GatewayOptions options)
    : impl_(std::make_unique<Impl>(server, options)) {
  const int threads = std::max(2, options.threads);
  impl_->http.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  // The library default adds SO_REUSEPORT, which would let a second server
  // share a port that is already in use.
  impl_->http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  impl_->routes();
}

Gateway::~Gateway() { stop(); }

int Gateway::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->http.bind_to_any_port(host);
  } else {
    impl_->port = impl_->http.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) {
    throw Error(ErrorCode::kInvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
  }
  return impl_->port;
}

void Gateway::start() {
  if (impl_->port < 0) throw Error(ErrorCode::kInvalidArgument, "gateway is not bound");
  impl_->thread = std::jthread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void Gateway::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Gateway::port() const { return impl_->port; }
std::size_t Gateway::open_streams() const { return impl_->streams.load(); }

}  // namespace cloudbus
