// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// HTTP/1.1 surface of the management server. Bearer tokens, NDJSON bodies,
// chunked NDJSON streams with heartbeat comment lines.
//
//   POST   /v1/events                 mediator   -> {"seq_no": n}
//   GET    /v1/events/stream          consumer   -> NDJSON stream
//   GET    /v1/status                 consumer   -> NDJSON, X-As-Of-Seq header
//   GET    /v1/topology               consumer
//   GET    /v1/availability           consumer   ?component=&start=&end=
//   GET    /v1/rca                    consumer   ?start=&end=
//   POST   /v1/tokens                 admin      {"roles": [...], "label"}
//   GET    /v1/subscriptions          admin
//   DELETE /v1/subscriptions/{id}     admin
//
// Errors are {"error": message, "code": name}.

#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>

#include "cloudbus/server.hpp"

namespace cloudbus {

inline constexpr std::string_view kHeartbeatLine = "# heartbeat";

struct GatewayOptions {
  std::chrono::milliseconds heartbeat{15'000};
  /// How often an idle stream checks for shutdown and client disconnect.
  std::chrono::milliseconds poll{100};
  std::size_t default_stream_capacity = 4096;
  std::size_t max_stream_capacity = 1u << 20;
  int threads = 64;
};

class Gateway {
 public:
  explicit Gateway(ManagementServer& server, GatewayOptions options = {});
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;
  ~Gateway();

  /// Port 0 picks a free port. Returns the bound port; throws
  /// Error(kInvalidArgument) when the address cannot be bound.
  int bind(const std::string& host, int port);
  /// Serves on a background thread. Requires bind().
  void start();
  /// Ends open streams, stops accepting and joins. Idempotent.
  void stop();

  int port() const;
  std::size_t open_streams() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; a bare port binds all interfaces. Throws
/// Error(kInvalidArgument).
std::pair<std::string, int> parse_listen_address(const std::string& address);

}  // namespace cloudbus
