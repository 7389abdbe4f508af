// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// In-memory publish/subscribe bus of the management server.
//
// A single logical stream ordered by seq_no. Mediators publish, consumers
// subscribe through filters and read from a bounded per-subscription queue
// (drop-oldest on overflow). The bus also folds the stream into a status
// view holding the latest event per (component id, class).

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cloudbus/event_model.hpp"

namespace cloudbus {

using SeqNo = std::int64_t;

enum class Role { kMediator, kConsumer, kAdmin };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct AuthToken {
  std::string token;
  std::set<Role> roles;
  std::string label;

  bool has(Role role) const { return roles.contains(role); }
};

/// Matches class against a dotted glob: a `*` segment matches exactly one
/// segment, a trailing `**` segment matches one or more.
bool class_glob_match(std::string_view pattern, std::string_view event_class);

struct EventFilter {
  std::optional<std::set<ComponentKind>> component_kinds;
  std::optional<std::string> class_glob;
  std::optional<Severity> min_severity;

  bool matches(const NormalizedEvent& event) const;
};

struct Delivery {
  SeqNo seq_no = 0;
  NormalizedEvent event;
};

using StatusKey = std::pair<std::string, std::string>;  // (component id, class)

struct StatusSnapshot {
  SeqNo as_of_seq = 0;
  std::map<StatusKey, NormalizedEvent> entries;
};

namespace detail {
struct SubscriptionState;
}

// Consumer handle. Movable; reading is meant for one thread at a time.
class Subscription {
 public:
  Subscription() = default;

  const std::string& id() const;
  const EventFilter& filter() const;
  std::size_t capacity() const;

  /// Oldest queued delivery, or nullopt once `timeout` elapses with an empty
  /// queue. Throws Error(kClosed) after the subscription is revoked.
  std::optional<Delivery> next(std::chrono::milliseconds timeout);

  std::uint64_t dropped_count() const;
  std::size_t queued() const;
  bool closed() const;
  explicit operator bool() const { return static_cast<bool>(state_); }

 private:
  friend class EventBus;
  explicit Subscription(std::shared_ptr<detail::SubscriptionState> state) : state_(std::move(state)) {}
  std::shared_ptr<detail::SubscriptionState> state_;
};

class EventBus {
 public:
  EventBus();
  EventBus(const EventBus&) = delete;
  EventBus& operator=(const EventBus&) = delete;
  ~EventBus();

  /// Registers a token issued out of band (token file, bootstrap admin).
  /// Throws kInvalidArgument on empty roles or a duplicate token string.
  void add_token(AuthToken token);
  std::optional<AuthToken> authenticate(std::string_view token) const;

  /// Throws kAuthError unless `admin_token` carries the admin role.
  AuthToken mint_token(std::string_view admin_token, std::set<Role> roles, std::string label);

  /// Assigns the next seq_no and fans the event out to matching
  /// subscriptions. Throws kAuthError or kValidationError.
  SeqNo publish(std::string_view token, const NormalizedEvent& event);

  /// Throws kAuthError, or kInvalidArgument when capacity < 1.
  Subscription subscribe(std::string_view token, EventFilter filter, std::size_t capacity);

  /// Throws kAuthError or kUnknownSubscription.
  void revoke(std::string_view admin_token, const std::string& sub_id);
  /// Server-internal revocation (stream teardown). Unknown ids are ignored.
  void revoke_internal(const std::string& sub_id);
  /// Closes every live subscription; used at shutdown.
  void close_all();

  /// Requires consumer or admin role.
  StatusSnapshot snapshot(std::string_view token, const EventFilter& selector) const;

  SeqNo last_seq() const;
  std::size_t subscription_count() const;
  std::vector<std::string> subscription_ids() const;

 private:
  const AuthToken& require_role(std::string_view token, std::initializer_list<Role> any_of) const;
  std::string next_sub_id();

  mutable std::mutex mu_;
  std::unordered_map<std::string, AuthToken> tokens_;
  SeqNo seq_ = 0;
  std::uint64_t next_sub_ = 0;
  std::map<std::string, std::shared_ptr<detail::SubscriptionState>> subs_;
  std::map<StatusKey, std::pair<SeqNo, NormalizedEvent>> status_;
  EventIdGenerator token_ids_;
};

}  // namespace cloudbus
