// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/event_bus.hpp"

#include "cloudbus/error.hpp"

namespace cloudbus {

namespace detail {

struct SubscriptionState {
  std::string id;
  EventFilter filter;
  std::size_t capacity = 1;

  mutable std::mutex mu;
  std::condition_variable cv;
  std::deque<Delivery> queue;
  std::uint64_t dropped = 0;
  bool closed = false;

  void push(SeqNo seq, const NormalizedEvent& event) {
    {
      std::lock_guard lock(mu);
      if (closed) return;
      if (queue.size() >= capacity) {
        queue.pop_front();
        ++dropped;
      }
      queue.push_back(Delivery{seq, event});
    }
    cv.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mu);
      closed = true;
      queue.clear();
    }
    cv.notify_all();
  }
};

}  // namespace detail

namespace {

std::vector<std::string_view> split_dots(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto dot = text.find('.', start);
    parts.push_back(text.substr(start, dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kMediator: return "mediator";
    case Role::kConsumer: return "consumer";
    case Role::kAdmin: return "admin";
  }
  return "consumer";
}

std::optional<Role> parse_role(std::string_view text) {
  if (text == "mediator") return Role::kMediator;
  if (text == "consumer") return Role::kConsumer;
  if (text == "admin") return Role::kAdmin;
  return std::nullopt;
}

bool class_glob_match(std::string_view pattern, std::string_view event_class) {
  const auto want = split_dots(pattern);
  const auto have = split_dots(event_class);
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i] == "**" && i + 1 == want.size()) return have.size() > i;
    if (i >= have.size()) return false;
    if (want[i] != "*" && want[i] != have[i]) return false;
  }
  return want.size() == have.size();
}

bool EventFilter::matches(const NormalizedEvent& event) const {
  if (component_kinds && !component_kinds->contains(event.component.kind)) return false;
  if (min_severity && event.severity < *min_severity) return false;
  if (class_glob && !class_glob_match(*class_glob, event.event_class)) return false;
  return true;
}

const std::string& Subscription::id() const { return state_->id; }
const EventFilter& Subscription::filter() const { return state_->filter; }
std::size_t Subscription::capacity() const { return state_->capacity; }

std::optional<Delivery> Subscription::next(std::chrono::milliseconds timeout) {
  auto& s = *state_;
  std::unique_lock lock(s.mu);
  s.cv.wait_for(lock, timeout, [&] { return s.closed || !s.queue.empty(); });
  if (s.closed) throw Error(ErrorCode::kClosed, "subscription " + s.id + " is closed");
  if (s.queue.empty()) return std::nullopt;
  Delivery d = std::move(s.queue.front());
  s.queue.pop_front();
  return d;
}

std::uint64_t Subscription::dropped_count() const {
  std::lock_guard lock(state_->mu);
  return state_->dropped;
}

std::size_t Subscription::queued() const {
  std::lock_guard lock(state_->mu);
  return state_->queue.size();
}

bool Subscription::closed() const {
  std::lock_guard lock(state_->mu);
  return state_->closed;
}

EventBus::EventBus() = default;

EventBus::~EventBus() { close_all(); }

void EventBus::add_token(AuthToken token) {
  if (token.token.empty()) throw Error(ErrorCode::kInvalidArgument, "token string is empty");
  if (token.roles.empty()) throw Error(ErrorCode::kInvalidArgument, "token '" + token.label + "' has no roles");
  std::lock_guard lock(mu_);
  if (tokens_.contains(token.token)) throw Error(ErrorCode::kInvalidArgument, "duplicate token for '" + token.label + "'");
  std::string key = token.token;
  tokens_.emplace(std::move(key), std::move(token));
}

std::optional<AuthToken> EventBus::authenticate(std::string_view token) const {
  std::lock_guard lock(mu_);
  auto it = tokens_.find(std::string(token));
  if (it == tokens_.end()) return std::nullopt;
  return it->second;
}

const AuthToken& EventBus::require_role(std::string_view token, std::initializer_list<Role> any_of) const {
  auto it = tokens_.find(std::string(token));
  if (it == tokens_.end()) throw Error(ErrorCode::kAuthError, "unknown token");
  for (Role r : any_of) {
    if (it->second.has(r)) return it->second;
  }
  throw Error(ErrorCode::kAuthError, "token '" + it->second.label + "' lacks the " +
                                         std::string(to_string(*any_of.begin())) + " role");
}

AuthToken EventBus::mint_token(std::string_view admin_token, std::set<Role> roles, std::string label) {
  if (roles.empty()) throw Error(ErrorCode::kInvalidArgument, "minted token needs at least one role");
  std::lock_guard lock(mu_);
  require_role(admin_token, {Role::kAdmin});
  AuthToken minted{.token = token_ids_.next(), .roles = std::move(roles), .label = std::move(label)};
  tokens_.emplace(minted.token, minted);
  return minted;
}

SeqNo EventBus::publish(std::string_view token, const NormalizedEvent& event) {
  std::lock_guard lock(mu_);
  require_role(token, {Role::kMediator});
  if (auto problem = check_event(event)) throw Error(ErrorCode::kValidationError, *problem);
  const SeqNo seq = ++seq_;
  status_.insert_or_assign(StatusKey{event.component.id, event.event_class}, std::pair{seq, event});
  for (auto& [id, sub] : subs_) {
    if (sub->filter.matches(event)) sub->push(seq, event);
  }
  return seq;
}

std::string EventBus::next_sub_id() { return "sub-" + std::to_string(++next_sub_); }

Subscription EventBus::subscribe(std::string_view token, EventFilter filter, std::size_t capacity) {
  if (capacity < 1) throw Error(ErrorCode::kInvalidArgument, "subscription capacity must be >= 1");
  auto state = std::make_shared<detail::SubscriptionState>();
  state->filter = std::move(filter);
  state->capacity = capacity;
  std::lock_guard lock(mu_);
  require_role(token, {Role::kConsumer});
  state->id = next_sub_id();
  subs_.emplace(state->id, state);
  return Subscription(std::move(state));
}

void EventBus::revoke(std::string_view admin_token, const std::string& sub_id) {
  std::shared_ptr<detail::SubscriptionState> victim;
  {
    std::lock_guard lock(mu_);
    require_role(admin_token, {Role::kAdmin});
    auto it = subs_.find(sub_id);
    if (it == subs_.end()) throw Error(ErrorCode::kUnknownSubscription, "no subscription '" + sub_id + "'");
    victim = std::move(it->second);
    subs_.erase(it);
  }
  victim->close();
}

void EventBus::revoke_internal(const std::string& sub_id) {
  std::shared_ptr<detail::SubscriptionState> victim;
  {
    std::lock_guard lock(mu_);
    auto it = subs_.find(sub_id);
    if (it == subs_.end()) return;
    victim = std::move(it->second);
    subs_.erase(it);
  }
  victim->close();
}

void EventBus::close_all() {
  std::map<std::string, std::shared_ptr<detail::SubscriptionState>> victims;
  {
    std::lock_guard lock(mu_);
    victims.swap(subs_);
  }
  for (auto& [id, sub] : victims) sub->close();
}

StatusSnapshot EventBus::snapshot(std::string_view token, const EventFilter& selector) const {
  std::lock_guard lock(mu_);
  require_role(token, {Role::kConsumer, Role::kAdmin});
  StatusSnapshot snap;
  snap.as_of_seq = seq_;
  for (const auto& [key, entry] : status_) {
    if (selector.matches(entry.second)) snap.entries.emplace(key, entry.second);
  }
  return snap;
}

SeqNo EventBus::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

std::size_t EventBus::subscription_count() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

std::vector<std::string> EventBus::subscription_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, sub] : subs_) ids.push_back(id);
  return ids;
}

}  // namespace cloudbus
