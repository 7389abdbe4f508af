// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

// Agentless collector: periodic probes with hard deadlines, dispatched
// earliest-deadline-first onto a bounded pool of executors, throttled by
// per-target token buckets and gated by scoped credentials.
//
// run_cycle() executes a schedule on simulated time: the timeline is a
// discrete-event simulation driven by the latency each driver reports, and
// drivers starting at the same instant run concurrently on worker threads.
// LiveCollector runs the same policy against a real clock.

#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cloudbus/clock.hpp"
#include "cloudbus/event_model.hpp"

namespace cloudbus {

enum class ProbeOutcome { kUp, kDown, kDegraded, kProbeError };

std::string_view to_string(ProbeOutcome outcome);
std::optional<ProbeOutcome> parse_probe_outcome(std::string_view text);

struct ProbeSpec {
  /// Throws Error(kInvalidSpec) unless 0 < deadline_ms <= period_ms, the
  /// probe id is nonempty and the target id is valid.
  ProbeSpec(std::string probe_id, ComponentId target, std::string driver, std::int64_t period_ms,
            std::int64_t deadline_ms, std::optional<std::string> credential_ref = std::nullopt, Payload params = {});

  std::string probe_id;
  ComponentId target;
  std::string driver;
  std::int64_t period_ms;
  std::int64_t deadline_ms;
  std::optional<std::string> credential_ref;
  Payload params;
};

void validate(const ProbeSpec& spec);

// The secret is only reachable through reveal(); every rendering of the
// record prints "***" in its place.
class CredentialRecord {
 public:
  CredentialRecord(std::string cred_id, std::string secret, std::set<ComponentKind> kind_scope,
                   std::set<std::string> id_scope = {});

  const std::string& id() const { return cred_id_; }
  const std::string& reveal() const { return secret_; }
  const std::set<ComponentKind>& kind_scope() const { return kind_scope_; }
  const std::set<std::string>& id_scope() const { return id_scope_; }

  std::string display() const;

 private:
  std::string cred_id_;
  std::string secret_;
  std::set<ComponentKind> kind_scope_;
  std::set<std::string> id_scope_;
};

std::ostream& operator<<(std::ostream& os, const CredentialRecord& cred);

/// True iff the target's kind or id is in the credential's scope.
bool authorize_probe(const CredentialRecord& cred, const ComponentId& target);

inline constexpr double kDefaultProbesPerSec = 5.0;
inline constexpr int kDefaultBurst = 5;

struct RateBudget {
  ComponentId target;
  double max_probes_per_sec = kDefaultProbesPerSec;
  int burst = kDefaultBurst;
};

// Token bucket refilled continuously at `rate` per second. The usable
// capacity is min(burst, max(1, floor(rate / 2))) so that no window of ten
// seconds or more sees more than 1.05 x rate probes.
class TokenBucket {
 public:
  TokenBucket(double rate_per_sec, int burst, TimestampMs start_ms);

  bool try_acquire(TimestampMs now_ms);
  double capacity() const { return capacity_; }

 private:
  double rate_per_ms_;
  double capacity_;
  double tokens_;
  TimestampMs last_ms_;
};

struct DriverContext {
  const ProbeSpec& spec;
  const CredentialRecord* credential;
  /// Query time; simulated time under run_cycle.
  TimestampMs now_ms;
};

struct DriverReply {
  ProbeOutcome outcome = ProbeOutcome::kUp;
  /// Simulated service time; ignored by LiveCollector, which measures it.
  double latency_ms = 0.0;
  std::map<std::string, double> metrics;
  std::string message;
  /// Class of the resulting event; availability unless the driver reports
  /// something else (performance samples, for instance).
  std::string event_class = "availability";
};

using ProbeDriver = std::function<DriverReply(const DriverContext&)>;

struct ProbeResult {
  std::string probe_id;
  std::string driver;
  ComponentId target;
  TimestampMs due_at = 0;
  TimestampMs started_at = 0;
  TimestampMs finished_at = 0;
  ProbeOutcome outcome = ProbeOutcome::kUp;
  double latency_ms = 0.0;
  std::map<std::string, double> metrics;
  std::string message;
  std::string event_class = "availability";
  bool deadline_missed = false;
};

/// RawEvent for the collector output: source_kind "probe.<driver>".
RawEvent to_raw_event(const ProbeResult& result);

struct DeadlineReport {
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;
  std::int64_t due = 0;
  std::int64_t fired = 0;
  std::int64_t missed = 0;
  std::int64_t suppressed = 0;
  std::int64_t overruns = 0;
  std::int64_t worst_lateness_ms = 0;
};

nlohmann::ordered_json to_json(const DeadlineReport& report);

struct Schedule {
  TimestampMs origin_ms = 0;
  /// Sorted by probe_id.
  std::vector<ProbeSpec> probes;
  /// Resolved credential per probe (same index), if any.
  std::vector<std::optional<CredentialRecord>> credentials;
  std::map<std::string, RateBudget> budgets;

  /// origin + k * period for every k with due time < until_ms.
  std::vector<TimestampMs> due_times(std::size_t probe_index, TimestampMs until_ms) const;
  /// Probe ids due exactly at `at`, in dispatch (EDF) order.
  std::vector<std::string> dispatch_order(TimestampMs at) const;
};

struct CycleResult {
  std::vector<RawEvent> events;
  std::vector<ProbeResult> results;
  DeadlineReport report;
};

class Collector {
 public:
  Collector() = default;

  /// Throws kDuplicateDriver.
  void register_driver(std::string name, ProbeDriver driver);
  bool has_driver(std::string_view name) const;

  void add_credential(CredentialRecord credential);
  void set_budget(RateBudget budget);

  /// Throws kUnknownDriver, kUnauthorizedProbe (credential missing or out of
  /// scope) or kInvalidSpec (duplicate ids, bad timing).
  Schedule build_schedule(std::vector<ProbeSpec> specs, TimestampMs now_ms) const;

  /// Runs every release with due time in [origin, until_ms) to completion on
  /// simulated time with at most `workers` probes in flight. Driver
  /// exceptions become probe_error results.
  CycleResult run_cycle(const Schedule& schedule, int workers, TimestampMs until_ms) const;

  /// Calls the driver for one job, turning exceptions into probe_error and
  /// scrubbing the credential secret from the reply.
  DriverReply invoke(const ProbeSpec& spec, const CredentialRecord* credential, TimestampMs now_ms) const;

 private:
  std::map<std::string, ProbeDriver, std::less<>> drivers_;
  std::map<std::string, CredentialRecord, std::less<>> credentials_;
  std::map<std::string, RateBudget, std::less<>> budgets_;
};

/// Smallest worker count with no deadline miss when every probe occupies a
/// worker for `driver_latency_ms` and all probes release together at t=0.
/// Starts from the utilization and synchronized-burst lower bounds and
/// confirms by simulating three hyperperiods. Throws kInvalidArgument when the
/// latency exceeds some deadline.
int required_workers(std::span<const ProbeSpec> specs, double driver_latency_ms);

// Continuous collection against a real clock. `sink` receives every fired
// probe's RawEvent from the worker thread that ran it.
class LiveCollector {
 public:
  using Sink = std::function<void(const RawEvent&, const ProbeResult&)>;

  LiveCollector(const Collector& collector, Schedule schedule, int workers, const Clock& clock, Sink sink);
  LiveCollector(const LiveCollector&) = delete;
  LiveCollector& operator=(const LiveCollector&) = delete;
  ~LiveCollector();

  void start();
  void stop();
  DeadlineReport report() const;

 private:
  struct Job {
    std::size_t probe;
    TimestampMs due_at;
    TimestampMs abs_deadline;
  };

  void scheduler_loop(std::stop_token stop);
  void worker_loop(std::stop_token stop);

  const Collector& collector_;
  Schedule schedule_;
  int workers_;
  const Clock& clock_;
  Sink sink_;

  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::vector<Job> ready_;  // heap, EDF on top
  std::vector<bool> busy_;
  std::vector<std::int64_t> next_k_;
  std::map<std::string, TokenBucket> buckets_;
  DeadlineReport report_;
  std::vector<std::jthread> threads_;
};

}  // namespace cloudbus
