// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/collector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cloudbus/error.hpp"

namespace cloudbus {

namespace {

using nlohmann::ordered_json;

constexpr double kTokenEpsilon = 1e-9;

struct Job {
  std::size_t probe;
  TimestampMs due_at;
  TimestampMs abs_deadline;
};

// Min-heap comparator: earliest absolute deadline, then probe id, then due.
struct EdfLater {
  const std::vector<ProbeSpec>* probes;
  template <typename J>
  bool operator()(const J& a, const J& b) const {
    if (a.abs_deadline != b.abs_deadline) return a.abs_deadline > b.abs_deadline;
    const auto& ia = (*probes)[a.probe].probe_id;
    const auto& ib = (*probes)[b.probe].probe_id;
    if (ia != ib) return ia > ib;
    return a.due_at > b.due_at;
  }
};

std::string scrub(std::string text, const CredentialRecord* credential) {
  if (credential == nullptr || credential->reveal().empty()) return text;
  const std::string& secret = credential->reveal();
  for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos + 3)) {
    text.replace(pos, secret.size(), "***");
  }
  return text;
}

TimestampMs service_time(double latency_ms) {
  if (!(latency_ms > 0.0) || !std::isfinite(latency_ms)) return 0;
  return static_cast<TimestampMs>(std::ceil(latency_ms - kTokenEpsilon));
}

// Fixed-size thread pool running one batch of tasks at a time.
class BatchPool {
 public:
  explicit BatchPool(std::size_t threads) {
    for (std::size_t i = 0; i < threads; ++i) {
      threads_.emplace_back([this](std::stop_token stop) { loop(stop); });
    }
  }

  ~BatchPool() {
    for (auto& t : threads_) t.request_stop();
    cv_.notify_all();
  }

  void run(std::vector<std::function<void()>>& tasks) {
    if (threads_.empty() || tasks.size() <= 1) {
      for (auto& t : tasks) t();
      return;
    }
    std::unique_lock lock(mu_);
    tasks_ = &tasks;
    next_ = 0;
    remaining_ = tasks.size();
    cv_.notify_all();
    done_.wait(lock, [&] { return remaining_ == 0; });
    tasks_ = nullptr;
  }

 private:
  void loop(std::stop_token stop) {
    std::unique_lock lock(mu_);
    while (true) {
      cv_.wait(lock, stop, [&] { return tasks_ != nullptr && next_ < tasks_->size(); });
      if (stop.stop_requested()) return;
      auto& task = (*tasks_)[next_++];
      lock.unlock();
      task();
      lock.lock();
      if (--remaining_ == 0) done_.notify_one();
    }
  }

  std::mutex mu_;
  std::condition_variable_any cv_;
  std::condition_variable done_;
  std::vector<std::function<void()>>* tasks_ = nullptr;
  std::size_t next_ = 0;
  std::size_t remaining_ = 0;
  std::vector<std::jthread> threads_;
};

// Discrete-event timeline shared by run_cycle and required_workers.
// `start_batch(jobs, t)` returns the service time of each job starting at t;
// `on_complete(job, dispatch_index, started, finished)` sees every completion
// in (finish time, dispatch order) order.
template <typename StartBatch, typename OnComplete>
DeadlineReport simulate(const Schedule& schedule, int workers, TimestampMs until_ms, bool apply_budgets,
                        StartBatch&& start_batch, OnComplete&& on_complete) {
  const auto& probes = schedule.probes;
  const std::size_t n = probes.size();
  DeadlineReport report{.start_ms = schedule.origin_ms, .end_ms = until_ms};

  std::map<std::string, TokenBucket> buckets;
  if (apply_budgets) {
    for (const auto& p : probes) {
      if (buckets.contains(p.target.id)) continue;
      auto b = schedule.budgets.find(p.target.id);
      const double rate = b == schedule.budgets.end() ? kDefaultProbesPerSec : b->second.max_probes_per_sec;
      const int burst = b == schedule.budgets.end() ? kDefaultBurst : b->second.burst;
      buckets.emplace(p.target.id, TokenBucket(rate, burst, schedule.origin_ms));
    }
  }

  std::vector<std::int64_t> next_k(n, 0);
  std::vector<bool> busy(n, false);
  std::priority_queue<Job, std::vector<Job>, EdfLater> ready(EdfLater{&probes});

  struct Running {
    TimestampMs finish;
    std::size_t dispatch;
    Job job;
    TimestampMs started;
  };
  auto later_finish = [](const Running& a, const Running& b) {
    return a.finish != b.finish ? a.finish > b.finish : a.dispatch > b.dispatch;
  };
  std::priority_queue<Running, std::vector<Running>, decltype(later_finish)> running(later_finish);
  std::size_t dispatched = 0;
  int free_workers = std::max(1, workers);

  auto next_due = [&](std::size_t i) { return schedule.origin_ms + next_k[i] * probes[i].period_ms; };
  auto next_release_time = [&]() {
    std::optional<TimestampMs> t;
    for (std::size_t i = 0; i < n; ++i) {
      const TimestampMs due = next_due(i);
      if (due < until_ms && (!t || due < *t)) t = due;
    }
    return t;
  };

  while (true) {
    std::optional<TimestampMs> t = next_release_time();
    if (!running.empty() && (!t || running.top().finish < *t)) t = running.top().finish;
    if (!t) {
      if (ready.empty()) break;
      t = schedule.origin_ms;  // unreachable: ready jobs imply a running one
    }

    bool progressed = true;
    while (progressed) {
      progressed = false;
      while (!running.empty() && running.top().finish <= *t) {
        Running r = running.top();
        running.pop();
        ++free_workers;
        busy[r.job.probe] = false;
        const TimestampMs lateness = r.finish - r.job.abs_deadline;
        const bool missed = lateness > 0;
        if (missed) {
          ++report.missed;
          report.worst_lateness_ms = std::max(report.worst_lateness_ms, lateness);
        }
        on_complete(r.job, r.dispatch, r.started, r.finish, missed);
        progressed = true;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const TimestampMs due = next_due(i);
        if (due != *t || due >= until_ms) continue;
        ++next_k[i];
        ++report.due;
        progressed = true;
        if (busy[i]) {
          ++report.overruns;
          continue;
        }
        if (apply_budgets && !buckets.at(probes[i].target.id).try_acquire(*t)) {
          ++report.suppressed;
          continue;
        }
        busy[i] = true;
        ready.push(Job{i, due, due + probes[i].deadline_ms});
      }
      std::vector<Job> batch;
      while (free_workers > 0 && !ready.empty()) {
        batch.push_back(ready.top());
        ready.pop();
        --free_workers;
      }
      if (!batch.empty()) {
        progressed = true;
        const std::vector<TimestampMs> service = start_batch(std::span<const Job>(batch), *t, dispatched);
        for (std::size_t j = 0; j < batch.size(); ++j) {
          running.push(Running{*t + service[j], dispatched++, batch[j], *t});
          ++report.fired;
        }
      }
    }
    if (!next_release_time() && running.empty() && ready.empty()) break;
  }
  return report;
}

std::int64_t lcm_capped(std::int64_t a, std::int64_t b, std::int64_t cap) {
  const std::int64_t g = std::gcd(a, b);
  const std::int64_t q = a / g;
  if (q > cap / b) return cap;
  return std::min(q * b, cap);
}

}  // namespace

std::string_view to_string(ProbeOutcome outcome) {
  switch (outcome) {
    case ProbeOutcome::kUp: return "up";
    case ProbeOutcome::kDown: return "down";
    case ProbeOutcome::kDegraded: return "degraded";
    case ProbeOutcome::kProbeError: return "probe_error";
  }
  return "probe_error";
}

std::optional<ProbeOutcome> parse_probe_outcome(std::string_view text) {
  if (text == "up") return ProbeOutcome::kUp;
  if (text == "down") return ProbeOutcome::kDown;
  if (text == "degraded") return ProbeOutcome::kDegraded;
  if (text == "probe_error") return ProbeOutcome::kProbeError;
  return std::nullopt;
}

ProbeSpec::ProbeSpec(std::string probe_id_, ComponentId target_, std::string driver_, std::int64_t period_ms_,
                     std::int64_t deadline_ms_, std::optional<std::string> credential_ref_, Payload params_)
    : probe_id(std::move(probe_id_)),
      target(std::move(target_)),
      driver(std::move(driver_)),
      period_ms(period_ms_),
      deadline_ms(deadline_ms_),
      credential_ref(std::move(credential_ref_)),
      params(std::move(params_)) {
  validate(*this);
}

void validate(const ProbeSpec& spec) {
  if (spec.probe_id.empty()) throw Error(ErrorCode::kInvalidSpec, "probe id is empty");
  if (!is_valid_component_id(spec.target.id)) throw Error(ErrorCode::kInvalidSpec, spec.probe_id + ": invalid target id");
  if (spec.driver.empty()) throw Error(ErrorCode::kInvalidSpec, spec.probe_id + ": driver is empty");
  if (spec.period_ms <= 0) throw Error(ErrorCode::kInvalidSpec, spec.probe_id + ": period_ms must be > 0");
  if (spec.deadline_ms <= 0 || spec.deadline_ms > spec.period_ms) {
    throw Error(ErrorCode::kInvalidSpec, spec.probe_id + ": deadline_ms must be in (0, period_ms]");
  }
}

CredentialRecord::CredentialRecord(std::string cred_id, std::string secret, std::set<ComponentKind> kind_scope,
                                   std::set<std::string> id_scope)
    : cred_id_(std::move(cred_id)),
      secret_(std::move(secret)),
      kind_scope_(std::move(kind_scope)),
      id_scope_(std::move(id_scope)) {}

std::string CredentialRecord::display() const {
  std::ostringstream os;
  os << "credential " << cred_id_ << " secret=*** scope=[";
  bool first = true;
  for (auto k : kind_scope_) {
    os << (first ? "" : ",") << to_string(k);
    first = false;
  }
  for (const auto& id : id_scope_) {
    os << (first ? "" : ",") << id;
    first = false;
  }
  os << "]";
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const CredentialRecord& cred) { return os << cred.display(); }

bool authorize_probe(const CredentialRecord& cred, const ComponentId& target) {
  return cred.kind_scope().contains(target.kind) || cred.id_scope().contains(target.id);
}

TokenBucket::TokenBucket(double rate_per_sec, int burst, TimestampMs start_ms)
    : rate_per_ms_(rate_per_sec / 1000.0), last_ms_(start_ms) {
  if (!(rate_per_sec > 0.0)) throw Error(ErrorCode::kInvalidArgument, "rate budget must be > 0 probes/s");
  if (burst < 1) throw Error(ErrorCode::kInvalidArgument, "rate budget burst must be >= 1");
  capacity_ = std::min<double>(burst, std::max(1.0, std::floor(rate_per_sec / 2.0)));
  tokens_ = capacity_;
}

bool TokenBucket::try_acquire(TimestampMs now_ms) {
  if (now_ms > last_ms_) {
    tokens_ = std::min(capacity_, tokens_ + static_cast<double>(now_ms - last_ms_) * rate_per_ms_);
    last_ms_ = now_ms;
  }
  if (tokens_ + kTokenEpsilon < 1.0) return false;
  tokens_ = std::max(0.0, tokens_ - 1.0);
  return true;
}

RawEvent to_raw_event(const ProbeResult& r) {
  RawEvent raw{.source_kind = "probe." + r.driver, .received_at = r.finished_at, .payload = {}};
  auto& p = raw.payload;
  p["target"] = r.target.id;
  p["kind"] = std::string(to_string(r.target.kind));
  p["probe_id"] = r.probe_id;
  p["due_at"] = static_cast<std::int64_t>(r.due_at);
  p["started_at"] = static_cast<std::int64_t>(r.started_at);
  p["outcome"] = std::string(to_string(r.outcome));
  p["latency_ms"] = r.latency_ms;
  p["deadline_missed"] = r.deadline_missed;
  if (r.outcome == ProbeOutcome::kProbeError) {
    p["error"] = r.message.empty() ? std::string("probe error") : r.message;
  } else {
    p["up"] = r.outcome != ProbeOutcome::kDown;
    p["class"] = r.event_class.empty() ? std::string("availability") : r.event_class;
    if (!r.message.empty()) p["message"] = r.message;
  }
  for (const auto& [name, value] : r.metrics) {
    if (std::isfinite(value)) p["metrics." + name] = value;
  }
  return raw;
}

ordered_json to_json(const DeadlineReport& r) {
  return ordered_json{{"window", {{"start_ms", r.start_ms}, {"end_ms", r.end_ms}}},
                      {"due", r.due},
                      {"fired", r.fired},
                      {"missed", r.missed},
                      {"suppressed", r.suppressed},
                      {"overruns", r.overruns},
                      {"worst_lateness_ms", r.worst_lateness_ms}};
}

std::vector<TimestampMs> Schedule::due_times(std::size_t probe_index, TimestampMs until_ms) const {
  std::vector<TimestampMs> out;
  const auto& p = probes.at(probe_index);
  for (TimestampMs t = origin_ms; t < until_ms; t += p.period_ms) out.push_back(t);
  return out;
}

std::vector<std::string> Schedule::dispatch_order(TimestampMs at) const {
  std::priority_queue<Job, std::vector<Job>, EdfLater> ready(EdfLater{&probes});
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (at >= origin_ms && (at - origin_ms) % probes[i].period_ms == 0) {
      ready.push(Job{i, at, at + probes[i].deadline_ms});
    }
  }
  std::vector<std::string> ids;
  while (!ready.empty()) {
    ids.push_back(probes[ready.top().probe].probe_id);
    ready.pop();
  }
  return ids;
}

void Collector::register_driver(std::string name, ProbeDriver driver) {
  if (drivers_.contains(name)) throw Error(ErrorCode::kDuplicateDriver, "driver '" + name + "' is already registered");
  drivers_.emplace(std::move(name), std::move(driver));
}

bool Collector::has_driver(std::string_view name) const { return drivers_.contains(name); }

void Collector::add_credential(CredentialRecord credential) {
  std::string id = credential.id();
  credentials_.insert_or_assign(std::move(id), std::move(credential));
}

void Collector::set_budget(RateBudget budget) {
  std::string id = budget.target.id;
  budgets_.insert_or_assign(std::move(id), std::move(budget));
}

Schedule Collector::build_schedule(std::vector<ProbeSpec> specs, TimestampMs now_ms) const {
  std::sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return a.probe_id < b.probe_id; });
  Schedule s{.origin_ms = now_ms};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const ProbeSpec& spec = specs[i];
    validate(spec);
    if (i > 0 && specs[i - 1].probe_id == spec.probe_id) {
      throw Error(ErrorCode::kInvalidSpec, "duplicate probe id '" + spec.probe_id + "'");
    }
    if (!drivers_.contains(spec.driver)) {
      throw Error(ErrorCode::kUnknownDriver, spec.probe_id + ": driver '" + spec.driver + "' is not registered");
    }
    std::optional<CredentialRecord> cred;
    if (spec.credential_ref) {
      auto it = credentials_.find(*spec.credential_ref);
      if (it == credentials_.end()) {
        throw Error(ErrorCode::kUnauthorizedProbe, spec.probe_id + ": unknown credential '" + *spec.credential_ref + "'");
      }
      if (!authorize_probe(it->second, spec.target)) {
        throw Error(ErrorCode::kUnauthorizedProbe,
                    spec.probe_id + ": credential '" + it->second.id() + "' does not cover " + spec.target.id);
      }
      cred = it->second;
    }
    s.credentials.push_back(std::move(cred));
  }
  s.probes = std::move(specs);
  for (const auto& [id, b] : budgets_) s.budgets.emplace(id, b);
  return s;
}

DriverReply Collector::invoke(const ProbeSpec& spec, const CredentialRecord* credential, TimestampMs now_ms) const {
  DriverReply reply;
  auto it = drivers_.find(spec.driver);
  if (it == drivers_.end()) {
    reply.outcome = ProbeOutcome::kProbeError;
    reply.message = "driver '" + spec.driver + "' is not registered";
    return reply;
  }
  try {
    reply = it->second(DriverContext{spec, credential, now_ms});
  } catch (const std::exception& e) {
    reply = DriverReply{.outcome = ProbeOutcome::kProbeError, .message = scrub(e.what(), credential)};
  } catch (...) {
    reply = DriverReply{.outcome = ProbeOutcome::kProbeError, .message = "driver failed"};
  }
  reply.message = scrub(std::move(reply.message), credential);
  if (credential != nullptr && !credential->reveal().empty()) {
    std::map<std::string, double> clean;
    for (auto& [name, v] : reply.metrics) clean[scrub(name, credential)] = v;
    reply.metrics = std::move(clean);
  }
  if (reply.outcome == ProbeOutcome::kProbeError) {
    spdlog::warn("probe {} on {} failed: {}", spec.probe_id, spec.target.id, reply.message);
  }
  return reply;
}

CycleResult Collector::run_cycle(const Schedule& schedule, int workers, TimestampMs until_ms) const {
  if (workers < 1) throw Error(ErrorCode::kInvalidArgument, "workers must be >= 1");
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  BatchPool pool(std::min<std::size_t>({static_cast<std::size_t>(workers), hw, 16}));

  CycleResult out;
  std::map<std::size_t, ProbeResult> in_flight;  // dispatch index -> partial result

  auto start_batch = [&](std::span<const Job> jobs, TimestampMs t, std::size_t first_dispatch) {
    std::vector<DriverReply> replies(jobs.size());
    std::vector<std::function<void()>> tasks;
    tasks.reserve(jobs.size());
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      tasks.emplace_back([&, j] {
        const std::size_t i = jobs[j].probe;
        const CredentialRecord* cred = schedule.credentials[i] ? &*schedule.credentials[i] : nullptr;
        replies[j] = invoke(schedule.probes[i], cred, t);
      });
    }
    pool.run(tasks);
    std::vector<TimestampMs> service(jobs.size());
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const ProbeSpec& spec = schedule.probes[jobs[j].probe];
      service[j] = service_time(replies[j].latency_ms);
      ProbeResult r{.probe_id = spec.probe_id,
                    .driver = spec.driver,
                    .target = spec.target,
                    .due_at = jobs[j].due_at,
                    .started_at = t,
                    .outcome = replies[j].outcome,
                    .latency_ms = std::max(0.0, std::isfinite(replies[j].latency_ms) ? replies[j].latency_ms : 0.0),
                    .metrics = std::move(replies[j].metrics),
                    .message = std::move(replies[j].message),
                    .event_class = std::move(replies[j].event_class)};
      in_flight.emplace(first_dispatch + j, std::move(r));
    }
    return service;
  };
  auto on_complete = [&](const Job&, std::size_t dispatch, TimestampMs, TimestampMs finished, bool missed) {
    auto node = in_flight.extract(dispatch);
    ProbeResult& r = node.mapped();
    r.finished_at = finished;
    r.deadline_missed = missed;
    out.events.push_back(to_raw_event(r));
    out.results.push_back(std::move(r));
  };

  out.report = simulate(schedule, workers, until_ms, true, start_batch, on_complete);
  return out;
}

int required_workers(std::span<const ProbeSpec> specs, double driver_latency_ms) {
  if (specs.empty()) return 1;
  const TimestampMs service = service_time(driver_latency_ms);
  if (service == 0) return 1;

  double utilization = 0.0;
  std::vector<std::int64_t> deadlines;
  std::int64_t hyper = 1, max_deadline = 0;
  constexpr std::int64_t kHorizonCap = 10'000'000;
  for (const auto& s : specs) {
    validate(s);
    if (service > s.deadline_ms) {
      throw Error(ErrorCode::kInvalidArgument, s.probe_id + ": latency exceeds the deadline, no pool size suffices");
    }
    utilization += static_cast<double>(service) / static_cast<double>(s.period_ms);
    deadlines.push_back(s.deadline_ms);
    hyper = lcm_capped(hyper, s.period_ms, kHorizonCap);
    max_deadline = std::max(max_deadline, s.deadline_ms);
  }

  // Synchronized release: the i-th job in deadline order (1-based) finishes
  // after ceil(i / W) service slots, and must fit floor(d_i / L) of them.
  std::sort(deadlines.begin(), deadlines.end());
  int bound = std::max(1, static_cast<int>(std::ceil(utilization - 1e-9)));
  for (std::size_t i = 0; i < deadlines.size(); ++i) {
    const auto slots = deadlines[i] / service;
    bound = std::max(bound, static_cast<int>((static_cast<std::int64_t>(i) + slots) / slots));
  }

  Schedule schedule{.origin_ms = 0, .probes = {specs.begin(), specs.end()}};
  std::sort(schedule.probes.begin(), schedule.probes.end(),
            [](const auto& a, const auto& b) { return a.probe_id < b.probe_id; });
  // A zero-miss run must also hold once the first hyperperiod's spill-over
  // interferes with the next synchronized release.
  const TimestampMs horizon = std::min(kHorizonCap, 3 * hyper) + max_deadline;
  auto constant = [&](std::span<const Job> jobs, TimestampMs, std::size_t) {
    return std::vector<TimestampMs>(jobs.size(), service);
  };
  auto ignore = [](const Job&, std::size_t, TimestampMs, TimestampMs, bool) {};
  auto misses = [&](int w) { return simulate(schedule, w, horizon, false, constant, ignore).missed; };
  const int upper = static_cast<int>(specs.size());
  int w = std::min(bound, upper);
  if (w > 1 && misses(w - 1) == 0) w = 1;
  for (; w < upper; ++w) {
    if (misses(w) == 0) return w;
  }
  return upper;
}

LiveCollector::LiveCollector(const Collector& collector, Schedule schedule, int workers, const Clock& clock, Sink sink)
    : collector_(collector),
      schedule_(std::move(schedule)),
      workers_(std::max(1, workers)),
      clock_(clock),
      sink_(std::move(sink)),
      busy_(schedule_.probes.size(), false),
      next_k_(schedule_.probes.size(), 0) {
  for (const auto& p : schedule_.probes) {
    if (buckets_.contains(p.target.id)) continue;
    auto b = schedule_.budgets.find(p.target.id);
    const double rate = b == schedule_.budgets.end() ? kDefaultProbesPerSec : b->second.max_probes_per_sec;
    const int burst = b == schedule_.budgets.end() ? kDefaultBurst : b->second.burst;
    buckets_.emplace(p.target.id, TokenBucket(rate, burst, schedule_.origin_ms));
  }
  report_.start_ms = report_.end_ms = schedule_.origin_ms;
}

LiveCollector::~LiveCollector() { stop(); }

void LiveCollector::start() {
  if (!threads_.empty()) return;
  threads_.emplace_back([this](std::stop_token st) { scheduler_loop(st); });
  for (int i = 0; i < workers_; ++i) {
    threads_.emplace_back([this](std::stop_token st) { worker_loop(st); });
  }
  spdlog::info("collector started: {} probes, {} workers", schedule_.probes.size(), workers_);
}

void LiveCollector::stop() {
  for (auto& t : threads_) t.request_stop();
  cv_.notify_all();
  threads_.clear();
}

DeadlineReport LiveCollector::report() const {
  std::lock_guard lock(mu_);
  return report_;
}

void LiveCollector::scheduler_loop(std::stop_token stop) {
  const auto& probes = schedule_.probes;
  EdfLater later{&probes};
  std::unique_lock lock(mu_);
  while (!stop.stop_requested()) {
    const TimestampMs now = clock_.now_ms();
    std::optional<TimestampMs> next;
    bool released = false;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      TimestampMs due = schedule_.origin_ms + next_k_[i] * probes[i].period_ms;
      while (due <= now) {
        ++next_k_[i];
        ++report_.due;
        if (busy_[i]) {
          ++report_.overruns;
        } else if (!buckets_.at(probes[i].target.id).try_acquire(due)) {
          ++report_.suppressed;
        } else {
          busy_[i] = true;
          ready_.push_back(Job{i, due, due + probes[i].deadline_ms});
          std::push_heap(ready_.begin(), ready_.end(), later);
          released = true;
        }
        due = schedule_.origin_ms + next_k_[i] * probes[i].period_ms;
      }
      if (!next || due < *next) next = due;
    }
    report_.end_ms = now;
    if (released) cv_.notify_all();
    const auto wait = std::chrono::milliseconds(next ? std::clamp<TimestampMs>(*next - now, 1, 50) : 50);
    cv_.wait_for(lock, stop, wait, [] { return false; });
  }
}

void LiveCollector::worker_loop(std::stop_token stop) {
  EdfLater later{&schedule_.probes};
  while (true) {
    Job job{};
    {
      std::unique_lock lock(mu_);
      if (!cv_.wait(lock, stop, [&] { return !ready_.empty(); })) return;
      std::pop_heap(ready_.begin(), ready_.end(), later);
      job = ready_.back();
      ready_.pop_back();
      ++report_.fired;
    }
    const ProbeSpec& spec = schedule_.probes[job.probe];
    const CredentialRecord* cred = schedule_.credentials[job.probe] ? &*schedule_.credentials[job.probe] : nullptr;
    const TimestampMs started = clock_.now_ms();
    DriverReply reply = collector_.invoke(spec, cred, started);
    const TimestampMs finished = std::max(started, clock_.now_ms());
    ProbeResult r{.probe_id = spec.probe_id,
                  .driver = spec.driver,
                  .target = spec.target,
                  .due_at = job.due_at,
                  .started_at = started,
                  .finished_at = finished,
                  .outcome = reply.outcome,
                  .latency_ms = static_cast<double>(finished - started),
                  .metrics = std::move(reply.metrics),
                  .message = std::move(reply.message),
                  .event_class = std::move(reply.event_class),
                  .deadline_missed = finished - job.due_at > spec.deadline_ms};
    {
      std::lock_guard lock(mu_);
      busy_[job.probe] = false;
      if (r.deadline_missed) {
        ++report_.missed;
        report_.worst_lateness_ms = std::max(report_.worst_lateness_ms, finished - job.abs_deadline);
      }
    }
    sink_(to_raw_event(r), r);
  }
}

}  // namespace cloudbus
