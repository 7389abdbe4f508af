// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>

#include "cloudbus/event_model.hpp"

namespace cloudbus {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now_ms() const = 0;
};

/// Milliseconds since the Unix epoch, UTC.
class SystemClock final : public Clock {
 public:
  TimestampMs now_ms() const override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }
};

/// Externally driven clock for simulations and tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimestampMs start = 0) : now_(start) {}

  TimestampMs now_ms() const override { return now_.load(std::memory_order_acquire); }
  void set(TimestampMs t) { now_.store(t, std::memory_order_release); }
  void advance(TimestampMs delta) { now_.fetch_add(delta, std::memory_order_acq_rel); }

 private:
  std::atomic<TimestampMs> now_;
};

}  // namespace cloudbus
