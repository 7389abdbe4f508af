// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cloudbus {

enum class ErrorCode {
  kNoMatchingRule,
  kMissingField,
  kInvalidComponent,
  kMalformedLine,
  kSchemaViolation,
  kAuthError,
  kValidationError,
  kInvalidArgument,
  kClosed,
  kUnknownSubscription,
  kDuplicateDriver,
  kUnknownDriver,
  kUnauthorizedProbe,
  kInvalidSpec,
  kUnknownComponent,
  kCycleError,
  kLayerError,
  kInvalidScenario,
  kConfigError,
};

/// Stable snake_case name, used in gateway error bodies and CLI diagnostics.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cloudbus
