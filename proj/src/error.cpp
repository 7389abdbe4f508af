// Copyright 2026 The Cloudbus Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cloudbus/error.hpp"

namespace cloudbus {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoMatchingRule: return "no_matching_rule";
    case ErrorCode::kMissingField: return "missing_field";
    case ErrorCode::kInvalidComponent: return "invalid_component";
    case ErrorCode::kMalformedLine: return "malformed_line";
    case ErrorCode::kSchemaViolation: return "schema_violation";
    case ErrorCode::kAuthError: return "auth_error";
    case ErrorCode::kValidationError: return "validation_error";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kClosed: return "closed";
    case ErrorCode::kUnknownSubscription: return "unknown_subscription";
    case ErrorCode::kDuplicateDriver: return "duplicate_driver";
    case ErrorCode::kUnknownDriver: return "unknown_driver";
    case ErrorCode::kUnauthorizedProbe: return "unauthorized_probe";
    case ErrorCode::kInvalidSpec: return "invalid_spec";
    case ErrorCode::kUnknownComponent: return "unknown_component";
    case ErrorCode::kCycleError: return "cycle_error";
    case ErrorCode::kLayerError: return "layer_error";
    case ErrorCode::kInvalidScenario: return "invalid_scenario";
    case ErrorCode::kConfigError: return "config_error";
  }
  return "unknown";
}

}  // namespace cloudbus
