// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace chaudit {

enum class Errc {
  MalformedRecord,
  UnknownType,
  UnknownDevice,
  UnknownUser,
  IndexOutOfRange,
  NoEnt,
  Exists,
  NotDir,
  IsDir,
  NotEmpty,
  PermissionDenied,
  NoSpace,
  InvalidArgument,
  ScriptParse,
  Conflict,
  Io,
  UnknownCollection,
  BadCursor,
  BadSpec,
  StoreUnavailable,
  DeviceUnavailable,
  Locked,
  SimDisabled,
  NotFound,
  BindError,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure in the library is reported as an Error carrying a stable code.
/// MalformedRecord errors also carry the byte offset of the offending token,
/// ScriptParse errors the 1-based line number.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message,
        std::optional<std::size_t> position = std::nullopt)
      : std::runtime_error(message), code_(code), position_(position) {}

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> position() const noexcept { return position_; }

 private:
  Errc code_;
  std::optional<std::size_t> position_;
};

}  // namespace chaudit
