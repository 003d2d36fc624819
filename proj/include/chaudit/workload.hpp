// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Line-oriented workload scripts driving a SimFs.
//
//   # comment
//   ctx 500 500 10.128.11.159@tcp
//   repeat 100 {
//     create /file{i:03} 0644
//     write /file{i:03} 10M
//   }
//
// `{i}` expands to the innermost repeat counter (from 0); `{i:0N}` pads it
// to N digits. Sizes take K/M/G suffixes (powers of 1024) and may carry a
// decimal fraction (`1.2M`).

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "chaudit/error.hpp"
#include "chaudit/simfs.hpp"

namespace chaudit::sim {

struct ScriptStep {
  std::size_t line = 0;
  std::variant<ClientCtx, FsOp> action;
};

struct Script {
  std::vector<ScriptStep> steps;
  std::size_t op_count() const;
};

/// Upper bound on expanded operations per script.
inline constexpr std::size_t kMaxScriptOps = 10'000'000;

/// Throws Error{ScriptParse} whose position() is the 1-based line number.
Script parse_script(std::string_view text);

/// Parses `123`, `10M`, `1.2M`, `4K`, `2G`. Throws Error{InvalidArgument}.
std::uint64_t parse_size(std::string_view text);

struct RunOptions {
  bool keep_going = false;
  ClientCtx initial_ctx{0, 0, Nid{{127, 0, 0, 1}, "tcp", std::nullopt}};
};

struct RunFailure {
  std::size_t op_number = 0;  // 1-based
  std::size_t line = 0;
  Errc code = Errc::InvalidArgument;
  std::string message;
};

struct RunReport {
  std::size_t ops = 0;
  std::vector<RunFailure> failures;
};

/// Raised by run_workload when an operation fails and keep_going is off.
class WorkloadError : public Error {
 public:
  WorkloadError(const Error& cause, std::size_t op_number, std::size_t line);
  std::size_t op_number() const noexcept { return op_number_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t op_number_;
  std::size_t line_;
};

RunReport run_workload(SimFs& fs, const Script& script, const RunOptions& options = {});

/// Scripts shipped with the library, by file name (e.g. `create100.wl`).
std::optional<std::string_view> builtin_script(std::string_view name);
std::vector<std::string> builtin_script_names();

}  // namespace chaudit::sim
