// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// HTTP/JSON service over the store and, when attached, the simulator.
//
// All JSON bodies use application/vnd.chaudit.v1+json; errors are
// {"code": <name>, "message": <text>}. The *_view builders below define the
// bodies and are shared with the CLI's --format json output.

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "chaudit/error.hpp"
#include "chaudit/simfs.hpp"
#include "chaudit/store.hpp"
#include "chaudit/workload.hpp"

namespace chaudit::api {

using nlohmann::ordered_json;

inline constexpr std::string_view kMediaType = "application/vnd.chaudit.v1+json";
inline constexpr std::string_view kPrefix = "/api/v1";

struct ApiConfig {
  std::string host = "127.0.0.1";
  /// 0 picks a free port (tests).
  int port = 8080;
  std::filesystem::path store_dir;
  std::optional<std::filesystem::path> static_dir;
  std::chrono::milliseconds heartbeat{15'000};
  /// How often the server tails the store files for appends made by other
  /// processes; zero disables tailing.
  std::chrono::milliseconds refresh_interval{500};
  std::size_t threads = 32;
};

/// Throws Error{InvalidArgument}.
void validate(const ApiConfig& config);

int http_status(Errc code) noexcept;

ordered_json error_view(Errc code, std::string_view message);
ordered_json event_view(const AuditEvent& event);
ordered_json devices_view(const std::vector<store::CollectionInfo>& collections);
ordered_json page_view(const store::Page& page);
ordered_json trail_view(const Fid& fid, const std::vector<AuditEvent>& events);
ordered_json counts_view(store::Dimension dimension,
                         const std::map<std::string, std::size_t>& counts);
ordered_json timeline_view(std::int64_t bucket_seconds,
                           const std::vector<std::pair<Timestamp, std::size_t>>& buckets);
ordered_json denied_view(const std::vector<store::DeniedOpenRow>& rows);
ordered_json verify_view(const std::string& device, const store::VerifyResult& result);
ordered_json df_view(const sim::CapacityReport& report);

/// Query parameters (name -> values, in order) to a QuerySpec. Recognized:
/// device, type (repeatable and/or comma separated), uid, gid, fid, nid,
/// name_contains, from, to, limit, cursor. Throws Error{BadSpec} or
/// Error{BadCursor}.
store::QuerySpec parse_query(const std::multimap<std::string, std::string>& params);

/// Accepts `[0x..:0x..:0x..]` and the unbracketed form.
Fid parse_fid_param(std::string_view text);

/// `<device>:<index>`, several joined by commas.
std::map<std::string, std::uint64_t> parse_stream_position(std::string_view text);
std::string format_stream_position(const std::map<std::string, std::uint64_t>& position);

enum class RunState { Running, Completed, Failed };

struct RunStatus {
  std::string id;
  std::string script;
  RunState state = RunState::Running;
  std::size_t op_count = 0;
  std::size_t ops = 0;
  std::vector<sim::RunFailure> failures;
  std::optional<std::string> error;
  Timestamp started_at{};
  std::optional<Timestamp> finished_at;
};

ordered_json run_view(const RunStatus& status);

/// Runs workload scripts against a SimFs on background threads.
class WorkloadRunner {
 public:
  explicit WorkloadRunner(sim::SimFs& fs);
  ~WorkloadRunner();

  /// Parses synchronously (Error{ScriptParse}); runs asynchronously.
  RunStatus submit(std::string name, std::string_view text, sim::RunOptions options);
  std::optional<RunStatus> status(const std::string& id) const;
  /// Blocks until the run finishes (tests, CLI).
  std::optional<RunStatus> wait(const std::string& id) const;

 private:
  struct Run;
  sim::SimFs& fs_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::vector<std::jthread> threads_;
  std::uint64_t next_id_ = 1;
};

class Server {
 public:
  /// `sim` null leaves the /sim endpoints returning 403 SimDisabled.
  Server(ApiConfig config, store::AuditStore& store, sim::SimFs* sim = nullptr);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving on background threads; returns the bound port.
  /// Throws Error{BindError}.
  int start();
  /// Stops accepting, ends open streams and joins.
  void stop();
  int port() const { return port_; }
  bool running() const { return running_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::atomic<bool> running_{false};
};

}  // namespace chaudit::api
