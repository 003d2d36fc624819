// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Ingestion daemon: poll a device's changelog, normalize records into
// AuditEvents, append them to the store, then clear what was appended.
//
// Ordering is append -> clear -> checkpoint. A crash anywhere in between
// replays records the store already holds; store dedup absorbs them.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "chaudit/model.hpp"
#include "chaudit/simfs.hpp"
#include "chaudit/store.hpp"

namespace chaudit::collector {

inline constexpr std::chrono::seconds kDefaultPollInterval{5};
inline constexpr std::size_t kDefaultBatchMax = 1024;

struct CollectorConfig {
  std::string device = "lustre-MDT0000";
  std::chrono::milliseconds poll_interval = kDefaultPollInterval;
  std::size_t batch_max = kDefaultBatchMax;
  /// Registered fresh when absent (and no checkpoint names one).
  std::optional<std::string> userid;
  std::filesystem::path store_dir;
  /// Consecutive StoreUnavailable cycles tolerated by run_loop.
  int max_retries = 5;
  std::chrono::milliseconds backoff_base{1000};
  std::chrono::milliseconds backoff_cap{60'000};
};

/// Throws Error{InvalidArgument}.
void validate(const CollectorConfig& config);

/// Applies AUDIT_DATA_DIR and AUDIT_POLL_SECS when set. Throws
/// Error{InvalidArgument} on an unparsable AUDIT_POLL_SECS.
CollectorConfig apply_env(CollectorConfig config);

struct Checkpoint {
  std::string device;
  std::string userid;
  std::uint64_t last_ingested_index = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& store_dir,
                                      const std::string& device);
std::filesystem::path deadletter_path(const std::filesystem::path& store_dir,
                                      const std::string& device);
std::optional<Checkpoint> load_checkpoint(const std::filesystem::path& path);
/// Atomic replace. Never moves last_ingested_index backwards relative to the
/// file already on disk.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Changelog source. read_lines returns raw changelog text lines with
/// index > since, oldest first.
class Device {
 public:
  virtual ~Device() = default;
  virtual std::string register_user() = 0;
  virtual std::vector<std::string> read_lines(const std::string& userid, std::uint64_t since,
                                              std::size_t max) = 0;
  virtual void clear(const std::string& userid, std::uint64_t end_index) = 0;
};

/// A SimFs MDT seen through its changelog text interface.
class SimDevice : public Device {
 public:
  SimDevice(sim::SimFs& fs, std::string device);
  std::string register_user() override;
  std::vector<std::string> read_lines(const std::string& userid, std::uint64_t since,
                                      std::size_t max) override;
  void clear(const std::string& userid, std::uint64_t end_index) override;

 private:
  sim::SimFs& fs_;
  std::string device_;
};

struct CycleReport {
  std::size_t read = 0;
  std::size_t ingested = 0;
  std::size_t duplicates = 0;
  std::size_t quarantined = 0;
  std::uint64_t cleared_to = 0;

  friend bool operator==(const CycleReport&, const CycleReport&) = default;
};

/// Test seam: runs after the append, before the clear.
struct CollectorHooks {
  std::function<void()> after_append;
};

/// Sleeps for the given duration; returns false when interrupted by `stop`.
using Sleeper = std::function<bool(std::chrono::milliseconds, std::stop_token)>;
bool default_sleep(std::chrono::milliseconds duration, std::stop_token stop);

class Collector {
 public:
  /// Takes the per-device lock (Error{Locked} if another collector holds
  /// it), then resumes from the checkpoint or registers a changelog user.
  Collector(CollectorConfig config, Device& device, store::EventSink& sink,
            std::function<Timestamp()> clock = {}, CollectorHooks hooks = {});
  ~Collector();

  Collector(const Collector&) = delete;
  Collector& operator=(const Collector&) = delete;

  /// One poll. Throws Error{StoreUnavailable} (nothing cleared),
  /// Error{DeviceUnavailable}, Error{Conflict}.
  CycleReport run_cycle();

  /// Fixed-delay loop until `stop`: cycle, sleep poll_interval, repeat.
  /// DeviceUnavailable skips a cycle; StoreUnavailable backs off and is
  /// rethrown once max_retries consecutive attempts failed.
  void run_loop(std::stop_token stop, const Sleeper& sleep = default_sleep,
                const std::function<void(const CycleReport&)>& on_cycle = {});

  const Checkpoint& checkpoint() const { return checkpoint_; }
  const CollectorConfig& config() const { return config_; }

 private:
  CollectorConfig config_;
  Device& device_;
  store::EventSink& sink_;
  std::function<Timestamp()> clock_;
  CollectorHooks hooks_;
  Checkpoint checkpoint_;
  int lock_fd_ = -1;
};

}  // namespace chaudit::collector
