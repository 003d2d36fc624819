// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "chaudit/collector.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fmt/format.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <sstream>

#include "chaudit/error.hpp"

namespace chaudit::collector {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void validate(const CollectorConfig& config) {
  if (config.poll_interval <= std::chrono::milliseconds::zero()) {
    throw Error(Errc::InvalidArgument, "poll interval must be positive");
  }
  if (config.batch_max < 1) throw Error(Errc::InvalidArgument, "batch_max must be at least 1");
  if (!store::is_valid_collection_name(config.device)) {
    throw Error(Errc::InvalidArgument, fmt::format("invalid device name '{}'", config.device));
  }
  if (config.store_dir.empty()) throw Error(Errc::InvalidArgument, "store_dir is required");
  if (config.max_retries < 0) throw Error(Errc::InvalidArgument, "max_retries must be >= 0");
}

CollectorConfig apply_env(CollectorConfig config) {
  if (const char* dir = std::getenv("AUDIT_DATA_DIR"); dir && *dir) config.store_dir = dir;
  if (const char* secs = std::getenv("AUDIT_POLL_SECS"); secs && *secs) {
    std::string_view text(secs);
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !(value > 0) || value > 86400) {
      throw Error(Errc::InvalidArgument, fmt::format("AUDIT_POLL_SECS '{}' is not a positive number", text));
    }
    config.poll_interval = std::chrono::milliseconds{static_cast<std::int64_t>(value * 1000)};
    if (config.poll_interval.count() == 0) config.poll_interval = std::chrono::milliseconds{1};
  }
  return config;
}

fs::path checkpoint_path(const fs::path& store_dir, const std::string& device) {
  return store_dir / (device + ".checkpoint");
}

fs::path deadletter_path(const fs::path& store_dir, const std::string& device) {
  return store_dir / (device + ".deadletter");
}

std::optional<Checkpoint> load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(in);
    return Checkpoint{j.at("device").get<std::string>(), j.at("userid").get<std::string>(),
                      j.at("last_ingested_index").get<std::uint64_t>()};
  } catch (const std::exception& e) {
    throw Error(Errc::Io, fmt::format("unreadable checkpoint {}: {}", path.string(), e.what()));
  }
}

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  Checkpoint out = checkpoint;
  if (auto existing = load_checkpoint(path);
      existing && existing->device == out.device && existing->userid == out.userid) {
    out.last_ingested_index = std::max(out.last_ingested_index, existing->last_ingested_index);
  }
  ordered_json j;
  j["device"] = out.device;
  j["userid"] = out.userid;
  j["last_ingested_index"] = out.last_ingested_index;
  auto text = j.dump() + "\n";
  auto tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::Io, fmt::format("open {}: {}", tmp.string(), std::strerror(errno)));
  bool ok = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size()) &&
            ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) throw Error(Errc::Io, fmt::format("write {}: {}", tmp.string(), std::strerror(errno)));
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::Io, fmt::format("rename {}: {}", tmp.string(), ec.message()));
}

SimDevice::SimDevice(sim::SimFs& fs, std::string device) : fs_(fs), device_(std::move(device)) {}

namespace {

template <typename Fn>
auto device_call(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == Errc::UnknownDevice) throw Error(Errc::DeviceUnavailable, e.what());
    throw;
  }
}

std::optional<std::uint64_t> leading_index(std::string_view line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
  if (ec != std::errc{} || ptr == line.data() || v == 0) return std::nullopt;
  return v;
}

void quarantine(const fs::path& path, const std::vector<std::string>& lines) {
  if (lines.empty()) return;
  std::string text;
  for (const auto& l : lines) {
    for (char c : l) text.push_back(c == '\n' || c == '\r' ? ' ' : c);
    text.push_back('\n');
  }
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::Io, fmt::format("open {}: {}", path.string(), std::strerror(errno)));
  bool ok = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size()) &&
            ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) throw Error(Errc::Io, fmt::format("write {}: {}", path.string(), std::strerror(errno)));
}

}  // namespace

std::string SimDevice::register_user() {
  return device_call([&] { return fs_.changelog_register(device_); });
}

std::vector<std::string> SimDevice::read_lines(const std::string& userid, std::uint64_t since,
                                               std::size_t max) {
  return device_call([&] {
    std::vector<std::string> out;
    for (const auto& r : fs_.changelog_read(device_, userid, since, max)) {
      out.push_back(render_record(r));
    }
    return out;
  });
}

void SimDevice::clear(const std::string& userid, std::uint64_t end_index) {
  device_call([&] { return fs_.changelog_clear(device_, userid, end_index); });
}

bool default_sleep(std::chrono::milliseconds duration, std::stop_token stop) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  cv.wait_for(lock, stop, duration, [] { return false; });
  return !stop.stop_requested();
}

Collector::Collector(CollectorConfig config, Device& device, store::EventSink& sink,
                     std::function<Timestamp()> clock, CollectorHooks hooks)
    : config_(std::move(config)),
      device_(device),
      sink_(sink),
      clock_(std::move(clock)),
      hooks_(std::move(hooks)) {
  validate(config_);
  if (!clock_) {
    clock_ = [] { return std::chrono::time_point_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now()); };
  }
  std::error_code ec;
  fs::create_directories(config_.store_dir, ec);
  if (ec) {
    throw Error(Errc::Io, fmt::format("create {}: {}", config_.store_dir.string(), ec.message()));
  }
  auto lock_path = config_.store_dir / (config_.device + ".lock");
  lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) {
    throw Error(Errc::Io, fmt::format("open {}: {}", lock_path.string(), std::strerror(errno)));
  }
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw Error(Errc::Locked,
                fmt::format("another collector holds {} for {}", lock_path.string(), config_.device));
  }

  auto path = checkpoint_path(config_.store_dir, config_.device);
  auto saved = load_checkpoint(path);
  if (saved && saved->device == config_.device &&
      (!config_.userid || *config_.userid == saved->userid)) {
    checkpoint_ = *saved;
  } else {
    checkpoint_.device = config_.device;
    checkpoint_.userid = config_.userid ? *config_.userid : device_.register_user();
    checkpoint_.last_ingested_index = 0;
    save_checkpoint(path, checkpoint_);
  }
}

Collector::~Collector() {
  if (lock_fd_ >= 0) ::close(lock_fd_);
}

CycleReport Collector::run_cycle() {
  CycleReport report;
  auto lines = device_.read_lines(checkpoint_.userid, checkpoint_.last_ingested_index,
                                  config_.batch_max);
  report.read = lines.size();
  if (lines.empty()) return report;

  std::vector<AuditEvent> events;
  std::vector<std::string> rejected;
  std::uint64_t highest = checkpoint_.last_ingested_index;
  for (const auto& line : lines) {
    try {
      AuditEvent e;
      e.device = config_.device;
      e.record = parse_record(line);
      validate_record(e.record);
      e.ingested_at = clock_();
      highest = std::max(highest, e.record.index);
      events.push_back(std::move(e));
    } catch (const Error&) {
      rejected.push_back(line);
      if (auto idx = leading_index(line)) highest = std::max(highest, *idx);
    }
  }

  if (!events.empty()) {
    std::vector<store::AppendResult> results;
    try {
      results = sink_.append_batch(events);
    } catch (const Error& e) {
      if (e.code() == Errc::Io || e.code() == Errc::StoreUnavailable) {
        throw Error(Errc::StoreUnavailable, e.what());
      }
      throw;
    }
    for (const auto& r : results) ++(r.stored ? report.ingested : report.duplicates);
  }
  quarantine(deadletter_path(config_.store_dir, config_.device), rejected);
  report.quarantined = rejected.size();

  if (hooks_.after_append) hooks_.after_append();

  if (highest > checkpoint_.last_ingested_index) {
    device_.clear(checkpoint_.userid, highest);
    report.cleared_to = highest;
    checkpoint_.last_ingested_index = highest;
    save_checkpoint(checkpoint_path(config_.store_dir, config_.device), checkpoint_);
  }
  return report;
}

void Collector::run_loop(std::stop_token stop, const Sleeper& sleep,
                         const std::function<void(const CycleReport&)>& on_cycle) {
  int failures = 0;
  while (!stop.stop_requested()) {
    auto delay = config_.poll_interval;
    try {
      auto report = run_cycle();
      failures = 0;
      if (on_cycle) on_cycle(report);
    } catch (const Error& e) {
      if (e.code() == Errc::DeviceUnavailable) {
        // Skip this cycle.
      } else if (e.code() == Errc::StoreUnavailable) {
        if (++failures > config_.max_retries) throw;
        auto backoff = config_.backoff_base * (std::int64_t{1} << std::min(failures - 1, 20));
        delay = std::min(backoff, config_.backoff_cap);
      } else {
        throw;
      }
    }
    if (!sleep(delay, stop)) break;
  }
  save_checkpoint(checkpoint_path(config_.store_dir, config_.device), checkpoint_);
}

}  // namespace chaudit::collector
