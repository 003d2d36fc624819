// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Embedded append-only audit store.
//
// Layout under the store directory, one subdirectory per collection (device):
//
//   <dir>/<collection>/events.jsonl   one event per line, canonical field order
//   <dir>/<collection>/chain.head     "<hex digest> <last index>"
//
// Each persisted line carries chain_digest = SHA-256(previous digest || line
// bytes without the chain_digest member); the first link uses 32 zero bytes.
// The files are the durable format; every index is rebuilt on open.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "chaudit/model.hpp"

namespace chaudit::store {

inline constexpr std::size_t kDefaultLimit = 100;
inline constexpr std::size_t kMaxLimit = 10'000;

Digest sha256(std::span<const std::uint8_t> bytes);
/// SHA-256(previous || payload).
Digest chain_link(const Digest& previous, std::string_view payload);

/// Conjunction of filters. Absent fields match everything; `types`, when
/// present, matches events whose kind is in the list (an empty list matches
/// nothing). Time bounds are inclusive.
struct QuerySpec {
  std::optional<std::string> device;
  std::optional<Timestamp> from_ts;
  std::optional<Timestamp> to_ts;
  std::optional<std::vector<RecordKind>> types;
  std::optional<std::uint32_t> uid;
  std::optional<std::uint32_t> gid;
  std::optional<Fid> fid;
  std::optional<Nid> nid;
  std::optional<std::string> name_contains;
  std::size_t limit = kDefaultLimit;
  std::optional<std::string> cursor;
};

/// Throws Error{BadSpec}.
void validate(const QuerySpec& spec);
/// True when `event` satisfies every filter of `spec` (limit and cursor are
/// ignored).
bool matches(const QuerySpec& spec, const AuditEvent& event);

std::string encode_cursor(const std::string& device, std::uint64_t index);
/// Throws Error{BadCursor}.
std::pair<std::string, std::uint64_t> decode_cursor(std::string_view cursor);

struct Page {
  std::vector<AuditEvent> events;
  std::optional<std::string> next_cursor;
  std::size_t total = 0;
};

struct AppendResult {
  bool stored = false;
  Digest chain_digest{};
};

struct VerifyResult {
  bool ok = true;
  std::optional<std::uint64_t> first_bad_index;
  std::size_t checked = 0;
  Digest head{};
};

struct CollectionInfo {
  std::string name;
  std::size_t events = 0;
  std::uint64_t last_index = 0;
  Digest head{};
};

enum class Dimension { Type, Uid, Nid };

Dimension parse_dimension(std::string_view text);
std::string_view to_string(Dimension dimension);

struct DeniedOpenRow {
  std::uint32_t uid = 0;
  std::string nid;
  std::size_t count = 0;
  Timestamp first_ts{};
  Timestamp last_ts{};

  friend bool operator==(const DeniedOpenRow&, const DeniedOpenRow&) = default;
};

/// Destination for normalized events; the collector writes through this.
class EventSink {
 public:
  virtual ~EventSink() = default;
  /// Appends in order, all-or-nothing for durability: when this returns every
  /// stored event is on disk.
  virtual std::vector<AppendResult> append_batch(std::span<const AuditEvent> events) = 0;
};

struct StoreOptions {
  /// fsync data and head files before an append returns.
  bool sync = true;
  /// Readers never repair files; writers drop a torn trailing line on open.
  bool read_only = false;
};

/// One writer per collection, any number of readers. Readers observe a
/// committed prefix: events become visible only once durable.
class AuditStore : public EventSink {
 public:
  explicit AuditStore(std::filesystem::path dir, StoreOptions options = {});
  ~AuditStore() override;

  AuditStore(const AuditStore&) = delete;
  AuditStore& operator=(const AuditStore&) = delete;

  const std::filesystem::path& dir() const { return dir_; }

  /// Stores `event` in collection `device`. Idempotent for identical content;
  /// throws Error{Conflict} when the index exists with different content or
  /// is lower than the collection's last index, Error{Io} on write failure.
  AppendResult append(const std::string& device, AuditEvent event);
  std::vector<AppendResult> append_batch(std::span<const AuditEvent> events) override;

  /// Recomputes the chain from the persisted bytes.
  /// Throws Error{UnknownCollection}.
  VerifyResult verify_chain(const std::string& device) const;

  Page query(const QuerySpec& spec) const;
  std::vector<AuditEvent> trail(const Fid& fid) const;
  std::map<std::string, std::size_t> counts_by(Dimension dimension, const QuerySpec& spec) const;
  std::vector<std::pair<Timestamp, std::size_t>> timeline(const QuerySpec& spec,
                                                          std::int64_t bucket_seconds) const;
  std::vector<DeniedOpenRow> denied_open_report(const QuerySpec& spec) const;

  std::optional<AuditEvent> get(const std::string& device, std::uint64_t index) const;
  std::vector<CollectionInfo> collections() const;
  bool has_collection(const std::string& device) const;

  /// Events of `device` with index > after, ascending, at most `max`.
  std::vector<AuditEvent> events_after(const std::string& device, std::uint64_t after,
                                       std::size_t max) const;

  /// Loads lines appended by other processes since the last load.
  void refresh();

  /// Incremented on every commit; wait_for_commit blocks until it moves past
  /// `seen` or the timeout elapses.
  std::uint64_t commit_sequence() const;
  std::uint64_t wait_for_commit(std::uint64_t seen, std::chrono::milliseconds timeout) const;

 private:
  struct Collection;

  Collection& open_collection(const std::string& name, bool create);
  const Collection* find(const std::string& name) const;
  void load_new_lines(Collection& c);
  template <typename Fn>
  void scan(const QuerySpec& spec, Fn&& fn) const;

  std::filesystem::path dir_;
  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<Collection>> collections_;
  std::uint64_t commit_seq_ = 0;
  mutable std::mutex commit_mutex_;
  mutable std::condition_variable commit_cv_;
};

/// Accepted collection (device) names: a valid filename not starting with '.'.
bool is_valid_collection_name(std::string_view name);

}  // namespace chaudit::store
