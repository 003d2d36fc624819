// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Random record/corpus generators and a brute-force query oracle. The oracle
// deliberately shares no code with the store: it filters a plain vector with
// its own predicate, grouping and bucketing.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chaudit/model.hpp"
#include "chaudit/store.hpp"

namespace testsupport {

using namespace chaudit;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("chaudit-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Timestamp ts_of(int y, unsigned mo, unsigned d, int h, int mi, int s, std::int64_t ns = 0) {
  using namespace std::chrono;
  return Timestamp{sys_days{year{y} / month{mo} / day{d}}.time_since_epoch() + hours{h} +
                   minutes{mi} + seconds{s} + nanoseconds{ns}};
}

inline const std::vector<Nid>& nid_pool() {
  static const std::vector<Nid> pool = {
      Nid{{10, 128, 11, 159}, "tcp", std::nullopt},
      Nid{{10, 128, 11, 160}, "tcp", std::nullopt},
      Nid{{192, 168, 0, 7}, "o2ib", 1},
  };
  return pool;
}

inline const std::vector<Fid>& fid_pool() {
  static const std::vector<Fid> pool = {
      {0x200000007, 0x1, 0}, {0x200000401, 0x1, 0}, {0x200000401, 0x2, 0},
      {0x200000401, 0x3, 0}, {0x200000401, 0x4, 0}, {0x20000401, 0x2, 0},
  };
  return pool;
}

/// A valid record of a random kind; optional fields chosen at random where
/// the kind allows.
inline ChangelogRecord random_record(std::mt19937_64& rng, std::uint64_t index, Timestamp base,
                                     std::chrono::seconds spread) {
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  static const char* names[] = {"alpha", "beta.txt", "report-final.txt", "data_01", "x",
                                "Ünïcødé", "file with space"};
  ChangelogRecord r;
  r.index = index;
  r.type = static_cast<RecordKind>(pick(kRecordKindCount));
  auto ns = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(
                                                   std::chrono::nanoseconds(spread).count()));
  r.set_timestamp(base + std::chrono::nanoseconds{ns});
  r.flags = rng() % 0x1000;
  r.target = fid_pool()[pick(fid_pool().size())];
  bool open = r.type == RecordKind::Open || r.type == RecordKind::Nopen;
  std::uint64_t ef = 0;
  if (open || pick(3) != 0) {
    r.user = Credentials{static_cast<std::uint32_t>(pick(4) * 250), static_cast<std::uint32_t>(pick(3) * 100)};
    ef |= 0x1;
  }
  if (open || pick(3) != 0) {
    r.nid = nid_pool()[pick(nid_pool().size())];
    ef |= 0x2;
  }
  if (open || pick(6) == 0) {
    r.mode_mask = AccessMask{pick(2) == 0, pick(2) == 0, pick(2) == 0};
    ef |= 0x4;
  }
  if (ef != 0) r.ext_flags = ef;
  if (is_namespace_kind(r.type) || (!open && pick(5) == 0)) {
    r.parent = fid_pool()[pick(fid_pool().size())];
    r.name = names[pick(std::size(names))];
  }
  return r;
}

/// Events over `devices`, gapless ascending indices per device, ingestion
/// times fixed so corpora are reproducible.
inline std::vector<AuditEvent> random_corpus(std::uint64_t seed, std::size_t n,
                                             const std::vector<std::string>& devices) {
  std::mt19937_64 rng(seed);
  std::map<std::string, std::uint64_t> next;
  std::vector<AuditEvent> out;
  auto base = ts_of(2024, 3, 1, 12, 0, 0);
  for (std::size_t i = 0; i < n; ++i) {
    AuditEvent e;
    e.device = devices[rng() % devices.size()];
    e.record = random_record(rng, ++next[e.device], base, std::chrono::hours{2});
    e.ingested_at = base + std::chrono::hours{3} + std::chrono::milliseconds{static_cast<std::int64_t>(i)};
    out.push_back(std::move(e));
  }
  return out;
}

// --- oracle ----------------------------------------------------------------

inline bool oracle_match(const store::QuerySpec& q, const AuditEvent& e) {
  const auto& r = e.record;
  if (q.device.has_value() && !(e.device == *q.device)) return false;
  auto t = r.timestamp();
  if (q.from_ts.has_value() && t < *q.from_ts) return false;
  if (q.to_ts.has_value() && *q.to_ts < t) return false;
  if (q.types.has_value()) {
    bool any = false;
    for (auto k : *q.types) any = any || k == r.type;
    if (!any) return false;
  }
  if (q.uid.has_value() && !(r.user.has_value() && r.user->uid == *q.uid)) return false;
  if (q.gid.has_value() && !(r.user.has_value() && r.user->gid == *q.gid)) return false;
  if (q.fid.has_value() && !(r.target == *q.fid)) return false;
  if (q.nid.has_value() && !(r.nid.has_value() && to_string(*r.nid) == to_string(*q.nid))) {
    return false;
  }
  if (q.name_contains.has_value()) {
    if (!r.name.has_value()) return false;
    if (std::search(r.name->begin(), r.name->end(), q.name_contains->begin(),
                    q.name_contains->end()) == r.name->end()) {
      return false;
    }
  }
  return true;
}

/// Full filtered result in (device, index) order.
inline std::vector<AuditEvent> oracle_query(const std::vector<AuditEvent>& corpus,
                                            const store::QuerySpec& q) {
  std::vector<AuditEvent> out;
  for (const auto& e : corpus) {
    if (oracle_match(q, e)) out.push_back(e);
  }
  std::sort(out.begin(), out.end(), [](const AuditEvent& a, const AuditEvent& b) {
    if (a.device != b.device) return a.device < b.device;
    return a.record.index < b.record.index;
  });
  return out;
}

inline std::map<std::string, std::size_t> oracle_counts(const std::vector<AuditEvent>& corpus,
                                                        const store::QuerySpec& q,
                                                        store::Dimension dim) {
  std::map<std::string, std::size_t> out;
  for (const auto& e : oracle_query(corpus, q)) {
    std::string key = "-";
    if (dim == store::Dimension::Type) key = std::string(record_type(e.record.type).name);
    if (dim == store::Dimension::Uid && e.record.user) key = std::to_string(e.record.user->uid);
    if (dim == store::Dimension::Nid && e.record.nid) key = to_string(*e.record.nid);
    out[key] += 1;
  }
  return out;
}

inline std::vector<std::pair<Timestamp, std::size_t>> oracle_timeline(
    const std::vector<AuditEvent>& corpus, const store::QuerySpec& q, std::int64_t bucket) {
  std::map<std::int64_t, std::size_t> by_start;
  const std::int64_t width = bucket * 1'000'000'000LL;
  for (const auto& e : oracle_query(corpus, q)) {
    std::int64_t ns = e.record.timestamp().time_since_epoch().count();
    std::int64_t start = ns - (((ns % width) + width) % width);
    by_start[start] += 1;
  }
  std::vector<std::pair<Timestamp, std::size_t>> out;
  for (auto [s, n] : by_start) out.emplace_back(Timestamp{std::chrono::nanoseconds{s}}, n);
  return out;
}

/// Random spec over the corpus vocabulary; bounds drawn from the corpus
/// window so most specs select something.
inline store::QuerySpec random_spec(std::mt19937_64& rng, const std::vector<std::string>& devices) {
  auto coin = [&](int n) { return rng() % static_cast<std::uint64_t>(n) == 0; };
  store::QuerySpec q;
  auto base = ts_of(2024, 3, 1, 12, 0, 0);
  if (coin(3)) q.device = devices[rng() % devices.size()];
  if (coin(3)) q.from_ts = base + std::chrono::seconds{static_cast<std::int64_t>(rng() % 7200)};
  if (coin(3)) {
    auto lo = q.from_ts.value_or(base);
    q.to_ts = lo + std::chrono::seconds{static_cast<std::int64_t>(rng() % 7200)};
  }
  if (coin(3)) {
    q.types.emplace();
    auto n = 1 + rng() % 4;
    for (std::uint64_t i = 0; i < n; ++i) q.types->push_back(static_cast<RecordKind>(rng() % kRecordKindCount));
  }
  if (coin(4)) q.uid = static_cast<std::uint32_t>((rng() % 5) * 250);
  if (coin(5)) q.gid = static_cast<std::uint32_t>((rng() % 3) * 100);
  if (coin(5)) q.fid = fid_pool()[rng() % fid_pool().size()];
  if (coin(5)) q.nid = nid_pool()[rng() % nid_pool().size()];
  if (coin(6)) {
    static const char* parts[] = {"a", "txt", "final", "_0", "zz", " "};
    q.name_contains = parts[rng() % std::size(parts)];
  }
  q.limit = 1 + rng() % 200;
  return q;
}

}  // namespace testsupport
