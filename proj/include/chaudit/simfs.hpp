// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Simulated Lustre cluster: one MDT holding a permissioned namespace, files
// striped over a set of OSTs, and an MDT changelog with registered users.

#pragma once

#include <bitset>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "chaudit/model.hpp"

namespace chaudit::sim {

inline constexpr std::uint64_t KiB = 1024;
inline constexpr std::uint64_t MiB = 1024 * KiB;
inline constexpr std::uint64_t GiB = 1024 * MiB;

/// Bytes charged to the MDT for every live inode.
inline constexpr std::uint64_t kInodeBytes = 4 * KiB;
inline constexpr std::uint64_t kStripeSize = 1 * MiB;

struct TargetSpace {
  std::string name;
  std::uint64_t capacity = 0;
  std::uint64_t used = 0;
};

struct Topology {
  std::string fsname = "lustre";
  TargetSpace mdt;
  std::vector<TargetSpace> osts;
  int oss_count = 2;
  int osts_per_oss = 6;

  /// 1 MDT (1.1 GiB) and oss_count * osts_per_oss OSTs of 1.8 GiB each, named
  /// `<fs>-MDT0000` and `<fs>-OST%04x`.
  static Topology standard(std::string fsname = "lustre", int oss_count = 2,
                           int osts_per_oss = 6);
};

std::string ost_name(const std::string& fsname, std::size_t index);

enum class InodeKind { File, Dir, Symlink, Device };

struct Stripe {
  std::size_t ost = 0;
  std::uint64_t bytes = 0;
};

struct Inode {
  Fid fid;
  InodeKind kind = InodeKind::File;
  std::uint16_t mode = 0644;
  std::uint32_t uid = 0;
  std::uint32_t gid = 0;
  std::uint64_t size = 0;
  std::uint32_t nlink = 1;
  std::vector<Stripe> stripes;
  std::map<std::string, std::string> xattrs;
  Timestamp atime{};
  Timestamp mtime{};
  Timestamp ctime{};
  // Directories only.
  std::map<std::string, Fid> entries;
  Fid parent;
  // Symlinks only.
  std::string link_target;
};

struct ClientCtx {
  std::uint32_t uid = 0;
  std::uint32_t gid = 0;
  Nid nid;
};

/// Which record kinds the MDT emits. MARK is emitted regardless.
class ChangelogMask {
 public:
  static ChangelogMask all();
  static ChangelogMask none() { return {}; }
  /// Every kind except the audit-only ones (OPEN, NOPEN, ATIME, GXATR).
  static ChangelogMask standard();

  bool contains(RecordKind kind) const { return bits_.test(static_cast<std::size_t>(kind)); }
  void set(RecordKind kind, bool on = true) { bits_.set(static_cast<std::size_t>(kind), on); }
  std::vector<std::string> names() const;

  friend bool operator==(const ChangelogMask&, const ChangelogMask&) = default;

 private:
  std::bitset<kRecordKindCount> bits_;
};

struct ChangelogState {
  std::uint64_t next_index = 1;
  std::deque<ChangelogRecord> ring;
  /// userid -> cleared index, in registration order.
  std::vector<std::pair<std::string, std::uint64_t>> users;
  std::uint64_t registrations = 0;
  ChangelogMask mask = ChangelogMask::standard();
};

namespace op {
struct Mkdir { std::string path; std::uint16_t mode = 0755; };
struct Create { std::string path; std::uint16_t mode = 0644; };
struct Open { std::string path; AccessMask access; };
struct Close { std::string path; };
struct Write { std::string path; std::uint64_t bytes = 0; };
struct Truncate { std::string path; std::uint64_t size = 0; };
struct Chmod { std::string path; std::uint16_t mode = 0; };
struct Chown { std::string path; std::uint32_t uid = 0; std::uint32_t gid = 0; };
struct SetXattr { std::string path; std::string name; std::string value; };
struct GetXattr { std::string path; std::string name; };
struct Link { std::string src; std::string dst; };
struct Symlink { std::string target; std::string path; };
struct Mknod { std::string path; std::uint16_t mode = 0644; };
struct Unlink { std::string path; };
struct Rmdir { std::string path; };
struct Rename { std::string src; std::string dst; };
struct LayoutChange { std::string path; std::uint32_t stripe_count = 1; };
struct Migrate { std::string path; std::size_t ost = 0; };
struct HsmEvent { std::string path; };
struct FlrWrite { std::string path; };
struct FlrResync { std::string path; };
enum class TimeField { Atime, Mtime, Ctime };
struct Touch { std::string path; TimeField field = TimeField::Atime; };
}  // namespace op

using FsOp = std::variant<op::Mkdir, op::Create, op::Open, op::Close, op::Write, op::Truncate,
                          op::Chmod, op::Chown, op::SetXattr, op::GetXattr, op::Link, op::Symlink,
                          op::Mknod, op::Unlink, op::Rmdir, op::Rename, op::LayoutChange,
                          op::Migrate, op::HsmEvent, op::FlrWrite, op::FlrResync, op::Touch>;

struct OpResult {
  Fid fid;
  std::optional<std::string> value;
};

struct CapacityRow {
  std::string uuid;
  std::uint64_t total = 0;
  std::uint64_t used = 0;
  std::uint64_t available = 0;
  int use_percent = 0;
  std::string mount;
};

struct CapacityReport {
  std::vector<CapacityRow> rows;
  CapacityRow summary;
};

/// `lfs df -h` style rendering: one decimal and a K/M/G/T/P/E suffix.
std::string human_size(std::uint64_t bytes);
/// Fixed-width table: UUID, bytes, Used, Available, Use%, Mounted on.
std::string render_df(const CapacityReport& report);

struct SimOptions {
  Topology topology = Topology::standard();
  /// Virtual clock start; advances by `tick` per mutating call.
  Timestamp epoch = Timestamp{std::chrono::sys_days{std::chrono::year{2024} /
                                                    std::chrono::January / 1}
                                  .time_since_epoch()};
  std::chrono::nanoseconds tick = std::chrono::milliseconds{1};
  /// Replaces the virtual clock when set.
  std::function<Timestamp()> clock;
  std::uint32_t default_stripe_count = 1;
  std::string mount_point = "/mnt/lustre";
};

/// Single-writer state machine. Mutating calls take an exclusive lock;
/// changelog_read, df, stat and now() take a shared one.
class SimFs {
 public:
  explicit SimFs(SimOptions options = {});

  SimFs(const SimFs&) = delete;
  SimFs& operator=(const SimFs&) = delete;

  const std::string& mdt_name() const { return mdt_name_; }
  std::vector<std::string> devices() const;

  std::string changelog_register(const std::string& device);
  /// `ALL`, or type names separated by spaces or commas.
  std::vector<std::string> set_mask(const std::string& device, const std::string& spec);
  std::vector<std::string> set_mask(const std::string& device, const ChangelogMask& mask);
  ChangelogMask mask(const std::string& device) const;

  OpResult apply(const ClientCtx& ctx, const FsOp& op);

  std::vector<ChangelogRecord> changelog_read(const std::string& device,
                                              const std::string& userid,
                                              std::uint64_t since_index,
                                              std::size_t max) const;
  std::uint64_t changelog_clear(const std::string& device, const std::string& userid,
                                std::uint64_t end_index);
  /// Highest index ever assigned (0 before the first record).
  std::uint64_t last_index(const std::string& device) const;
  /// Snapshot of the changelog bookkeeping (ring, users, mask).
  ChangelogState changelog_state(const std::string& device) const;

  /// Rows for the named targets, or all of them when `targets` is empty.
  CapacityReport df(const std::vector<std::string>& targets = {}) const;

  std::optional<Inode> stat(const std::string& path) const;
  std::optional<Inode> inode(const Fid& fid) const;
  /// Sum of stripe bytes over live files, and of used bytes over OSTs.
  std::uint64_t live_file_bytes() const;
  std::uint64_t ost_used_bytes() const;
  Topology topology() const;

  Timestamp now() const;
  static Fid root_fid() { return Fid{0x200000007, 0x1, 0x0}; }

 private:
  class Mutation;

  ChangelogState& changelog(const std::string& device);
  const ChangelogState& changelog(const std::string& device) const;
  Timestamp advance_clock();
  void emit(ChangelogRecord record);
  std::uint64_t purge(ChangelogState& cl);
  Fid allocate_fid();

  SimOptions options_;
  std::string mdt_name_;
  mutable std::shared_mutex mutex_;
  Topology topology_;
  std::map<Fid, Inode> inodes_;
  ChangelogState changelog_;
  Timestamp clock_;
  std::uint64_t next_sequence_ = 0x200000401;
  std::uint32_t next_oid_ = 1;
  std::size_t next_ost_ = 0;
};

}  // namespace chaudit::sim
