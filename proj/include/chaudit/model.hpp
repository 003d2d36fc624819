// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Changelog record domain types and the text grammar shared by the simulator,
// the collector and the store.
//
//   <index> <NN><NAME> <hh>:<mm>:<ss>.<frac> <yyyy>.<mm>.<dd> 0x<flags>
//       t=[<fid>] [ef=0x<hex>] [u=<uid>:<gid>] [nid=<nid>] [m=<rwx>]
//       [p=[<fid>] <name>]

#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace chaudit {

using Timestamp = std::chrono::sys_time<std::chrono::nanoseconds>;
using Digest = std::array<std::uint8_t, 32>;

/// File identifier: (sequence, object id, version).
struct Fid {
  std::uint64_t sequence = 0;
  std::uint32_t oid = 0;
  std::uint32_t version = 0;

  friend auto operator<=>(const Fid&, const Fid&) = default;
};

/// `[0x<seq>:0x<oid>:0x<ver>]`, lowercase hex without padding.
std::string to_string(const Fid& fid);
/// Accepts the bracketed form; hex digits and the `0x` prefix are
/// case-insensitive. Throws Error{MalformedRecord}.
Fid parse_fid(std::string_view text);

/// Network identifier `A.B.C.D@<net>[<n>]` with net `tcp` or `o2ib`.
struct Nid {
  std::array<std::uint8_t, 4> address{};
  std::string network = "tcp";
  std::optional<std::uint32_t> network_number;

  friend bool operator==(const Nid&, const Nid&) = default;
};

std::string to_string(const Nid& nid);
Nid parse_nid(std::string_view text);

enum class RecordKind : std::uint8_t {
  Mark,
  Creat,
  Mkdir,
  Hlink,
  Slink,
  Mknod,
  Unlnk,
  Rmdir,
  Renme,
  Rnmto,
  Open,
  Nopen,
  Close,
  Lyout,
  Trunc,
  Sattr,
  Xattr,
  Hsm,
  Mtime,
  Ctime,
  Atime,
  Migrt,
  Flrw,
  Resync,
  Gxatr,
};

inline constexpr std::size_t kRecordKindCount = 25;

struct RecordType {
  RecordKind kind;
  std::uint8_t code;
  std::string_view name;
  std::string_view description;
  bool audit_only;
};

/// All 25 entries (24 codes; OPEN and NOPEN share code 10), in kind order.
std::span<const RecordType> record_types() noexcept;
const RecordType& record_type(RecordKind kind) noexcept;
/// Code 10 resolves to NOPEN when `denied`, OPEN otherwise.
/// Throws Error{UnknownType} outside 0..23.
const RecordType& type_by_code(int code, bool denied = false);
const RecordType& type_by_name(std::string_view name);

/// Kinds that always carry a parent fid and a name.
bool is_namespace_kind(RecordKind kind) noexcept;

/// Requested access over r, w, x; rendered as e.g. `-w-`.
struct AccessMask {
  bool read = false;
  bool write = false;
  bool exec = false;

  friend bool operator==(const AccessMask&, const AccessMask&) = default;
};

std::string to_string(const AccessMask& mask);
AccessMask parse_access_mask(std::string_view text);

struct Credentials {
  std::uint32_t uid = 0;
  std::uint32_t gid = 0;

  friend bool operator==(const Credentials&, const Credentials&) = default;
};

struct ChangelogRecord {
  std::uint64_t index = 1;
  RecordKind type = RecordKind::Mark;
  std::chrono::nanoseconds time_of_day{0};
  std::chrono::year_month_day date{std::chrono::year{1970}, std::chrono::January,
                                   std::chrono::day{1}};
  std::uint64_t flags = 0;
  Fid target;
  std::optional<std::uint64_t> ext_flags;
  std::optional<Credentials> user;
  std::optional<Nid> nid;
  std::optional<AccessMask> mode_mask;
  std::optional<Fid> parent;
  std::optional<std::string> name;

  /// date + time_of_day read as UTC.
  Timestamp timestamp() const;
  void set_timestamp(Timestamp ts);

  friend bool operator==(const ChangelogRecord&, const ChangelogRecord&) = default;
};

/// Earliest and latest calendar years a record may carry. Both bound the
/// nanosecond timestamp range of a signed 64-bit count.
inline constexpr int kMinRecordYear = 1678;
inline constexpr int kMaxRecordYear = 2261;

/// Throws Error{MalformedRecord} (with byte position) or Error{UnknownType}.
ChangelogRecord parse_record(std::string_view line);
/// Canonical line: lowercase hex, nine fractional digits, fixed field order.
std::string render_record(const ChangelogRecord& record);
/// Checks the per-type field invariants; throws Error{MalformedRecord}.
void validate_record(const ChangelogRecord& record);

/// UTF-8, 1..255 bytes, no `/` and no NUL (nor CR/LF, which would break
/// line framing).
bool is_valid_filename(std::string_view name) noexcept;

/// The stored, normalized form of a changelog record.
struct AuditEvent {
  std::string device;
  ChangelogRecord record;
  Timestamp ingested_at{};
  Digest chain_digest{};

  Timestamp ts_utc() const { return record.timestamp(); }

  friend bool operator==(const AuditEvent&, const AuditEvent&) = default;
};

std::string to_hex(std::span<const std::uint8_t> bytes);
std::optional<Digest> digest_from_hex(std::string_view hex);

/// `YYYY-MM-DDThh:mm:ss.fffffffffZ`.
std::string format_rfc3339(Timestamp ts);
/// Accepts 0..9 fractional digits and a `Z` or `+00:00` suffix.
/// Throws Error{BadSpec}.
Timestamp parse_rfc3339(std::string_view text);

}  // namespace chaudit
