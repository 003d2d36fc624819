// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "chaudit/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <limits>

#include "chaudit/error.hpp"

namespace chaudit {

namespace {

using namespace std::chrono;

constexpr std::array<RecordType, kRecordKindCount> kTypes{{
    {RecordKind::Mark, 0, "MARK", "Internal recordkeeping", false},
    {RecordKind::Creat, 1, "CREAT", "Regular file creation", false},
    {RecordKind::Mkdir, 2, "MKDIR", "Directory creation", false},
    {RecordKind::Hlink, 3, "HLINK", "Hard link", false},
    {RecordKind::Slink, 4, "SLINK", "Soft link", false},
    {RecordKind::Mknod, 5, "MKNOD", "Other file creation", false},
    {RecordKind::Unlnk, 6, "UNLNK", "Regular file removal", false},
    {RecordKind::Rmdir, 7, "RMDIR", "Directory removal", false},
    {RecordKind::Renme, 8, "RENME", "Rename, original", false},
    {RecordKind::Rnmto, 9, "RNMTO", "Rename, final", false},
    {RecordKind::Open, 10, "OPEN", "Granted open", true},
    {RecordKind::Nopen, 10, "NOPEN", "Denied open", true},
    {RecordKind::Close, 11, "CLOSE", "Close", false},
    {RecordKind::Lyout, 12, "LYOUT", "Layout change", false},
    {RecordKind::Trunc, 13, "TRUNC", "Regular file truncated", false},
    {RecordKind::Sattr, 14, "SATTR", "Attribute change", false},
    {RecordKind::Xattr, 15, "XATTR", "Extended attribute change (setxattr)", false},
    {RecordKind::Hsm, 16, "HSM", "HSM specific event", false},
    {RecordKind::Mtime, 17, "MTIME", "MTIME change", false},
    {RecordKind::Ctime, 18, "CTIME", "CTIME change", false},
    {RecordKind::Atime, 19, "ATIME", "ATIME change", true},
    {RecordKind::Migrt, 20, "MIGRT", "Migration event", false},
    {RecordKind::Flrw, 21, "FLRW", "File Level Replication: file initially written", false},
    {RecordKind::Resync, 22, "RESYNC", "File Level Replication: file re-synced", false},
    {RecordKind::Gxatr, 23, "GXATR", "Extended attribute access (getxattr)", true},
}};

bool is_hex(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

unsigned hex_value(char c) {
  if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
  if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
  return static_cast<unsigned>(c - 'A' + 10);
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Cursor over one input line. Every failure reports the byte offset it
// stopped at.
class Scanner {
 public:
  explicit Scanner(std::string_view text, std::size_t base = 0)
      : text_(text), base_(base) {}

  [[noreturn]] void fail(const std::string& reason) const {
    throw Error(Errc::MalformedRecord,
                fmt::format("malformed record at byte {}: {}", base_ + pos_, reason),
                base_ + pos_);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  std::size_t pos() const { return pos_; }
  std::string_view rest() const { return text_.substr(pos_); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  void advance() { ++pos_; }
  bool starts_with(std::string_view prefix) const {
    return rest().substr(0, prefix.size()) == prefix;
  }

  void expect(char c, const char* what) {
    if (peek() != c || at_end()) fail(fmt::format("expected {}", what));
    ++pos_;
  }

  void expect(std::string_view literal) {
    if (!starts_with(literal)) fail(fmt::format("expected '{}'", literal));
    pos_ += literal.size();
  }

  std::uint64_t decimal(const char* what, std::uint64_t max) {
    std::size_t start = pos_;
    std::uint64_t value = 0;
    while (!at_end() && is_digit(peek())) {
      auto digit = static_cast<std::uint64_t>(peek() - '0');
      if (value > (max - digit) / 10) fail(fmt::format("{} out of range", what));
      value = value * 10 + digit;
      ++pos_;
    }
    if (pos_ == start) fail(fmt::format("expected {}", what));
    return value;
  }

  // Exactly `width` decimal digits.
  unsigned fixed_digits(std::size_t width, const char* what) {
    unsigned value = 0;
    for (std::size_t i = 0; i < width; ++i) {
      if (!is_digit(peek()) || at_end()) fail(fmt::format("expected {}", what));
      value = value * 10 + static_cast<unsigned>(peek() - '0');
      ++pos_;
    }
    return value;
  }

  // `0x` (either case) followed by hex digits.
  std::uint64_t hex(const char* what, std::uint64_t max) {
    if (!(peek() == '0' && pos_ + 1 < text_.size() &&
          (text_[pos_ + 1] == 'x' || text_[pos_ + 1] == 'X'))) {
      fail(fmt::format("expected 0x-prefixed {}", what));
    }
    pos_ += 2;
    std::size_t start = pos_;
    std::uint64_t value = 0;
    while (!at_end() && is_hex(peek())) {
      if (value > (max >> 4)) fail(fmt::format("{} out of range", what));
      value = (value << 4) | hex_value(peek());
      ++pos_;
    }
    if (pos_ == start) fail(fmt::format("expected hex digits in {}", what));
    return value;
  }

  Fid fid() {
    expect('[', "'[' opening fid");
    Fid f;
    f.sequence = hex("fid sequence", std::numeric_limits<std::uint64_t>::max());
    expect(':', "':' in fid");
    f.oid = static_cast<std::uint32_t>(hex("fid oid", std::numeric_limits<std::uint32_t>::max()));
    expect(':', "':' in fid");
    f.version =
        static_cast<std::uint32_t>(hex("fid version", std::numeric_limits<std::uint32_t>::max()));
    expect(']', "']' closing fid");
    return f;
  }

  Nid nid() {
    Nid n;
    for (std::size_t i = 0; i < 4; ++i) {
      if (i > 0) expect('.', "'.' in nid address");
      std::size_t start = pos_;
      auto octet = decimal("nid octet", 255);
      if (pos_ - start > 3) fail("nid octet too long");
      n.address[i] = static_cast<std::uint8_t>(octet);
    }
    expect('@', "'@' in nid");
    if (starts_with("tcp")) {
      n.network = "tcp";
      pos_ += 3;
    } else if (starts_with("o2ib")) {
      n.network = "o2ib";
      pos_ += 4;
    } else {
      fail("nid network must be tcp or o2ib");
    }
    if (!at_end() && is_digit(peek())) {
      n.network_number =
          static_cast<std::uint32_t>(decimal("nid network number",
                                             std::numeric_limits<std::uint32_t>::max()));
    }
    return n;
  }

  AccessMask access_mask() {
    if (rest().size() < 3) fail("access mask needs three characters");
    auto m = rest().substr(0, 3);
    auto bit = [&](std::size_t i, char letter) {
      if (m[i] == letter) return true;
      if (m[i] == '-') return false;
      pos_ += i;
      fail(fmt::format("access mask position {} must be '{}' or '-'", i + 1, letter));
    };
    AccessMask mask{bit(0, 'r'), bit(1, 'w'), bit(2, 'x')};
    pos_ += 3;
    return mask;
  }

 private:
  std::string_view text_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += len;
  }
  return true;
}

[[noreturn]] void invalid(const std::string& reason) {
  throw Error(Errc::MalformedRecord, "invalid record: " + reason);
}

}  // namespace

std::string to_string(const Fid& fid) {
  return fmt::format("[0x{:x}:0x{:x}:0x{:x}]", fid.sequence, fid.oid, fid.version);
}

Fid parse_fid(std::string_view text) {
  Scanner s(text);
  Fid f = s.fid();
  if (!s.at_end()) s.fail("trailing characters after fid");
  return f;
}

std::string to_string(const Nid& nid) {
  std::string out = fmt::format("{}.{}.{}.{}@{}", nid.address[0], nid.address[1],
                                nid.address[2], nid.address[3], nid.network);
  if (nid.network_number) out += std::to_string(*nid.network_number);
  return out;
}

Nid parse_nid(std::string_view text) {
  Scanner s(text);
  Nid n = s.nid();
  if (!s.at_end()) s.fail("trailing characters after nid");
  return n;
}

std::span<const RecordType> record_types() noexcept { return kTypes; }

const RecordType& record_type(RecordKind kind) noexcept {
  return kTypes[static_cast<std::size_t>(kind)];
}

const RecordType& type_by_code(int code, bool denied) {
  if (code < 0 || code > 23) {
    throw Error(Errc::UnknownType, fmt::format("unknown record type code {}", code));
  }
  if (code == 10) return record_type(denied ? RecordKind::Nopen : RecordKind::Open);
  // Codes above 10 sit one slot later in the table because of the shared code.
  return kTypes[static_cast<std::size_t>(code < 10 ? code : code + 1)];
}

const RecordType& type_by_name(std::string_view name) {
  for (const auto& t : kTypes) {
    if (t.name == name) return t;
  }
  throw Error(Errc::UnknownType, fmt::format("unknown record type '{}'", name));
}

bool is_namespace_kind(RecordKind kind) noexcept {
  switch (kind) {
    case RecordKind::Creat:
    case RecordKind::Mkdir:
    case RecordKind::Hlink:
    case RecordKind::Slink:
    case RecordKind::Mknod:
    case RecordKind::Unlnk:
    case RecordKind::Rmdir:
    case RecordKind::Renme:
    case RecordKind::Rnmto:
      return true;
    default:
      return false;
  }
}

std::string to_string(const AccessMask& mask) {
  std::string out = "---";
  if (mask.read) out[0] = 'r';
  if (mask.write) out[1] = 'w';
  if (mask.exec) out[2] = 'x';
  return out;
}

AccessMask parse_access_mask(std::string_view text) {
  Scanner s(text);
  auto m = s.access_mask();
  if (!s.at_end()) s.fail("trailing characters after access mask");
  return m;
}

bool is_valid_filename(std::string_view name) noexcept {
  if (name.empty() || name.size() > 255) return false;
  if (name.find_first_of(std::string_view("/\0\n\r", 4)) != std::string_view::npos) return false;
  return valid_utf8(name);
}

Timestamp ChangelogRecord::timestamp() const {
  return Timestamp{sys_days{date}.time_since_epoch()} + time_of_day;
}

void ChangelogRecord::set_timestamp(Timestamp ts) {
  auto day = floor<days>(ts);
  date = year_month_day{day};
  time_of_day = ts - day;
}

void validate_record(const ChangelogRecord& r) {
  if (r.index < 1) invalid("index must be at least 1");
  if (!r.date.ok() || static_cast<int>(r.date.year()) < kMinRecordYear ||
      static_cast<int>(r.date.year()) > kMaxRecordYear) {
    invalid("date out of range");
  }
  if (r.time_of_day < nanoseconds{0} || r.time_of_day >= days{1}) {
    invalid("time of day out of range");
  }
  if (r.parent.has_value() != r.name.has_value()) invalid("parent and name go together");
  if (r.name && !is_valid_filename(*r.name)) invalid("bad filename");
  const auto& t = record_type(r.type);
  if (is_namespace_kind(r.type) && !r.parent) {
    invalid(fmt::format("{} requires parent and name", t.name));
  }
  if ((r.type == RecordKind::Open || r.type == RecordKind::Nopen) &&
      (!r.mode_mask || !r.user || !r.nid)) {
    invalid(fmt::format("{} requires u=, nid= and m=", t.name));
  }
}

ChangelogRecord parse_record(std::string_view line) {
  Scanner s(line);
  if (line.empty()) s.fail("empty line");

  ChangelogRecord r;
  r.index = s.decimal("record index", std::numeric_limits<std::uint64_t>::max());
  if (r.index == 0) s.fail("record index must be at least 1");
  s.expect(' ', "space after index");

  auto type_start = s.pos();
  int code = static_cast<int>(s.fixed_digits(2, "two-digit type code"));
  std::size_t name_len = 0;
  while (name_len < s.rest().size() && s.rest()[name_len] >= 'A' && s.rest()[name_len] <= 'Z') {
    ++name_len;
  }
  if (name_len == 0) s.fail("expected record type name");
  auto type_name = s.rest().substr(0, name_len);
  const RecordType* type = nullptr;
  for (const auto& t : kTypes) {
    if (t.name == type_name) type = &t;
  }
  if (type == nullptr) {
    throw Error(Errc::UnknownType,
                fmt::format("unknown record type '{}' at byte {}", type_name, type_start),
                type_start);
  }
  if (type->code != code) s.fail(fmt::format("type code {:02} does not match {}", code, type_name));
  r.type = type->kind;
  s.expect(type_name);
  s.expect(' ', "space after type");

  auto hh = s.fixed_digits(2, "hours");
  s.expect(':', "':' in time");
  auto mm = s.fixed_digits(2, "minutes");
  s.expect(':', "':' in time");
  auto ss = s.fixed_digits(2, "seconds");
  if (hh > 23 || mm > 59 || ss > 59) s.fail("time of day out of range");
  s.expect('.', "'.' before fractional seconds");
  std::int64_t frac = 0;
  std::size_t digits = 0;
  while (!s.at_end() && is_digit(s.peek())) {
    if (digits == 9) s.fail("more than nine fractional digits");
    frac = frac * 10 + (s.peek() - '0');
    ++digits;
    s.advance();
  }
  if (digits == 0) s.fail("expected fractional seconds");
  for (; digits < 9; ++digits) frac *= 10;
  r.time_of_day = hours{hh} + minutes{mm} + seconds{ss} + nanoseconds{frac};
  s.expect(' ', "space after time");

  auto date_start = s.pos();
  auto yyyy = s.fixed_digits(4, "year");
  s.expect('.', "'.' in date");
  auto mon = s.fixed_digits(2, "month");
  s.expect('.', "'.' in date");
  auto dd = s.fixed_digits(2, "day");
  r.date = year_month_day{year{static_cast<int>(yyyy)}, month{mon}, day{dd}};
  if (!r.date.ok() || static_cast<int>(yyyy) < kMinRecordYear ||
      static_cast<int>(yyyy) > kMaxRecordYear) {
    throw Error(Errc::MalformedRecord,
                fmt::format("malformed record at byte {}: invalid date", date_start), date_start);
  }
  s.expect(' ', "space after date");

  r.flags = s.hex("flags", std::numeric_limits<std::uint64_t>::max());
  s.expect(' ', "space after flags");
  s.expect("t=");
  r.target = s.fid();

  // Optional fields must appear in this order, each at most once.
  int last_rank = 0;
  auto order = [&](int rank, const char* field) {
    if (rank <= last_rank) s.fail(fmt::format("field {} out of order or repeated", field));
    last_rank = rank;
  };
  while (!s.at_end()) {
    s.expect(' ', "space between fields");
    if (s.starts_with("ef=")) {
      order(1, "ef=");
      s.expect("ef=");
      r.ext_flags = s.hex("extended flags", std::numeric_limits<std::uint64_t>::max());
    } else if (s.starts_with("u=")) {
      order(2, "u=");
      s.expect("u=");
      Credentials c;
      c.uid = static_cast<std::uint32_t>(
          s.decimal("uid", std::numeric_limits<std::uint32_t>::max()));
      s.expect(':', "':' between uid and gid");
      c.gid = static_cast<std::uint32_t>(
          s.decimal("gid", std::numeric_limits<std::uint32_t>::max()));
      r.user = c;
    } else if (s.starts_with("nid=")) {
      order(3, "nid=");
      s.expect("nid=");
      r.nid = s.nid();
    } else if (s.starts_with("m=")) {
      order(4, "m=");
      s.expect("m=");
      r.mode_mask = s.access_mask();
    } else if (s.starts_with("p=")) {
      order(5, "p=");
      s.expect("p=");
      r.parent = s.fid();
      s.expect(' ', "space before name");
      auto name = s.rest();
      if (!is_valid_filename(name)) s.fail("invalid filename");
      r.name = std::string(name);
      break;
    } else {
      s.fail("unknown field");
    }
  }

  try {
    validate_record(r);
  } catch (const Error& e) {
    throw Error(Errc::MalformedRecord, e.what(), line.size());
  }
  return r;
}

std::string render_record(const ChangelogRecord& r) {
  auto tod = r.time_of_day;
  auto h = duration_cast<hours>(tod);
  tod -= h;
  auto m = duration_cast<minutes>(tod);
  tod -= m;
  auto sec = duration_cast<seconds>(tod);
  tod -= sec;
  const auto& t = record_type(r.type);

  std::string out = fmt::format(
      "{} {:02}{} {:02}:{:02}:{:02}.{:09} {:04}.{:02}.{:02} 0x{:x} t={}", r.index, t.code, t.name,
      h.count(), m.count(), sec.count(), tod.count(), static_cast<int>(r.date.year()),
      static_cast<unsigned>(r.date.month()), static_cast<unsigned>(r.date.day()), r.flags,
      to_string(r.target));
  if (r.ext_flags) out += fmt::format(" ef=0x{:x}", *r.ext_flags);
  if (r.user) out += fmt::format(" u={}:{}", r.user->uid, r.user->gid);
  if (r.nid) out += " nid=" + to_string(*r.nid);
  if (r.mode_mask) out += " m=" + to_string(*r.mode_mask);
  if (r.parent) out += fmt::format(" p={} {}", to_string(*r.parent), r.name.value_or(""));
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

std::optional<Digest> digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) return std::nullopt;
  Digest d{};
  for (std::size_t i = 0; i < 32; ++i) {
    char hi = hex[2 * i];
    char lo = hex[2 * i + 1];
    // Stored digests are lowercase only.
    auto ok = [](char c) { return is_digit(c) || (c >= 'a' && c <= 'f'); };
    if (!ok(hi) || !ok(lo)) return std::nullopt;
    d[i] = static_cast<std::uint8_t>((hex_value(hi) << 4) | hex_value(lo));
  }
  return d;
}

std::string format_rfc3339(Timestamp ts) {
  auto day = floor<days>(ts);
  year_month_day ymd{day};
  auto tod = ts - day;
  auto h = duration_cast<hours>(tod);
  tod -= h;
  auto m = duration_cast<minutes>(tod);
  tod -= m;
  auto sec = duration_cast<seconds>(tod);
  tod -= sec;
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:09}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     h.count(), m.count(), sec.count(), tod.count());
}

Timestamp parse_rfc3339(std::string_view text) {
  auto bad = [&]() -> Timestamp {
    throw Error(Errc::BadSpec, fmt::format("invalid RFC 3339 UTC timestamp '{}'", text));
  };
  auto num = [&](std::size_t at, std::size_t width, unsigned& out) {
    if (at + width > text.size()) return false;
    out = 0;
    for (std::size_t i = at; i < at + width; ++i) {
      if (!is_digit(text[i])) return false;
      out = out * 10 + static_cast<unsigned>(text[i] - '0');
    }
    return true;
  };
  unsigned y, mo, d, h, mi, s;
  if (!num(0, 4, y) || text.size() < 20 || text[4] != '-' || !num(5, 2, mo) || text[7] != '-' ||
      !num(8, 2, d) || (text[10] != 'T' && text[10] != 't') || !num(11, 2, h) ||
      text[13] != ':' || !num(14, 2, mi) || text[16] != ':' || !num(17, 2, s)) {
    return bad();
  }
  std::size_t pos = 19;
  std::int64_t frac = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    std::size_t digits = 0;
    while (pos < text.size() && is_digit(text[pos])) {
      if (digits == 9) return bad();
      frac = frac * 10 + (text[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return bad();
    for (; digits < 9; ++digits) frac *= 10;
  }
  auto zone = text.substr(pos);
  if (zone != "Z" && zone != "z" && zone != "+00:00") return bad();
  year_month_day ymd{year{static_cast<int>(y)}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59 || static_cast<int>(y) < kMinRecordYear ||
      static_cast<int>(y) > kMaxRecordYear) {
    return bad();
  }
  return Timestamp{sys_days{ymd}.time_since_epoch()} + hours{h} + minutes{mi} + seconds{s} +
         nanoseconds{frac};
}

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::UnknownType: return "UnknownType";
    case Errc::UnknownDevice: return "UnknownDevice";
    case Errc::UnknownUser: return "UnknownUser";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NoEnt: return "NoEnt";
    case Errc::Exists: return "Exists";
    case Errc::NotDir: return "NotDir";
    case Errc::IsDir: return "IsDir";
    case Errc::NotEmpty: return "NotEmpty";
    case Errc::PermissionDenied: return "PermissionDenied";
    case Errc::NoSpace: return "NoSpace";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ScriptParse: return "ScriptParse";
    case Errc::Conflict: return "ConflictError";
    case Errc::Io: return "IoError";
    case Errc::UnknownCollection: return "UnknownCollection";
    case Errc::BadCursor: return "BadCursor";
    case Errc::BadSpec: return "BadSpec";
    case Errc::StoreUnavailable: return "StoreUnavailable";
    case Errc::DeviceUnavailable: return "DeviceUnavailable";
    case Errc::Locked: return "Locked";
    case Errc::SimDisabled: return "SimDisabled";
    case Errc::NotFound: return "NotFound";
    case Errc::BindError: return "BindError";
  }
  return "Unknown";
}

}  // namespace chaudit
