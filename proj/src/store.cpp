// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "chaudit/store.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <sstream>

#include "chaudit/error.hpp"
#include "chaudit/event_json.hpp"

namespace chaudit::store {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kEventsFile = "events.jsonl";
constexpr std::string_view kHeadFile = "chain.head";
constexpr std::string_view kDigestKey = R"(,"chain_digest":")";
// `,"chain_digest":"` + 64 hex digits + `"}`
constexpr std::size_t kDigestSuffixSize = kDigestKey.size() + 64 + 2;

[[noreturn]] void io_error(const std::string& what) {
  throw Error(Errc::Io, fmt::format("{}: {}", what, std::strerror(errno)));
}

// Splits a persisted line into (hashed payload, stored digest hex).
std::optional<std::pair<std::string, std::string_view>> split_line(std::string_view line) {
  if (line.size() < kDigestSuffixSize + 2 || line.back() != '}' ||
      line[line.size() - 2] != '"') {
    return std::nullopt;
  }
  auto suffix = line.substr(line.size() - kDigestSuffixSize);
  if (suffix.substr(0, kDigestKey.size()) != kDigestKey) return std::nullopt;
  std::string payload(line.substr(0, line.size() - kDigestSuffixSize));
  payload.push_back('}');
  return std::pair{std::move(payload), suffix.substr(kDigestKey.size(), 64)};
}

struct Head {
  Digest digest{};
  std::uint64_t index = 0;
};

std::optional<Head> read_head(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string hex;
  std::uint64_t index = 0;
  if (!(in >> hex >> index)) return std::nullopt;
  auto d = digest_from_hex(hex);
  if (!d) return std::nullopt;
  return Head{*d, index};
}

void write_head(const fs::path& dir, const Head& head, bool sync) {
  auto tmp = dir / "chain.head.tmp";
  auto text = fmt::format("{} {}\n", to_hex(head.digest), head.index);
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_error(fmt::format("open {}", tmp.string()));
  bool ok = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size());
  if (ok && sync) ok = ::fsync(fd) == 0;
  ::close(fd);
  if (!ok) io_error(fmt::format("write {}", tmp.string()));
  std::error_code ec;
  fs::rename(tmp, dir / kHeadFile, ec);
  if (ec) throw Error(Errc::Io, fmt::format("rename {}: {}", tmp.string(), ec.message()));
}

std::string read_file(const fs::path& path, std::uint64_t offset = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  in.seekg(static_cast<std::streamoff>(offset));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void add_posting(std::vector<std::size_t>& list, std::size_t pos) { list.push_back(pos); }

std::vector<std::size_t> merge_sorted(const std::vector<const std::vector<std::size_t>*>& lists) {
  std::vector<std::size_t> out;
  for (const auto* l : lists) out.insert(out.end(), l->begin(), l->end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error(Errc::Io, "SHA-256 computation failed");
  }
  return out;
}

Digest chain_link(const Digest& previous, std::string_view payload) {
  std::vector<std::uint8_t> buf(previous.begin(), previous.end());
  buf.insert(buf.end(), payload.begin(), payload.end());
  return sha256(buf);
}

bool is_valid_collection_name(std::string_view name) {
  return is_valid_filename(name) && name.front() != '.';
}

void validate(const QuerySpec& spec) {
  if (spec.from_ts && spec.to_ts && *spec.from_ts > *spec.to_ts) {
    throw Error(Errc::BadSpec, "from must not be later than to");
  }
  if (spec.limit < 1 || spec.limit > kMaxLimit) {
    throw Error(Errc::BadSpec, fmt::format("limit must be within 1..{}", kMaxLimit));
  }
}

bool matches(const QuerySpec& spec, const AuditEvent& e) {
  const auto& r = e.record;
  if (spec.device && e.device != *spec.device) return false;
  auto ts = r.timestamp();
  if (spec.from_ts && ts < *spec.from_ts) return false;
  if (spec.to_ts && ts > *spec.to_ts) return false;
  if (spec.types && std::find(spec.types->begin(), spec.types->end(), r.type) == spec.types->end()) {
    return false;
  }
  if (spec.uid && (!r.user || r.user->uid != *spec.uid)) return false;
  if (spec.gid && (!r.user || r.user->gid != *spec.gid)) return false;
  if (spec.fid && r.target != *spec.fid) return false;
  if (spec.nid && (!r.nid || *r.nid != *spec.nid)) return false;
  if (spec.name_contains && (!r.name || r.name->find(*spec.name_contains) == std::string::npos)) {
    return false;
  }
  return true;
}

std::string encode_cursor(const std::string& device, std::uint64_t index) {
  return fmt::format("c{}.{}", to_hex(std::span(reinterpret_cast<const std::uint8_t*>(device.data()),
                                                 device.size())),
                     index);
}

std::pair<std::string, std::uint64_t> decode_cursor(std::string_view cursor) {
  auto bad = [&]() -> std::pair<std::string, std::uint64_t> {
    throw Error(Errc::BadCursor, fmt::format("invalid cursor '{}'", cursor));
  };
  if (cursor.size() < 4 || cursor[0] != 'c') return bad();
  auto dot = cursor.find('.');
  if (dot == std::string_view::npos) return bad();
  auto hex = cursor.substr(1, dot - 1);
  auto num = cursor.substr(dot + 1);
  if (hex.empty() || hex.size() % 2 != 0 || num.empty() || num.size() > 20) return bad();
  std::string device;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int v = 0;
    for (char c : hex.substr(i, 2)) {
      v <<= 4;
      if (c >= '0' && c <= '9') {
        v |= c - '0';
      } else if (c >= 'a' && c <= 'f') {
        v |= c - 'a' + 10;
      } else {
        return bad();
      }
    }
    device.push_back(static_cast<char>(v));
  }
  std::uint64_t index = 0;
  for (char c : num) {
    if (c < '0' || c > '9') return bad();
    if (index > (UINT64_MAX - static_cast<std::uint64_t>(c - '0')) / 10) return bad();
    index = index * 10 + static_cast<std::uint64_t>(c - '0');
  }
  if (!is_valid_collection_name(device)) return bad();
  return {device, index};
}

Dimension parse_dimension(std::string_view text) {
  if (text == "type") return Dimension::Type;
  if (text == "uid") return Dimension::Uid;
  if (text == "nid") return Dimension::Nid;
  throw Error(Errc::BadSpec, fmt::format("unknown dimension '{}' (type, uid or nid)", text));
}

std::string_view to_string(Dimension dimension) {
  switch (dimension) {
    case Dimension::Type: return "type";
    case Dimension::Uid: return "uid";
    case Dimension::Nid: return "nid";
  }
  return "type";
}

struct AuditStore::Collection {
  std::string name;
  fs::path dir;
  std::vector<AuditEvent> events;
  Digest head{};
  std::uint64_t file_offset = 0;

  std::array<std::vector<std::size_t>, kRecordKindCount> by_type;
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> by_uid;
  std::map<Fid, std::vector<std::size_t>> by_fid;
  std::map<Fid, std::vector<std::size_t>> by_parent;
  std::map<std::string, std::vector<std::size_t>> by_nid;
  std::vector<std::pair<Timestamp, std::size_t>> by_ts;

  std::uint64_t last_index() const { return events.empty() ? 0 : events.back().record.index; }

  const AuditEvent* find(std::uint64_t index) const {
    auto it = std::lower_bound(events.begin(), events.end(), index,
                               [](const AuditEvent& e, std::uint64_t v) {
                                 return e.record.index < v;
                               });
    if (it == events.end() || it->record.index != index) return nullptr;
    return &*it;
  }

  void push(AuditEvent e) {
    std::size_t pos = events.size();
    const auto& r = e.record;
    add_posting(by_type[static_cast<std::size_t>(r.type)], pos);
    if (r.user) add_posting(by_uid[r.user->uid], pos);
    add_posting(by_fid[r.target], pos);
    if (r.parent) add_posting(by_parent[*r.parent], pos);
    if (r.nid) add_posting(by_nid[to_string(*r.nid)], pos);
    std::pair<Timestamp, std::size_t> key{r.timestamp(), pos};
    by_ts.insert(std::upper_bound(by_ts.begin(), by_ts.end(), key), key);
    head = e.chain_digest;
    events.push_back(std::move(e));
  }

  // Positions worth testing against `spec`, ascending. Picks the narrowest
  // available index; the caller still applies the full predicate.
  std::vector<std::size_t> candidates(const QuerySpec& spec) const {
    static const std::vector<std::size_t> kEmpty;
    std::vector<const std::vector<std::size_t>*> best;
    std::size_t best_size = events.size();
    bool have = false;
    auto consider = [&](std::vector<const std::vector<std::size_t>*> lists) {
      std::size_t n = 0;
      for (const auto* l : lists) n += l->size();
      if (!have || n < best_size) {
        best = std::move(lists);
        best_size = n;
        have = true;
      }
    };
    if (spec.fid) {
      auto it = by_fid.find(*spec.fid);
      consider({it == by_fid.end() ? &kEmpty : &it->second});
    }
    if (spec.uid) {
      auto it = by_uid.find(*spec.uid);
      consider({it == by_uid.end() ? &kEmpty : &it->second});
    }
    if (spec.nid) {
      auto it = by_nid.find(to_string(*spec.nid));
      consider({it == by_nid.end() ? &kEmpty : &it->second});
    }
    if (spec.types) {
      // A repeated kind must not merge its list twice.
      auto kinds = *spec.types;
      std::sort(kinds.begin(), kinds.end());
      kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
      std::vector<const std::vector<std::size_t>*> lists;
      for (auto k : kinds) lists.push_back(&by_type[static_cast<std::size_t>(k)]);
      consider(std::move(lists));
    }
    if (spec.from_ts || spec.to_ts) {
      auto lo = by_ts.begin();
      auto hi = by_ts.end();
      if (spec.from_ts) {
        lo = std::lower_bound(by_ts.begin(), by_ts.end(), *spec.from_ts,
                              [](const auto& p, Timestamp t) { return p.first < t; });
      }
      if (spec.to_ts) {
        hi = std::upper_bound(lo, by_ts.end(), *spec.to_ts,
                              [](Timestamp t, const auto& p) { return t < p.first; });
      }
      auto n = static_cast<std::size_t>(hi - lo);
      if (!have || n < best_size) {
        std::vector<std::size_t> out;
        out.reserve(n);
        for (auto it = lo; it != hi; ++it) out.push_back(it->second);
        std::sort(out.begin(), out.end());
        return out;
      }
    }
    if (!have) {
      std::vector<std::size_t> all(events.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      return all;
    }
    if (best.size() == 1) return *best.front();
    return merge_sorted(best);
  }
};

AuditStore::AuditStore(fs::path dir, StoreOptions options)
    : dir_(std::move(dir)), options_(options) {
  std::error_code ec;
  if (!options_.read_only) {
    fs::create_directories(dir_, ec);
    if (ec) throw Error(Errc::Io, fmt::format("create {}: {}", dir_.string(), ec.message()));
  }
  std::unique_lock lock(mutex_);
  if (fs::is_directory(dir_)) {
    for (const auto& entry : fs::directory_iterator(dir_)) {
      auto name = entry.path().filename().string();
      if (entry.is_directory() && is_valid_collection_name(name) &&
          fs::exists(entry.path() / kEventsFile)) {
        open_collection(name, false);
      }
    }
  }
}

AuditStore::~AuditStore() = default;

AuditStore::Collection& AuditStore::open_collection(const std::string& name, bool create) {
  if (auto it = collections_.find(name); it != collections_.end()) return *it->second;
  if (!is_valid_collection_name(name)) {
    throw Error(Errc::BadSpec, fmt::format("invalid collection name '{}'", name));
  }
  auto c = std::make_unique<Collection>();
  c->name = name;
  c->dir = dir_ / name;
  if (create) {
    std::error_code ec;
    fs::create_directories(c->dir, ec);
    if (ec) throw Error(Errc::Io, fmt::format("create {}: {}", c->dir.string(), ec.message()));
  }
  load_new_lines(*c);
  if (!options_.read_only) {
    // Drop an unacknowledged torn tail left by a crash mid-append.
    auto path = c->dir / kEventsFile;
    std::error_code ec;
    auto size = fs::exists(path) ? fs::file_size(path, ec) : 0;
    if (!ec && size > c->file_offset) fs::resize_file(path, c->file_offset, ec);
    auto head = read_head(c->dir / kHeadFile);
    if (!c->events.empty() && (!head || head->index < c->last_index())) {
      write_head(c->dir, Head{c->head, c->last_index()}, options_.sync);
    }
  }
  auto& ref = *c;
  collections_.emplace(name, std::move(c));
  return ref;
}

void AuditStore::load_new_lines(Collection& c) {
  auto data = read_file(c.dir / kEventsFile, c.file_offset);
  std::size_t pos = 0;
  while (true) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;
    std::string_view line(data.data() + pos, nl - pos);
    c.file_offset += nl - pos + 1;
    pos = nl + 1;
    try {
      auto e = event_from_json(nlohmann::json::parse(line));
      if (e.device == c.name && e.record.index > c.last_index()) {
        c.push(std::move(e));
        continue;
      }
    } catch (const std::exception&) {
    }
    // Unreadable or out-of-place line: not queryable, but the chain still
    // passes through it. verify_chain reports it.
    if (auto parts = split_line(line)) {
      if (auto d = digest_from_hex(parts->second)) c.head = *d;
    }
  }
}

const AuditStore::Collection* AuditStore::find(const std::string& name) const {
  auto it = collections_.find(name);
  return it == collections_.end() ? nullptr : it->second.get();
}

AppendResult AuditStore::append(const std::string& device, AuditEvent event) {
  event.device = device;
  return append_batch(std::span<const AuditEvent>(&event, 1)).front();
}

std::vector<AppendResult> AuditStore::append_batch(std::span<const AuditEvent> events) {
  if (options_.read_only) throw Error(Errc::Io, "store is open read-only");
  std::vector<AppendResult> results(events.size());
  if (events.empty()) return results;

  std::unique_lock lock(mutex_);
  struct Pending {
    Collection* collection;
    std::string text;
    std::vector<AuditEvent> events;
    Digest head;
    std::uint64_t last;
  };
  std::map<std::string, Pending> pending;

  for (std::size_t i = 0; i < events.size(); ++i) {
    AuditEvent e = events[i];
    validate_record(e.record);
    auto& c = open_collection(e.device, true);
    auto [it, inserted] = pending.try_emplace(e.device, Pending{&c, {}, {}, c.head, c.last_index()});
    auto& p = it->second;

    const AuditEvent* existing = c.find(e.record.index);
    if (!existing) {
      for (const auto& q : p.events) {
        if (q.record.index == e.record.index) existing = &q;
      }
    }
    if (existing) {
      if (content_bytes(*existing) != content_bytes(e)) {
        throw Error(Errc::Conflict,
                    fmt::format("{} index {} already stored with different content", e.device,
                                e.record.index));
      }
      results[i] = AppendResult{false, existing->chain_digest};
      continue;
    }
    if (e.record.index < p.last) {
      throw Error(Errc::Conflict, fmt::format("{} index {} is below last stored index {}",
                                              e.device, e.record.index, p.last));
    }
    e.chain_digest = chain_link(p.head, chain_payload(e));
    p.head = e.chain_digest;
    p.last = e.record.index;
    p.text += event_line(e);
    p.text.push_back('\n');
    results[i] = AppendResult{true, e.chain_digest};
    p.events.push_back(std::move(e));
  }

  for (auto& [name, p] : pending) {
    if (p.events.empty()) continue;
    auto path = p.collection->dir / kEventsFile;
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) io_error(fmt::format("open {}", path.string()));
    const char* data = p.text.data();
    std::size_t left = p.text.size();
    bool ok = true;
    while (left > 0) {
      auto n = ::write(fd, data, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        ok = false;
        break;
      }
      data += n;
      left -= static_cast<std::size_t>(n);
    }
    if (ok && options_.sync) ok = ::fsync(fd) == 0;
    if (!ok) {
      int saved = errno;
      // Roll the file back to the last committed line.
      [[maybe_unused]] int rc = ::ftruncate(fd, static_cast<off_t>(p.collection->file_offset));
      ::close(fd);
      errno = saved;
      io_error(fmt::format("append {}", path.string()));
    }
    ::close(fd);
    write_head(p.collection->dir, Head{p.head, p.last}, options_.sync);
    p.collection->file_offset += p.text.size();
    for (auto& e : p.events) p.collection->push(std::move(e));
  }

  {
    std::lock_guard cl(commit_mutex_);
    ++commit_seq_;
  }
  commit_cv_.notify_all();
  return results;
}

VerifyResult AuditStore::verify_chain(const std::string& device) const {
  std::shared_lock lock(mutex_);
  auto collection_dir = dir_ / device;
  if (!find(device) && !(is_valid_collection_name(device) &&
                         fs::exists(collection_dir / kEventsFile))) {
    throw Error(Errc::UnknownCollection, fmt::format("no collection '{}'", device));
  }
  // Head first: the data file always holds at least the lines it covers.
  auto head = read_head(collection_dir / kHeadFile);
  auto data = read_file(collection_dir / kEventsFile);

  struct LineInfo {
    std::string_view text;
    std::optional<std::uint64_t> parsed_index;
  };
  std::vector<LineInfo> lines;
  std::size_t pos = 0;
  while (true) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;
    LineInfo info{std::string_view(data).substr(pos, nl - pos), std::nullopt};
    try {
      auto j = nlohmann::json::parse(info.text);
      if (j.is_object() && j.contains("index") && j["index"].is_number_unsigned()) {
        info.parsed_index = j["index"].get<std::uint64_t>();
      }
    } catch (const std::exception&) {
    }
    lines.push_back(info);
    pos = nl + 1;
  }

  VerifyResult result;
  Digest prev{};
  std::uint64_t prev_index = 0;
  // Index to report for line k: its own parsed index when that is consistent
  // with its neighbours, otherwise the successor of the last good index.
  auto index_of = [&](std::size_t k) -> std::uint64_t {
    auto own = lines[k].parsed_index;
    std::optional<std::uint64_t> upper;
    if (k + 1 < lines.size()) {
      upper = lines[k + 1].parsed_index;
    } else if (head) {
      upper = head->index + 1;
    }
    if (own && *own > prev_index && (!upper || *own < *upper)) return *own;
    return prev_index + 1;
  };
  auto fail_at = [&](std::uint64_t index) {
    result.ok = false;
    result.first_bad_index = index;
    result.head = prev;
    return result;
  };

  bool head_seen = false;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    auto parts = split_line(lines[k].text);
    if (!parts) return fail_at(index_of(k));
    auto computed = chain_link(prev, parts->first);
    if (to_hex(computed) != parts->second) return fail_at(index_of(k));
    AuditEvent e;
    try {
      e = event_from_json(nlohmann::json::parse(lines[k].text));
    } catch (const std::exception&) {
      return fail_at(index_of(k));
    }
    if (e.device != device || e.record.index <= prev_index || event_line(e) != lines[k].text) {
      return fail_at(index_of(k));
    }
    prev = computed;
    prev_index = e.record.index;
    ++result.checked;
    if (head && prev_index == head->index) {
      if (head->digest != computed) return fail_at(prev_index);
      head_seen = true;
    }
  }
  if (head && head->index > 0 && !head_seen) {
    // Lines the head vouches for are missing.
    return fail_at(prev_index + 1);
  }
  if (!head && !lines.empty()) return fail_at(prev_index);
  result.head = prev;
  return result;
}

template <typename Fn>
void AuditStore::scan(const QuerySpec& spec, Fn&& fn) const {
  for (const auto& [name, c] : collections_) {
    if (spec.device && name != *spec.device) continue;
    for (auto pos : c->candidates(spec)) {
      const auto& e = c->events[pos];
      if (matches(spec, e)) fn(e);
    }
  }
}

Page AuditStore::query(const QuerySpec& spec) const {
  validate(spec);
  std::optional<std::pair<std::string, std::uint64_t>> after;
  if (spec.cursor) after = decode_cursor(*spec.cursor);
  std::shared_lock lock(mutex_);
  Page page;
  bool more = false;
  scan(spec, [&](const AuditEvent& e) {
    ++page.total;
    if (after && std::pair<const std::string&, std::uint64_t>(e.device, e.record.index) <=
                     std::pair<const std::string&, std::uint64_t>(after->first, after->second)) {
      return;
    }
    if (page.events.size() < spec.limit) {
      page.events.push_back(e);
    } else {
      more = true;
    }
  });
  if (more) {
    const auto& last = page.events.back();
    page.next_cursor = encode_cursor(last.device, last.record.index);
  }
  return page;
}

std::vector<AuditEvent> AuditStore::trail(const Fid& fid) const {
  std::shared_lock lock(mutex_);
  std::vector<AuditEvent> out;
  for (const auto& [name, c] : collections_) {
    std::vector<const std::vector<std::size_t>*> lists;
    if (auto it = c->by_fid.find(fid); it != c->by_fid.end()) lists.push_back(&it->second);
    if (auto it = c->by_parent.find(fid); it != c->by_parent.end()) lists.push_back(&it->second);
    auto positions = merge_sorted(lists);
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
    for (auto pos : positions) out.push_back(c->events[pos]);
  }
  return out;
}

std::map<std::string, std::size_t> AuditStore::counts_by(Dimension dimension,
                                                         const QuerySpec& spec) const {
  validate(spec);
  std::shared_lock lock(mutex_);
  std::map<std::string, std::size_t> out;
  scan(spec, [&](const AuditEvent& e) {
    const auto& r = e.record;
    switch (dimension) {
      case Dimension::Type:
        ++out[std::string(record_type(r.type).name)];
        break;
      case Dimension::Uid:
        ++out[r.user ? std::to_string(r.user->uid) : "-"];
        break;
      case Dimension::Nid:
        ++out[r.nid ? to_string(*r.nid) : "-"];
        break;
    }
  });
  return out;
}

std::vector<std::pair<Timestamp, std::size_t>> AuditStore::timeline(
    const QuerySpec& spec, std::int64_t bucket_seconds) const {
  validate(spec);
  if (bucket_seconds < 1) throw Error(Errc::BadSpec, "bucket must be at least 1 second");
  auto width = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::seconds{bucket_seconds});
  std::shared_lock lock(mutex_);
  std::map<Timestamp, std::size_t> buckets;
  scan(spec, [&](const AuditEvent& e) {
    auto since_epoch = e.ts_utc().time_since_epoch();
    auto q = since_epoch / width;
    if (since_epoch % width < std::chrono::nanoseconds{0}) --q;
    ++buckets[Timestamp{q * width}];
  });
  return {buckets.begin(), buckets.end()};
}

std::vector<DeniedOpenRow> AuditStore::denied_open_report(const QuerySpec& spec) const {
  QuerySpec narrowed = spec;
  if (spec.types && std::find(spec.types->begin(), spec.types->end(), RecordKind::Nopen) ==
                        spec.types->end()) {
    narrowed.types = std::vector<RecordKind>{};
  } else {
    narrowed.types = std::vector<RecordKind>{RecordKind::Nopen};
  }
  validate(narrowed);
  std::shared_lock lock(mutex_);
  std::map<std::pair<std::uint32_t, std::string>, DeniedOpenRow> groups;
  scan(narrowed, [&](const AuditEvent& e) {
    const auto& r = e.record;
    std::uint32_t uid = r.user ? r.user->uid : 0;
    std::string nid = r.nid ? to_string(*r.nid) : "-";
    auto [it, inserted] = groups.try_emplace({uid, nid});
    auto& row = it->second;
    auto ts = e.ts_utc();
    if (inserted) {
      row.uid = uid;
      row.nid = nid;
      row.first_ts = row.last_ts = ts;
    }
    ++row.count;
    row.first_ts = std::min(row.first_ts, ts);
    row.last_ts = std::max(row.last_ts, ts);
  });
  std::vector<DeniedOpenRow> out;
  for (auto& [key, row] : groups) out.push_back(std::move(row));
  std::stable_sort(out.begin(), out.end(),
                   [](const DeniedOpenRow& a, const DeniedOpenRow& b) { return a.count > b.count; });
  return out;
}

std::optional<AuditEvent> AuditStore::get(const std::string& device, std::uint64_t index) const {
  std::shared_lock lock(mutex_);
  const auto* c = find(device);
  if (!c) return std::nullopt;
  const auto* e = c->find(index);
  if (!e) return std::nullopt;
  return *e;
}

std::vector<CollectionInfo> AuditStore::collections() const {
  std::shared_lock lock(mutex_);
  std::vector<CollectionInfo> out;
  for (const auto& [name, c] : collections_) {
    out.push_back(CollectionInfo{name, c->events.size(), c->last_index(), c->head});
  }
  return out;
}

bool AuditStore::has_collection(const std::string& device) const {
  std::shared_lock lock(mutex_);
  return find(device) != nullptr;
}

std::vector<AuditEvent> AuditStore::events_after(const std::string& device, std::uint64_t after,
                                                 std::size_t max) const {
  std::shared_lock lock(mutex_);
  std::vector<AuditEvent> out;
  const auto* c = find(device);
  if (!c) return out;
  auto it = std::upper_bound(c->events.begin(), c->events.end(), after,
                             [](std::uint64_t v, const AuditEvent& e) { return v < e.record.index; });
  for (; it != c->events.end() && out.size() < max; ++it) out.push_back(*it);
  return out;
}

void AuditStore::refresh() {
  bool changed = false;
  {
    std::unique_lock lock(mutex_);
    if (fs::is_directory(dir_)) {
      for (const auto& entry : fs::directory_iterator(dir_)) {
        auto name = entry.path().filename().string();
        if (!entry.is_directory() || !is_valid_collection_name(name)) continue;
        if (!fs::exists(entry.path() / kEventsFile)) continue;
        auto it = collections_.find(name);
        if (it == collections_.end()) {
          auto& c = open_collection(name, false);
          changed = changed || !c.events.empty();
          continue;
        }
        auto& c = *it->second;
        std::error_code ec;
        auto size = fs::file_size(entry.path() / kEventsFile, ec);
        if (ec || size <= c.file_offset) continue;
        auto before = c.events.size();
        load_new_lines(c);
        changed = changed || c.events.size() != before;
      }
    }
  }
  if (changed) {
    {
      std::lock_guard cl(commit_mutex_);
      ++commit_seq_;
    }
    commit_cv_.notify_all();
  }
}

std::uint64_t AuditStore::commit_sequence() const {
  std::lock_guard cl(commit_mutex_);
  return commit_seq_;
}

std::uint64_t AuditStore::wait_for_commit(std::uint64_t seen,
                                          std::chrono::milliseconds timeout) const {
  std::unique_lock cl(commit_mutex_);
  commit_cv_.wait_for(cl, timeout, [&] { return commit_seq_ != seen; });
  return commit_seq_;
}

}  // namespace chaudit::store
