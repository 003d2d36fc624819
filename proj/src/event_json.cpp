// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "chaudit/event_json.hpp"

#include <fmt/format.h>

#include "chaudit/error.hpp"

namespace chaudit {

namespace {

using ojson = nlohmann::ordered_json;

ojson record_fields(const AuditEvent& e) {
  const auto& r = e.record;
  const auto& t = record_type(r.type);
  ojson j;
  j["device"] = e.device;
  j["index"] = r.index;
  j["type_code"] = t.code;
  j["type_name"] = t.name;
  j["ts_utc"] = format_rfc3339(r.timestamp());
  j["flags"] = fmt::format("0x{:x}", r.flags);
  j["fid"] = to_string(r.target);
  j["ext_flags"] = r.ext_flags ? ojson(fmt::format("0x{:x}", *r.ext_flags)) : ojson(nullptr);
  j["uid"] = r.user ? ojson(r.user->uid) : ojson(nullptr);
  j["gid"] = r.user ? ojson(r.user->gid) : ojson(nullptr);
  j["nid"] = r.nid ? ojson(to_string(*r.nid)) : ojson(nullptr);
  j["mode_mask"] = r.mode_mask ? ojson(to_string(*r.mode_mask)) : ojson(nullptr);
  j["parent_fid"] = r.parent ? ojson(to_string(*r.parent)) : ojson(nullptr);
  j["name"] = r.name ? ojson(*r.name) : ojson(nullptr);
  return j;
}

[[noreturn]] void bad(const std::string& what) {
  throw Error(Errc::MalformedRecord, "invalid event object: " + what);
}

std::uint64_t parse_hex_word(const std::string& text) {
  if (text.size() < 3 || text[0] != '0' || text[1] != 'x' || text.size() > 18) {
    bad("hex word '" + text + "'");
  }
  std::uint64_t v = 0;
  for (std::size_t i = 2; i < text.size(); ++i) {
    char c = text[i];
    unsigned d;
    if (c >= '0' && c <= '9') {
      d = static_cast<unsigned>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      d = static_cast<unsigned>(c - 'a' + 10);
    } else {
      bad("hex word '" + text + "'");
    }
    v = (v << 4) | d;
  }
  return v;
}

const nlohmann::json& member(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) bad(fmt::format("missing '{}'", key));
  return *it;
}

std::string string_member(const nlohmann::json& j, const char* key) {
  const auto& v = member(j, key);
  if (!v.is_string()) bad(fmt::format("'{}' must be a string", key));
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
  const auto& v = member(j, key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) bad(fmt::format("'{}' must be a string or null", key));
  return v.get<std::string>();
}

std::optional<std::uint32_t> optional_u32(const nlohmann::json& j, const char* key) {
  const auto& v = member(j, key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xFFFFFFFFull) {
    bad(fmt::format("'{}' must be an unsigned 32-bit number", key));
  }
  return static_cast<std::uint32_t>(v.get<std::uint64_t>());
}

}  // namespace

nlohmann::ordered_json event_to_json(const AuditEvent& e) {
  auto j = record_fields(e);
  j["ingested_at"] = format_rfc3339(e.ingested_at);
  j["chain_digest"] = to_hex(e.chain_digest);
  return j;
}

AuditEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad("not an object");
  AuditEvent e;
  try {
    e.device = string_member(j, "device");
    auto& r = e.record;
    const auto& idx = member(j, "index");
    if (!idx.is_number_unsigned()) bad("'index' must be unsigned");
    r.index = idx.get<std::uint64_t>();
    const auto& type = type_by_name(string_member(j, "type_name"));
    const auto& code = member(j, "type_code");
    if (!code.is_number_unsigned() || code.get<std::uint64_t>() != type.code) {
      bad("type_code does not match type_name");
    }
    r.type = type.kind;
    r.set_timestamp(parse_rfc3339(string_member(j, "ts_utc")));
    r.flags = parse_hex_word(string_member(j, "flags"));
    r.target = parse_fid(string_member(j, "fid"));
    if (auto ef = optional_string(j, "ext_flags")) r.ext_flags = parse_hex_word(*ef);
    auto uid = optional_u32(j, "uid");
    auto gid = optional_u32(j, "gid");
    if (uid.has_value() != gid.has_value()) bad("uid and gid go together");
    if (uid) r.user = Credentials{*uid, *gid};
    if (auto nid = optional_string(j, "nid")) r.nid = parse_nid(*nid);
    if (auto m = optional_string(j, "mode_mask")) r.mode_mask = parse_access_mask(*m);
    if (auto p = optional_string(j, "parent_fid")) r.parent = parse_fid(*p);
    r.name = optional_string(j, "name");
    validate_record(r);
    e.ingested_at = parse_rfc3339(string_member(j, "ingested_at"));
    auto digest = digest_from_hex(string_member(j, "chain_digest"));
    if (!digest) bad("chain_digest must be 64 lowercase hex digits");
    e.chain_digest = *digest;
  } catch (const Error& err) {
    if (err.code() == Errc::MalformedRecord) throw;
    bad(err.what());
  }
  return e;
}

std::string event_line(const AuditEvent& e) { return event_to_json(e).dump(); }

std::string chain_payload(const AuditEvent& e) {
  auto j = record_fields(e);
  j["ingested_at"] = format_rfc3339(e.ingested_at);
  return j.dump();
}

std::string content_bytes(const AuditEvent& e) { return record_fields(e).dump(); }

}  // namespace chaudit
