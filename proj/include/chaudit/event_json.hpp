// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>
#include <string>

#include "chaudit/model.hpp"

namespace chaudit {

/// Flat object with fields in the fixed order: device, index, type_code,
/// type_name, ts_utc, flags, fid, ext_flags, uid, gid, nid, mode_mask,
/// parent_fid, name, ingested_at, chain_digest.
nlohmann::ordered_json event_to_json(const AuditEvent& event);

/// Inverse of event_to_json. Throws Error{MalformedRecord} on any missing,
/// mistyped or inconsistent field.
AuditEvent event_from_json(const nlohmann::json& object);

/// Compact single-line serialization; this is the persisted byte form.
std::string event_line(const AuditEvent& event);

/// The bytes covered by the chain digest: the persisted line without the
/// trailing chain_digest member.
std::string chain_payload(const AuditEvent& event);

/// Record content only (no ingestion time, no digest). Two events with equal
/// content are the same audit fact.
std::string content_bytes(const AuditEvent& event);

}  // namespace chaudit
