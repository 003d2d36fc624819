// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "chaudit/api.hpp"

#include <httplib.h>

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <set>

#include "chaudit/collector.hpp"
#include "chaudit/event_json.hpp"

namespace chaudit::api {

namespace {

std::string iso(Timestamp ts) { return format_rfc3339(ts); }

ordered_json nullable(const std::optional<std::string>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

template <typename T>
T parse_uint(std::string_view key, std::string_view text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(Errc::BadSpec, fmt::format("{} must be an unsigned integer, got '{}'", key, text));
  }
  return v;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Re-raises a parse failure of a query parameter as BadSpec.
template <typename Fn>
auto as_bad_spec(std::string_view key, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == Errc::BadSpec || e.code() == Errc::BadCursor) throw;
    throw Error(Errc::BadSpec, fmt::format("invalid {}: {}", key, e.what()));
  }
}

const std::set<std::string> kFilterKeys = {"device", "type", "uid",  "gid", "fid",
                                           "nid",    "name_contains", "from", "to"};

void allow_only(const httplib::Request& req, std::set<std::string> allowed) {
  for (const auto& [k, v] : req.params) {
    if (!allowed.contains(k)) {
      throw Error(Errc::BadSpec, fmt::format("unknown query parameter '{}'", k));
    }
  }
}

std::set<std::string> with(std::set<std::string> base, std::initializer_list<std::string> extra) {
  base.insert(extra.begin(), extra.end());
  return base;
}

std::optional<std::string> single(const httplib::Request& req, const std::string& key) {
  if (req.get_param_value_count(key) > 1) {
    throw Error(Errc::BadSpec, fmt::format("parameter '{}' given more than once", key));
  }
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

std::string_view state_name(RunState s) {
  switch (s) {
    case RunState::Running: return "running";
    case RunState::Completed: return "completed";
    case RunState::Failed: return "failed";
  }
  return "running";
}

}  // namespace

void validate(const ApiConfig& config) {
  if (config.port < 0 || config.port > 65535) {
    throw Error(Errc::InvalidArgument, fmt::format("port {} outside 1..65535", config.port));
  }
  if (config.heartbeat <= std::chrono::milliseconds::zero()) {
    throw Error(Errc::InvalidArgument, "heartbeat must be positive");
  }
  if (config.threads < 2) throw Error(Errc::InvalidArgument, "need at least 2 server threads");
}

int http_status(Errc code) noexcept {
  switch (code) {
    case Errc::BadSpec:
    case Errc::BadCursor:
    case Errc::ScriptParse:
    case Errc::InvalidArgument:
    case Errc::MalformedRecord:
    case Errc::UnknownType:
      return 400;
    case Errc::SimDisabled:
    case Errc::PermissionDenied:
      return 403;
    case Errc::NotFound:
    case Errc::UnknownCollection:
    case Errc::UnknownDevice:
    case Errc::UnknownUser:
    case Errc::NoEnt:
      return 404;
    case Errc::Conflict:
    case Errc::Exists:
    case Errc::Locked:
      return 409;
    case Errc::StoreUnavailable:
    case Errc::DeviceUnavailable:
      return 503;
    default:
      return 500;
  }
}

ordered_json error_view(Errc code, std::string_view message) {
  ordered_json j;
  j["code"] = errc_name(code);
  j["message"] = message;
  return j;
}

ordered_json event_view(const AuditEvent& event) { return event_to_json(event); }

ordered_json devices_view(const std::vector<store::CollectionInfo>& collections) {
  ordered_json list = ordered_json::array();
  for (const auto& c : collections) {
    ordered_json j;
    j["name"] = c.name;
    j["events"] = c.events;
    j["last_index"] = c.last_index;
    j["head_digest"] = to_hex(c.head);
    list.push_back(std::move(j));
  }
  ordered_json out;
  out["devices"] = std::move(list);
  return out;
}

ordered_json page_view(const store::Page& page) {
  ordered_json events = ordered_json::array();
  for (const auto& e : page.events) events.push_back(event_view(e));
  ordered_json out;
  out["events"] = std::move(events);
  out["next_cursor"] = nullable(page.next_cursor);
  out["total"] = page.total;
  return out;
}

ordered_json trail_view(const Fid& fid, const std::vector<AuditEvent>& events) {
  ordered_json list = ordered_json::array();
  for (const auto& e : events) list.push_back(event_view(e));
  ordered_json out;
  out["fid"] = to_string(fid);
  out["events"] = std::move(list);
  return out;
}

ordered_json counts_view(store::Dimension dimension,
                         const std::map<std::string, std::size_t>& counts) {
  ordered_json map = ordered_json::object();
  std::size_t total = 0;
  for (const auto& [k, v] : counts) {
    map[k] = v;
    total += v;
  }
  ordered_json out;
  out["by"] = store::to_string(dimension);
  out["counts"] = std::move(map);
  out["total"] = total;
  return out;
}

ordered_json timeline_view(std::int64_t bucket_seconds,
                           const std::vector<std::pair<Timestamp, std::size_t>>& buckets) {
  ordered_json list = ordered_json::array();
  for (const auto& [start, count] : buckets) {
    ordered_json b;
    b["start"] = iso(start);
    b["count"] = count;
    list.push_back(std::move(b));
  }
  ordered_json out;
  out["bucket_seconds"] = bucket_seconds;
  out["buckets"] = std::move(list);
  return out;
}

ordered_json denied_view(const std::vector<store::DeniedOpenRow>& rows) {
  ordered_json list = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json j;
    j["uid"] = r.uid;
    j["nid"] = r.nid;
    j["count"] = r.count;
    j["first_ts"] = iso(r.first_ts);
    j["last_ts"] = iso(r.last_ts);
    list.push_back(std::move(j));
  }
  ordered_json out;
  out["rows"] = std::move(list);
  return out;
}

ordered_json verify_view(const std::string& device, const store::VerifyResult& result) {
  ordered_json out;
  out["device"] = device;
  out["ok"] = result.ok;
  out["first_bad_index"] =
      result.first_bad_index ? ordered_json(*result.first_bad_index) : ordered_json(nullptr);
  out["checked"] = result.checked;
  out["head_digest"] = to_hex(result.head);
  return out;
}

ordered_json df_view(const sim::CapacityReport& report) {
  auto row = [](const sim::CapacityRow& r) {
    ordered_json j;
    j["uuid"] = r.uuid;
    j["bytes"] = r.total;
    j["used"] = r.used;
    j["available"] = r.available;
    j["use_percent"] = r.use_percent;
    j["mounted_on"] = r.mount;
    return j;
  };
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) rows.push_back(row(r));
  ordered_json out;
  out["rows"] = std::move(rows);
  out["summary"] = row(report.summary);
  return out;
}

ordered_json run_view(const RunStatus& s) {
  ordered_json failures = ordered_json::array();
  for (const auto& f : s.failures) {
    ordered_json j;
    j["op"] = f.op_number;
    j["line"] = f.line;
    j["code"] = errc_name(f.code);
    j["message"] = f.message;
    failures.push_back(std::move(j));
  }
  ordered_json out;
  out["run_id"] = s.id;
  out["script"] = s.script;
  out["state"] = state_name(s.state);
  out["op_count"] = s.op_count;
  out["ops"] = s.ops;
  out["failures"] = std::move(failures);
  out["error"] = nullable(s.error);
  out["started_at"] = iso(s.started_at);
  out["finished_at"] = s.finished_at ? ordered_json(iso(*s.finished_at)) : ordered_json(nullptr);
  return out;
}

store::QuerySpec parse_query(const std::multimap<std::string, std::string>& params) {
  store::QuerySpec spec;
  std::map<std::string, std::size_t> seen;
  for (const auto& [key, value] : params) {
    if (key != "type" && ++seen[key] > 1) {
      throw Error(Errc::BadSpec, fmt::format("parameter '{}' given more than once", key));
    }
    if (key == "device") {
      spec.device = value;
    } else if (key == "type") {
      if (!spec.types) spec.types.emplace();
      for (auto name : split(value, ',')) {
        if (name.empty()) throw Error(Errc::BadSpec, "empty type name");
        auto kind = as_bad_spec("type", [&] { return type_by_name(name).kind; });
        if (std::find(spec.types->begin(), spec.types->end(), kind) == spec.types->end()) {
          spec.types->push_back(kind);
        }
      }
    } else if (key == "uid") {
      spec.uid = parse_uint<std::uint32_t>(key, value);
    } else if (key == "gid") {
      spec.gid = parse_uint<std::uint32_t>(key, value);
    } else if (key == "fid") {
      spec.fid = as_bad_spec("fid", [&] { return parse_fid_param(value); });
    } else if (key == "nid") {
      spec.nid = as_bad_spec("nid", [&] { return parse_nid(value); });
    } else if (key == "name_contains") {
      spec.name_contains = value;
    } else if (key == "from") {
      spec.from_ts = parse_rfc3339(value);
    } else if (key == "to") {
      spec.to_ts = parse_rfc3339(value);
    } else if (key == "limit") {
      spec.limit = parse_uint<std::size_t>(key, value);
    } else if (key == "cursor") {
      store::decode_cursor(value);
      spec.cursor = value;
    }
  }
  store::validate(spec);
  return spec;
}

Fid parse_fid_param(std::string_view text) {
  if (!text.empty() && text.front() == '[') return parse_fid(text);
  return parse_fid(fmt::format("[{}]", text));
}

std::map<std::string, std::uint64_t> parse_stream_position(std::string_view text) {
  std::map<std::string, std::uint64_t> out;
  for (auto part : split(text, ',')) {
    auto colon = part.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw Error(Errc::BadCursor, fmt::format("invalid stream position '{}'", text));
    }
    std::string device(part.substr(0, colon));
    auto num = part.substr(colon + 1);
    std::uint64_t index = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), index);
    if (num.empty() || ec != std::errc{} || ptr != num.data() + num.size() ||
        !store::is_valid_collection_name(device) || out.contains(device)) {
      throw Error(Errc::BadCursor, fmt::format("invalid stream position '{}'", text));
    }
    out[device] = index;
  }
  return out;
}

std::string format_stream_position(const std::map<std::string, std::uint64_t>& position) {
  std::string out;
  for (const auto& [device, index] : position) {
    if (!out.empty()) out.push_back(',');
    out += fmt::format("{}:{}", device, index);
  }
  return out;
}

// --- workload runs ---------------------------------------------------------

struct WorkloadRunner::Run {
  RunStatus status;
};

WorkloadRunner::WorkloadRunner(sim::SimFs& fs) : fs_(fs) {}

WorkloadRunner::~WorkloadRunner() { threads_.clear(); }

RunStatus WorkloadRunner::submit(std::string name, std::string_view text,
                                 sim::RunOptions options) {
  auto script = std::make_shared<sim::Script>(sim::parse_script(text));
  auto run = std::make_shared<Run>();
  std::lock_guard lock(mutex_);
  run->status.id = fmt::format("run-{}", next_id_++);
  run->status.script = std::move(name);
  run->status.op_count = script->op_count();
  run->status.started_at = fs_.now();
  runs_[run->status.id] = run;
  threads_.emplace_back([this, run, script, options] {
    RunStatus done;
    {
      std::lock_guard l(mutex_);
      done = run->status;
    }
    try {
      auto report = sim::run_workload(fs_, *script, options);
      done.ops = report.ops;
      done.failures = std::move(report.failures);
      done.state = RunState::Completed;
    } catch (const sim::WorkloadError& e) {
      done.ops = e.op_number();
      done.failures.push_back(sim::RunFailure{e.op_number(), e.line(), e.code(), e.what()});
      done.error = e.what();
      done.state = RunState::Failed;
    } catch (const std::exception& e) {
      done.error = e.what();
      done.state = RunState::Failed;
    }
    done.finished_at = fs_.now();
    {
      std::lock_guard l(mutex_);
      run->status = std::move(done);
    }
    cv_.notify_all();
  });
  return run->status;
}

std::optional<RunStatus> WorkloadRunner::status(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = runs_.find(id);
  if (it == runs_.end()) return std::nullopt;
  return it->second->status;
}

std::optional<RunStatus> WorkloadRunner::wait(const std::string& id) const {
  std::unique_lock lock(mutex_);
  auto it = runs_.find(id);
  if (it == runs_.end()) return std::nullopt;
  auto run = it->second;
  cv_.wait(lock, [&] { return run->status.state != RunState::Running; });
  return run->status;
}

// --- server ----------------------------------------------------------------

struct Server::Impl {
  ApiConfig config;
  store::AuditStore& store;
  sim::SimFs* sim;
  std::unique_ptr<WorkloadRunner> runner;
  httplib::Server http;
  std::thread listener;
  std::jthread refresher;
  std::atomic<bool> stopping{false};

  Impl(ApiConfig c, store::AuditStore& s, sim::SimFs* fs)
      : config(std::move(c)), store(s), sim(fs) {
    if (sim) runner = std::make_unique<WorkloadRunner>(*sim);
    routes();
  }

  static void send_json(httplib::Response& res, const ordered_json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), std::string(kMediaType));
  }

  static void send_error(httplib::Response& res, Errc code, std::string_view message) {
    send_json(res, error_view(code, message), http_status(code));
  }

  template <typename Fn>
  httplib::Server::Handler handler(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.what());
      }
    };
  }

  sim::SimFs& require_sim() const {
    if (!sim) throw Error(Errc::SimDisabled, "simulator control is not enabled on this server");
    return *sim;
  }

  void routes() {
    const std::string p(kPrefix);

    http.Get(p + "/devices", handler([this](const httplib::Request& req, httplib::Response& res) {
      allow_only(req, {});
      send_json(res, devices_view(store.collections()));
    }));

    http.Get(p + "/events", handler([this](const httplib::Request& req, httplib::Response& res) {
      allow_only(req, with(kFilterKeys, {"limit", "cursor"}));
      send_json(res, page_view(store.query(parse_query(req.params))));
    }));

    http.Get(p + "/events/stream",
             [this](const httplib::Request& req, httplib::Response& res) { stream(req, res); });

    http.Get(p + R"(/events/([^/]+)/([0-9]+))",
             handler([this](const httplib::Request& req, httplib::Response& res) {
               allow_only(req, {});
               std::string device = req.matches[1];
               auto index = parse_uint<std::uint64_t>("index", req.matches[2].str());
               auto e = store.get(device, index);
               if (!e) throw Error(Errc::NotFound, fmt::format("no event {}:{}", device, index));
               send_json(res, event_view(*e));
             }));

    // Path form of a continuation: /events/<cursor> == /events?cursor=<cursor>.
    http.Get(p + R"(/events/([^/]+))",
             handler([this](const httplib::Request& req, httplib::Response& res) {
               allow_only(req, with(kFilterKeys, {"limit"}));
               auto params = req.params;
               params.emplace("cursor", req.matches[1].str());
               send_json(res, page_view(store.query(parse_query(params))));
             }));

    http.Get(p + R"(/trail/([^/]+))",
             handler([this](const httplib::Request& req, httplib::Response& res) {
               allow_only(req, {});
               auto fid = as_bad_spec("fid", [&] { return parse_fid_param(req.matches[1].str()); });
               send_json(res, trail_view(fid, store.trail(fid)));
             }));

    http.Get(p + "/stats/counts",
             handler([this](const httplib::Request& req, httplib::Response& res) {
               allow_only(req, with(kFilterKeys, {"by"}));
               auto params = req.params;
               params.erase("by");
               auto dim = store::parse_dimension(single(req, "by").value_or("type"));
               send_json(res, counts_view(dim, store.counts_by(dim, parse_query(params))));
             }));

    http.Get(p + "/stats/timeline",
             handler([this](const httplib::Request& req, httplib::Response& res) {
               allow_only(req, with(kFilterKeys, {"bucket"}));
               auto params = req.params;
               params.erase("bucket");
               auto bucket_text = single(req, "bucket").value_or("60");
               auto bucket = parse_uint<std::int64_t>("bucket", bucket_text);
               send_json(res, timeline_view(bucket, store.timeline(parse_query(params), bucket)));
             }));

    http.Get(p + "/anomalies/denied-opens",
             handler([this](const httplib::Request& req, httplib::Response& res) {
               allow_only(req, kFilterKeys);
               send_json(res, denied_view(store.denied_open_report(parse_query(req.params))));
             }));

    http.Get(p + "/chain/verify",
             handler([this](const httplib::Request& req, httplib::Response& res) {
               allow_only(req, {"device"});
               auto device = single(req, "device");
               if (!device || device->empty()) throw Error(Errc::BadSpec, "device is required");
               send_json(res, verify_view(*device, store.verify_chain(*device)));
             }));

    http.Get(p + "/df", handler([this](const httplib::Request& req, httplib::Response& res) {
      allow_only(req, {"format"});
      auto format = single(req, "format").value_or("json");
      if (format != "json" && format != "text") {
        throw Error(Errc::BadSpec, fmt::format("format must be json or text, got '{}'", format));
      }
      auto report = require_sim().df();
      if (format == "text") {
        res.set_content(sim::render_df(report), "text/plain; charset=utf-8");
      } else {
        send_json(res, df_view(report));
      }
    }));

    http.Post(p + "/sim/workload",
              handler([this](const httplib::Request& req, httplib::Response& res) {
                auto& fs = require_sim();
                (void)fs;
                nlohmann::json body;
                try {
                  body = nlohmann::json::parse(req.body);
                } catch (const std::exception& e) {
                  throw Error(Errc::BadSpec, fmt::format("request body is not JSON: {}", e.what()));
                }
                if (!body.is_object()) throw Error(Errc::BadSpec, "request body must be an object");
                for (const auto& [k, v] : body.items()) {
                  if (k != "script" && k != "inline" && k != "keep_going") {
                    throw Error(Errc::BadSpec, fmt::format("unknown field '{}'", k));
                  }
                }
                bool has_script = body.contains("script");
                bool has_inline = body.contains("inline");
                if (has_script == has_inline) {
                  throw Error(Errc::BadSpec, "exactly one of 'script' or 'inline' is required");
                }
                sim::RunOptions options;
                options.keep_going = true;
                if (body.contains("keep_going")) {
                  if (!body["keep_going"].is_boolean()) {
                    throw Error(Errc::BadSpec, "'keep_going' must be a boolean");
                  }
                  options.keep_going = body["keep_going"].get<bool>();
                }
                std::string name;
                std::string text;
                if (has_script) {
                  if (!body["script"].is_string()) throw Error(Errc::BadSpec, "'script' must be a string");
                  name = body["script"].get<std::string>();
                  auto builtin = sim::builtin_script(name);
                  if (!builtin) throw Error(Errc::NotFound, fmt::format("no script named '{}'", name));
                  text = *builtin;
                } else {
                  if (!body["inline"].is_string()) throw Error(Errc::BadSpec, "'inline' must be a string");
                  name = "inline";
                  text = body["inline"].get<std::string>();
                }
                RunStatus status;
                try {
                  status = runner->submit(name, text, options);
                } catch (const Error& e) {
                  if (e.code() != Errc::ScriptParse) throw;
                  auto err = error_view(e.code(), e.what());
                  if (e.position()) err["line"] = *e.position();
                  send_json(res, err, 400);
                  return;
                }
                ordered_json out;
                out["run_id"] = status.id;
                out["accepted"] = true;
                out["op_count"] = status.op_count;
                send_json(res, out, 202);
              }));

    http.Get(p + R"(/sim/workload/([^/]+))",
             handler([this](const httplib::Request& req, httplib::Response& res) {
               require_sim();
               allow_only(req, {});
               auto status = runner->status(req.matches[1]);
               if (!status) {
                 throw Error(Errc::NotFound, fmt::format("no run '{}'", req.matches[1].str()));
               }
               send_json(res, run_view(*status));
             }));

    if (config.static_dir) http.set_mount_point("/", config.static_dir->string());

    http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 404) {
        send_error(res, Errc::NotFound, fmt::format("no route for {} {}", req.method, req.path));
      } else {
        auto body = error_view(Errc::InvalidArgument, httplib::status_message(res.status));
        body["code"] = "HttpError";
        send_json(res, body, res.status);
      }
    });
    http.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          std::string what = "internal error";
          try {
            std::rethrow_exception(ep);
          } catch (const std::exception& e) {
            what = e.what();
          } catch (...) {
          }
          auto body = error_view(Errc::Io, what);
          body["code"] = "Internal";
          send_json(res, body, 500);
        });
  }

  // Server-sent events. Each frame's id is the connection's full position
  // (`device:index[,device:index...]`) so a reconnect resumes every device
  // without gaps. Devices first seen after connecting start from index 0.
  void stream(const httplib::Request& req, httplib::Response& res) {
    struct State {
      std::optional<std::string> device;
      std::optional<std::vector<RecordKind>> types;
      std::map<std::string, std::uint64_t> position;
      std::chrono::steady_clock::time_point last_write;
      bool greeted = false;
    };
    auto state = std::make_shared<State>();
    try {
      allow_only(req, {"device", "type", "last_event_id"});
      std::multimap<std::string, std::string> filter;
      for (const auto& [k, v] : req.params) {
        if (k == "device" || k == "type") filter.emplace(k, v);
      }
      auto spec = parse_query(filter);
      state->device = spec.device;
      state->types = spec.types;
      std::string resume = req.get_header_value("Last-Event-Id");
      if (resume.empty()) resume = single(req, "last_event_id").value_or("");
      if (!resume.empty()) {
        state->position = parse_stream_position(resume);
      } else {
        for (const auto& c : store.collections()) state->position[c.name] = c.last_index;
      }
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
      return;
    }

    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    res.set_chunked_content_provider(
        "text/event-stream", [this, state](std::size_t, httplib::DataSink& sink) {
          auto write = [&](const std::string& text) {
            state->last_write = std::chrono::steady_clock::now();
            return sink.write(text.data(), text.size());
          };
          if (!state->greeted) {
            state->greeted = true;
            return write("retry: 1000\n: connected\n\n");
          }
          if (stopping) {
            sink.done();
            return true;
          }
          auto seq = store.commit_sequence();
          std::string frames;
          for (const auto& c : store.collections()) {
            if (state->device && c.name != *state->device) continue;
            auto& pos = state->position[c.name];
            while (true) {
              auto batch = store.events_after(c.name, pos, 512);
              if (batch.empty()) break;
              for (const auto& e : batch) {
                pos = e.record.index;
                if (state->types && std::find(state->types->begin(), state->types->end(),
                                              e.record.type) == state->types->end()) {
                  continue;
                }
                frames += fmt::format("id: {}\nevent: audit\ndata: {}\n\n",
                                      format_stream_position(state->position),
                                      event_view(e).dump());
              }
            }
          }
          if (!frames.empty()) return write(frames);
          if (!sink.is_writable()) return false;
          auto now = std::chrono::steady_clock::now();
          if (now - state->last_write >= config.heartbeat) return write(": heartbeat\n\n");
          auto wait = std::min<std::chrono::milliseconds>(
              std::chrono::duration_cast<std::chrono::milliseconds>(
                  config.heartbeat - (now - state->last_write)),
              std::chrono::milliseconds{200});
          store.wait_for_commit(seq, std::max(wait, std::chrono::milliseconds{1}));
          return true;
        });
  }
};

Server::Server(ApiConfig config, store::AuditStore& store, sim::SimFs* sim) {
  validate(config);
  impl_ = std::make_unique<Impl>(std::move(config), store, sim);
}

Server::~Server() { stop(); }

int Server::start() {
  auto& im = *impl_;
  auto threads = im.config.threads;
  im.http.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  int port = im.config.port;
  if (port == 0) {
    port = im.http.bind_to_any_port(im.config.host);
    if (port < 0) port = 0;
  } else if (!im.http.bind_to_port(im.config.host, port)) {
    port = 0;
  }
  if (port <= 0) {
    throw Error(Errc::BindError,
                fmt::format("cannot bind {}:{}", im.config.host, im.config.port));
  }
  port_ = port;
  running_ = true;
  im.listener = std::thread([&im] { im.http.listen_after_bind(); });
  if (im.config.refresh_interval > std::chrono::milliseconds::zero()) {
    im.refresher = std::jthread([&im](std::stop_token stop) {
      while (collector::default_sleep(im.config.refresh_interval, stop)) {
        try {
          im.store.refresh();
        } catch (const std::exception&) {
          // Transient read failures are retried on the next tick.
        }
      }
    });
  }
  im.http.wait_until_ready();
  return port_;
}

void Server::stop() {
  if (!impl_ || !running_) return;
  auto& im = *impl_;
  im.stopping = true;
  if (im.refresher.joinable()) {
    im.refresher.request_stop();
    im.refresher.join();
  }
  im.http.stop();
  if (im.listener.joinable()) im.listener.join();
  running_ = false;
}

}  // namespace chaudit::api
