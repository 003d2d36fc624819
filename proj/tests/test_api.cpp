// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the HTTP service with a plain client and compares every body with
// the view of the direct store/simulator call.

#include <gtest/gtest.h>
#include <httplib.h>

#include <set>
#include <thread>

#include "chaudit/api.hpp"
#include "chaudit/collector.hpp"
#include "support/corpus.hpp"

using namespace chaudit;
using nlohmann::json;
using testsupport::TempDir;

namespace {

const std::string kDev = "lustre-MDT0000";

struct Bench {
  TempDir tmp;
  sim::SimFs fs;
  store::AuditStore store{tmp.path(), store::StoreOptions{false, false}};
  collector::SimDevice device{fs, fs.mdt_name()};
  std::unique_ptr<collector::Collector> col;
  std::unique_ptr<api::Server> server;
  int port = 0;

  explicit Bench(bool attach_sim = true, std::chrono::milliseconds heartbeat = std::chrono::seconds{1}) {
    collector::CollectorConfig cfg;
    cfg.store_dir = tmp.path();
    col = std::make_unique<collector::Collector>(cfg, device, store, [this] { return fs.now(); });
    fs.set_mask(kDev, "ALL");
    api::ApiConfig ac;
    ac.port = 0;
    ac.store_dir = tmp.path();
    ac.heartbeat = heartbeat;
    ac.refresh_interval = std::chrono::milliseconds{0};
    server = std::make_unique<api::Server>(ac, store, attach_sim ? &fs : nullptr);
    port = server->start();
  }

  void run(std::string_view name) {
    sim::RunOptions o;
    o.keep_going = true;
    sim::run_workload(fs, sim::parse_script(*sim::builtin_script(name)), o);
    drain();
  }
  void drain() {
    while (col->run_cycle().read > 0) {
    }
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    return c;
  }
};

struct Reply {
  int status = 0;
  std::string type;
  std::string body;
  json j() const { return json::parse(body); }
};

Reply get(const Bench& b, const std::string& path, const httplib::Headers& headers = {}) {
  auto c = b.client();
  auto r = c.Get(path, headers);
  if (!r) return {};
  return {r->status, r->get_header_value("Content-Type"), r->body};
}

Reply post(const Bench& b, const std::string& path, const std::string& body) {
  auto c = b.client();
  auto r = c.Post(path, body, "application/json");
  if (!r) return {};
  return {r->status, r->get_header_value("Content-Type"), r->body};
}

void expect_json(const Reply& r, const api::ordered_json& want, int status = 200) {
  EXPECT_EQ(r.status, status) << r.body;
  EXPECT_EQ(r.type, api::kMediaType);
  EXPECT_EQ(r.body, want.dump());
}

void expect_error(const Reply& r, int status, std::string_view code) {
  EXPECT_EQ(r.status, status) << r.body;
  EXPECT_EQ(r.type, api::kMediaType);
  auto j = json::parse(r.body, nullptr, false);
  ASSERT_TRUE(j.is_object()) << r.body;
  EXPECT_EQ(j.value("code", ""), code) << r.body;
  EXPECT_TRUE(j.contains("message"));
}

std::string enc(const std::string& s) { return httplib::detail::encode_query_param(s); }

}  // namespace

TEST(Api, DevicesAndSingleEvents) {
  Bench b;
  b.run("create100.wl");
  expect_json(get(b, "/api/v1/devices"), api::devices_view(b.store.collections()));
  auto devs = get(b, "/api/v1/devices").j();
  EXPECT_EQ(devs["devices"][0]["name"], kDev);
  EXPECT_EQ(devs["devices"][0]["events"], 402);
  expect_json(get(b, "/api/v1/events/" + kDev + "/7"), api::event_view(*b.store.get(kDev, 7)));
  expect_error(get(b, "/api/v1/events/" + kDev + "/999"), 404, "NotFound");
  expect_error(get(b, "/api/v1/events/nope/1"), 404, "NotFound");
  expect_error(get(b, "/api/v1/nowhere"), 404, "NotFound");
  expect_error(get(b, "/api/v1/devices?x=1"), 400, "BadSpec");
}

TEST(Api, EventSearchPagesMatchStore) {
  Bench b;
  b.run("create100.wl");
  std::string path = "/api/v1/events?type=CREAT&limit=30";
  store::QuerySpec spec;
  spec.types = std::vector<RecordKind>{RecordKind::Creat};
  spec.limit = 30;
  std::vector<std::uint64_t> seen;
  for (int guard = 0; guard < 10; ++guard) {
    auto r = get(b, path);
    auto page = b.store.query(spec);
    expect_json(r, api::page_view(page));
    auto j = r.j();
    EXPECT_EQ(j["total"], 100);
    for (const auto& e : j["events"]) seen.push_back(e["index"].get<std::uint64_t>());
    if (j["next_cursor"].is_null()) break;
    spec.cursor = j["next_cursor"].get<std::string>();
    path = "/api/v1/events?type=CREAT&limit=30&cursor=" + enc(*spec.cursor);
  }
  ASSERT_EQ(seen.size(), 100u);
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], 3 + 4 * i);

  // Every filter the route accepts, combined.
  store::QuerySpec q;
  q.device = kDev;
  q.types = std::vector<RecordKind>{RecordKind::Open, RecordKind::Close};
  q.uid = 0;
  q.gid = 0;
  q.fid = Fid{0x200000401, 0x5, 0};
  q.nid = parse_nid("10.128.11.159@tcp");
  q.from_ts = parse_rfc3339("2024-01-01T00:00:00Z");
  q.to_ts = parse_rfc3339("2024-01-01T00:00:01.5Z");
  expect_json(get(b, "/api/v1/events?device=" + kDev +
                         "&type=OPEN,CLOSE&uid=0&gid=0&fid=" + enc("[0x200000401:0x5:0x0]") +
                         "&nid=" + enc("10.128.11.159@tcp") +
                         "&from=2024-01-01T00:00:00Z&to=2024-01-01T00:00:01.5Z"),
              api::page_view(b.store.query(q)));
  EXPECT_EQ(b.store.query(q).total, 2u);

  store::QuerySpec named;
  named.name_contains = "file09";
  expect_json(get(b, "/api/v1/events?name_contains=file09"), api::page_view(b.store.query(named)));
  EXPECT_EQ(b.store.query(named).total, 10u);
}

TEST(Api, ValidationErrors) {
  Bench b;
  b.run("lifecycle.wl");
  expect_error(get(b, "/api/v1/events/badcursor"), 400, "BadCursor");
  expect_error(get(b, "/api/v1/events?cursor=badcursor"), 400, "BadCursor");
  expect_error(get(b, "/api/v1/events?limit=0"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/events?limit=abc"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/events?type=BOGUS"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/events?uid=1&uid=2"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/events?from=yesterday"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/events?colour=red"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/stats/counts?by=gid"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/stats/timeline?bucket=0"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/trail/zzz"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/chain/verify"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/chain/verify?device=ghost"), 404, "UnknownCollection");
  expect_error(get(b, "/api/v1/df?format=xml"), 400, "BadSpec");
  // A path-form cursor that decodes is an ordinary continuation.
  auto cur = store::encode_cursor(kDev, 3);
  store::QuerySpec s;
  s.cursor = cur;
  expect_json(get(b, "/api/v1/events/" + enc(cur)), api::page_view(b.store.query(s)));
}

TEST(Api, TrailCountsTimelineVerify) {
  Bench b;
  b.run("lifecycle.wl");
  Fid f{0x200000401, 0x1, 0};
  auto want = api::trail_view(f, b.store.trail(f));
  expect_json(get(b, "/api/v1/trail/" + enc("[0x200000401:0x1:0x0]")), want);
  expect_json(get(b, "/api/v1/trail/0x200000401:0x1:0x0"), want);
  std::vector<std::string> kinds;
  for (const auto& e : want["events"]) kinds.push_back(e["type_name"]);
  EXPECT_EQ(kinds, (std::vector<std::string>{"CREAT", "SATTR", "RENME", "RNMTO", "UNLNK"}));

  for (auto dim : {"type", "uid", "nid"}) {
    auto d = store::parse_dimension(dim);
    expect_json(get(b, std::string("/api/v1/stats/counts?by=") + dim),
                api::counts_view(d, b.store.counts_by(d, {})));
  }
  expect_json(get(b, "/api/v1/stats/counts"),
              api::counts_view(store::Dimension::Type, b.store.counts_by(store::Dimension::Type, {})));
  store::QuerySpec only;
  only.types = std::vector<RecordKind>{RecordKind::Mark};
  expect_json(get(b, "/api/v1/stats/counts?by=uid&type=MARK"),
              api::counts_view(store::Dimension::Uid, b.store.counts_by(store::Dimension::Uid, only)));

  expect_json(get(b, "/api/v1/stats/timeline"), api::timeline_view(60, b.store.timeline({}, 60)));
  expect_json(get(b, "/api/v1/stats/timeline?bucket=1"), api::timeline_view(1, b.store.timeline({}, 1)));

  expect_json(get(b, "/api/v1/chain/verify?device=" + kDev),
              api::verify_view(kDev, b.store.verify_chain(kDev)));
  EXPECT_EQ(get(b, "/api/v1/chain/verify?device=" + kDev).j()["ok"], true);
}

TEST(Api, DeniedOpensReportExact) {
  Bench b;
  b.run("denied-opens.wl");
  auto r = get(b, "/api/v1/anomalies/denied-opens");
  expect_json(r, api::denied_view(b.store.denied_open_report({})));
  auto rows = r.j()["rows"];
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["uid"], 501);
  EXPECT_EQ(rows[0]["nid"], "10.128.11.160@tcp");
  EXPECT_EQ(rows[0]["count"], 3);
  store::QuerySpec nopen;
  nopen.types = std::vector<RecordKind>{RecordKind::Nopen};
  EXPECT_EQ(b.store.query(nopen).total, 3u);
  for (const auto& e : b.store.query(nopen).events) {
    EXPECT_EQ(to_string(*e.record.mode_mask), "-w-");
  }
}

TEST(Api, DfMatchesSimulatorByteForByte) {
  Bench b;
  b.run("create100.wl");
  auto text = get(b, "/api/v1/df?format=text");
  EXPECT_EQ(text.status, 200);
  EXPECT_EQ(text.type, "text/plain; charset=utf-8");
  EXPECT_EQ(text.body, sim::render_df(b.fs.df()));
  expect_json(get(b, "/api/v1/df"), api::df_view(b.fs.df()));
  expect_json(get(b, "/api/v1/df?format=json"), api::df_view(b.fs.df()));
}

TEST(Api, WorkloadTriggerAndStatus) {
  Bench b;
  auto r = post(b, "/api/v1/sim/workload", R"({"script":"create100.wl"})");
  ASSERT_EQ(r.status, 202) << r.body;
  EXPECT_EQ(r.type, api::kMediaType);
  auto j = r.j();
  EXPECT_EQ(j["accepted"], true);
  EXPECT_EQ(j["op_count"], 400);
  std::string id = j["run_id"];
  json st;
  for (int i = 0; i < 500; ++i) {
    st = get(b, "/api/v1/sim/workload/" + id).j();
    if (st["state"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds{10});
  }
  EXPECT_EQ(st["state"], "completed");
  EXPECT_EQ(st["ops"], 400);
  EXPECT_TRUE(st["failures"].empty());
  b.drain();
  store::QuerySpec creat;
  creat.types = std::vector<RecordKind>{RecordKind::Creat};
  EXPECT_EQ(b.store.query(creat).total, 100u);

  auto bad = post(b, "/api/v1/sim/workload", R"({"inline":"mkdir /a\nfrobnicate /a\n"})");
  expect_error(bad, 400, "ScriptParse");
  EXPECT_EQ(bad.j()["line"], 2);
  expect_error(post(b, "/api/v1/sim/workload", R"({"script":"nope.wl"})"), 404, "NotFound");
  expect_error(post(b, "/api/v1/sim/workload", "not json"), 400, "BadSpec");
  expect_error(post(b, "/api/v1/sim/workload", R"({"script":"a","inline":"b"})"), 400, "BadSpec");
  expect_error(get(b, "/api/v1/sim/workload/run-999"), 404, "NotFound");

  // keep_going=false stops at the first denied open.
  auto stop = post(b, "/api/v1/sim/workload",
                   R"({"script":"denied-opens.wl","keep_going":false})");
  ASSERT_EQ(stop.status, 202);
  std::string sid = stop.j()["run_id"];
  for (int i = 0; i < 500; ++i) {
    st = get(b, "/api/v1/sim/workload/" + sid).j();
    if (st["state"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds{10});
  }
  EXPECT_EQ(st["state"], "failed");
  EXPECT_EQ(st["ops"], 6);  // attempted, the failing one included
  ASSERT_EQ(st["failures"].size(), 1u);
  EXPECT_EQ(st["failures"][0]["op"], 6);
  EXPECT_EQ(st["failures"][0]["line"], 12);
  EXPECT_EQ(st["failures"][0]["code"], "PermissionDenied");
}

TEST(Api, SimEndpointsDisabledWithoutSimulator) {
  Bench b(false);
  expect_error(post(b, "/api/v1/sim/workload", R"({"script":"create100.wl"})"), 403, "SimDisabled");
  expect_error(get(b, "/api/v1/sim/workload/run-1"), 403, "SimDisabled");
  expect_error(get(b, "/api/v1/df"), 403, "SimDisabled");
  EXPECT_EQ(get(b, "/api/v1/devices").status, 200);
}

// --- live stream -------------------------------------------------------------

namespace {

struct Frame {
  std::string id;
  std::string event;
  std::string data;
};

// Reads frames until `enough` says stop (or the server goes quiet).
struct StreamReader {
  std::vector<Frame> frames;
  std::vector<std::string> comments;
  std::string buffer;

  void feed(const char* data, std::size_t n) {
    buffer.append(data, n);
    std::size_t end;
    while ((end = buffer.find("\n\n")) != std::string::npos) {
      std::string block = buffer.substr(0, end);
      buffer.erase(0, end + 2);
      Frame f;
      bool any = false;
      std::size_t at = 0;
      while (at <= block.size()) {
        auto nl = block.find('\n', at);
        if (nl == std::string::npos) nl = block.size();
        auto line = block.substr(at, nl - at);
        at = nl + 1;
        if (line.rfind(": ", 0) == 0) comments.push_back(line.substr(2));
        if (line.rfind("id: ", 0) == 0) f.id = line.substr(4), any = true;
        if (line.rfind("event: ", 0) == 0) f.event = line.substr(7);
        if (line.rfind("data: ", 0) == 0) f.data = line.substr(6);
      }
      if (any) frames.push_back(f);
    }
  }
};

StreamReader read_stream(const Bench& b, const std::string& path, const httplib::Headers& headers,
                         const std::function<bool(const StreamReader&)>& enough,
                         int* status = nullptr) {
  StreamReader reader;
  auto c = b.client();
  c.set_read_timeout(5, 0);
  auto res = c.Get(path, headers, [&](const char* data, std::size_t n) {
    reader.feed(data, n);
    return !enough(reader);
  });
  if (status && res) *status = res->status;
  return reader;
}

std::uint64_t data_index(const Frame& f) { return json::parse(f.data)["index"]; }

}  // namespace

TEST(Stream, LiveCreatesArriveInOrder) {
  Bench b;
  b.run("lifecycle.wl");
  std::atomic<bool> connected{false};
  std::thread producer([&] {
    while (!connected) std::this_thread::sleep_for(std::chrono::milliseconds{5});
    std::this_thread::sleep_for(std::chrono::milliseconds{100});
    for (int i = 0; i < 5; ++i) b.fs.apply(sim::ClientCtx{}, sim::op::Create{"/live" + std::to_string(i), 0644});
    b.drain();
  });
  auto reader = read_stream(b, "/api/v1/events/stream?type=CREAT", {}, [&](const StreamReader& r) {
    if (!r.comments.empty()) connected = true;
    return r.frames.size() >= 5;
  });
  producer.join();
  ASSERT_EQ(reader.frames.size(), 5u);
  EXPECT_EQ(reader.comments.at(0), "connected");
  std::uint64_t prev = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& f = reader.frames[i];
    EXPECT_EQ(f.event, "audit");
    auto j = json::parse(f.data);
    EXPECT_EQ(j["type_name"], "CREAT");
    EXPECT_EQ(j["name"], "live" + std::to_string(i));
    EXPECT_GT(data_index(f), prev);
    prev = data_index(f);
    EXPECT_EQ(f.id, kDev + ":" + std::to_string(prev));
    EXPECT_EQ(f.data, api::event_view(*b.store.get(kDev, prev)).dump());
  }
}

TEST(Stream, ResumeAcrossDisconnectHasNoGapsOrDuplicates) {
  Bench b;
  b.run("lifecycle.wl");
  // Keep appending while the client reads, drops, and reconnects.
  std::atomic<bool> done{false};
  std::thread producer([&] {
    for (int i = 0; i < 60; ++i) {
      b.fs.apply(sim::ClientCtx{}, sim::op::Create{"/p" + std::to_string(i), 0644});
      if (i % 7 == 0) b.drain();
      std::this_thread::sleep_for(std::chrono::milliseconds{3});
    }
    b.drain();
    done = true;
  });
  std::vector<std::uint64_t> got;
  std::string last_id = kDev + ":0";
  int connections = 0;
  while (connections < 50) {
    ++connections;
    auto total_target = [&] { return done ? b.store.collections()[0].last_index : ~0ull; };
    auto reader = read_stream(b, "/api/v1/events/stream", {{"Last-Event-Id", last_id}},
                              [&](const StreamReader& r) {
                                // Drop the connection every 17 frames.
                                return r.frames.size() >= 17 ||
                                       (!r.frames.empty() &&
                                        data_index(r.frames.back()) >= total_target());
                              });
    for (const auto& f : reader.frames) {
      got.push_back(data_index(f));
      last_id = f.id;
    }
    if (done && !got.empty() && got.back() == b.store.collections()[0].last_index) break;
  }
  producer.join();
  EXPECT_GT(connections, 3);
  auto last = b.store.collections()[0].last_index;
  ASSERT_EQ(got.size(), last);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], i + 1);

  // The query-parameter form resumes the same way.
  auto tail = read_stream(b, "/api/v1/events/stream?last_event_id=" + enc(kDev + ":" + std::to_string(last - 2)),
                          {}, [](const StreamReader& r) { return r.frames.size() >= 2; });
  ASSERT_EQ(tail.frames.size(), 2u);
  EXPECT_EQ(data_index(tail.frames[0]), last - 1);
}

TEST(Stream, QuietStreamSendsHeartbeats) {
  Bench b(true, std::chrono::milliseconds{150});
  auto start = std::chrono::steady_clock::now();
  auto reader = read_stream(b, "/api/v1/events/stream", {}, [&](const StreamReader& r) {
    return std::count(r.comments.begin(), r.comments.end(), "heartbeat") >= 2;
  });
  EXPECT_TRUE(reader.frames.empty());
  EXPECT_EQ(std::count(reader.comments.begin(), reader.comments.end(), "heartbeat"), 2);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds{3});
}

TEST(Stream, MalformedFilterRejectedBeforeStreaming) {
  Bench b;
  auto r = get(b, "/api/v1/events/stream?type=BOGUS");
  expect_error(r, 400, "BadSpec");
  expect_error(get(b, "/api/v1/events/stream", {{"Last-Event-Id", "nonsense"}}), 400, "BadCursor");
  expect_error(get(b, "/api/v1/events/stream?limit=5"), 400, "BadSpec");
}

TEST(Server, StopEndsOpenStreams) {
  Bench b;
  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds{200});
    b.server->stop();
  });
  auto start = std::chrono::steady_clock::now();
  read_stream(b, "/api/v1/events/stream", {}, [](const StreamReader&) { return false; });
  stopper.join();
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds{4});
  EXPECT_FALSE(b.server->running());
}

TEST(Server, ConfigAndStatusMapping) {
  api::ApiConfig c;
  c.store_dir = "/tmp";
  c.port = 70000;
  EXPECT_THROW(api::validate(c), Error);
  c.port = 8080;
  api::validate(c);
  EXPECT_EQ(api::http_status(Errc::BadCursor), 400);
  EXPECT_EQ(api::http_status(Errc::SimDisabled), 403);
  EXPECT_EQ(api::http_status(Errc::UnknownCollection), 404);
  EXPECT_EQ(api::http_status(Errc::Conflict), 409);
  EXPECT_EQ(api::http_status(Errc::StoreUnavailable), 503);
  EXPECT_EQ(api::http_status(Errc::Io), 500);
  EXPECT_EQ(api::parse_stream_position("a:1,b:22"),
            (std::map<std::string, std::uint64_t>{{"a", 1}, {"b", 22}}));
  EXPECT_EQ(api::format_stream_position({{"a", 1}, {"b", 22}}), "a:1,b:22");
}
