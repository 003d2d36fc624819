// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <httplib.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>

#include "chaudit/api.hpp"
#include "support/corpus.hpp"

#ifndef CHAUDIT_BIN
#error "CHAUDIT_BIN must name the built chaudit binary"
#endif

using namespace chaudit;
using nlohmann::json;
using testsupport::TempDir;

namespace {

struct Run {
  int exit = -1;
  std::string out;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Run chaudit_run(const std::string& args) {
  std::string cmd = std::string(CHAUDIT_BIN) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int status = ::pclose(p);
  r.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string dir_arg(const std::filesystem::path& p) { return "--data-dir " + quote(p.string()); }

// Serves `dir` read-only and returns the body of GET `path`.
std::string api_body(const std::filesystem::path& dir, const std::string& path) {
  store::AuditStore st(dir, store::StoreOptions{false, true});
  api::ApiConfig cfg;
  cfg.port = 0;
  cfg.store_dir = dir;
  cfg.refresh_interval = std::chrono::milliseconds{0};
  api::Server server(cfg, st);
  int port = server.start();
  httplib::Client c("127.0.0.1", port);
  auto res = c.Get(path);
  return res ? res->body : std::string{};
}

}  // namespace

TEST(Demo, ReproducesTheExperiment) {
  TempDir tmp;
  auto dir = tmp.path() / "run";
  auto start = std::chrono::steady_clock::now();
  auto r = chaudit_run(dir_arg(dir) + " --format json demo");
  auto elapsed = std::chrono::steady_clock::now() - start;
  ASSERT_EQ(r.exit, 0) << r.out;
  EXPECT_LT(elapsed, std::chrono::seconds{10});
  auto j = json::parse(r.out);
  EXPECT_EQ(j["counts"]["counts"], (json{{"CLOSE", 100}, {"CREAT", 100}, {"MARK", 2},
                                         {"MTIME", 100}, {"OPEN", 100}}));
  EXPECT_EQ(j["first_index"], 1);
  EXPECT_EQ(j["last_index"], 402);
  EXPECT_EQ(j["gapless"], true);
  EXPECT_EQ(j["chain"]["ok"], true);
  EXPECT_EQ(j["ok"], true);

  // Deterministic: a second fresh run prints the same bytes.
  auto again = chaudit_run(dir_arg(tmp.path() / "run2") + " --format json demo");
  EXPECT_EQ(again.out, r.out);

  // Refuses to touch a populated directory.
  EXPECT_EQ(chaudit_run(dir_arg(dir) + " demo").exit, 2);
}

TEST(Demo, TamperingFailsWithIndex) {
  TempDir tmp;
  auto r = chaudit_run(dir_arg(tmp.path() / "t") + " --format json demo --tamper-index 57");
  EXPECT_EQ(r.exit, 1);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["chain"]["ok"], false);
  EXPECT_EQ(j["chain"]["first_bad_index"], 57);
  auto table = chaudit_run(dir_arg(tmp.path() / "t2") + " demo --tamper-index 300");
  EXPECT_EQ(table.exit, 1);
  EXPECT_NE(table.out.find("300"), std::string::npos) << table.out;
}

TEST(Cli, JsonOutputsAreFieldIdenticalToApi) {
  TempDir tmp;
  auto dir = tmp.path() / "d";
  ASSERT_EQ(chaudit_run(dir_arg(dir) + " demo").exit, 0);
  auto same = [&](const std::string& cli_args, const std::string& api_path) {
    auto r = chaudit_run(dir_arg(dir) + " --format json " + cli_args);
    EXPECT_EQ(r.exit, 0) << cli_args;
    EXPECT_EQ(json::parse(r.out), json::parse(api_body(dir, api_path))) << cli_args;
  };
  same("counts --by uid", "/api/v1/stats/counts?by=uid");
  same("counts --by type --type OPEN,CLOSE", "/api/v1/stats/counts?by=type&type=OPEN,CLOSE");
  same("counts --by nid", "/api/v1/stats/counts?by=nid");
  same("query --type CREAT --limit 7", "/api/v1/events?type=CREAT&limit=7");
  same("query --uid 0 --name-contains file01 --from 2024-01-01T00:00:00Z",
       "/api/v1/events?uid=0&name_contains=file01&from=2024-01-01T00:00:00Z");
  same("trail '[0x200000401:0x2:0x0]'", "/api/v1/trail/0x200000401:0x2:0x0");
  same("verify --device lustre-MDT0000", "/api/v1/chain/verify?device=lustre-MDT0000");

  auto nopen = json::parse(chaudit_run(dir_arg(dir) + " --format json query --type NOPEN").out);
  EXPECT_TRUE(nopen["events"].empty());
  EXPECT_EQ(nopen["total"], 0);

  auto counts = json::parse(chaudit_run(dir_arg(dir) + " --format json counts --by uid").out);
  EXPECT_EQ(counts["counts"], (json{{"-", 2}, {"0", 400}}));  // MARKs carry no u=
}

TEST(Cli, DfMatchesSimulator) {
  TempDir tmp;
  auto text = chaudit_run(dir_arg(tmp.path()) + " df");
  EXPECT_EQ(text.exit, 0);
  sim::SimFs fresh;
  EXPECT_EQ(text.out, sim::render_df(fresh.df()));
  auto j = chaudit_run(dir_arg(tmp.path()) + " --format json df");
  EXPECT_EQ(json::parse(j.out), json::parse(api::df_view(fresh.df()).dump()));
  auto one = chaudit_run(dir_arg(tmp.path()) + " df lustre-OST0004");
  EXPECT_EQ(one.out, sim::render_df(fresh.df({"lustre-OST0004"})));
  EXPECT_EQ(chaudit_run(dir_arg(tmp.path()) + " df lustre-OST00ff").exit, 1);
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  auto dir = tmp.path() / "d";
  ASSERT_EQ(chaudit_run(dir_arg(dir) + " demo").exit, 0);
  EXPECT_EQ(chaudit_run("").exit, 2);
  EXPECT_EQ(chaudit_run("frobnicate").exit, 2);
  EXPECT_EQ(chaudit_run(dir_arg(dir) + " --format yaml query").exit, 2);
  EXPECT_EQ(chaudit_run(dir_arg(dir) + " query --limit 0").exit, 2);
  EXPECT_EQ(chaudit_run(dir_arg(dir) + " query --cursor nonsense").exit, 2);
  EXPECT_EQ(chaudit_run(dir_arg(dir) + " counts --by colour").exit, 2);
  EXPECT_EQ(chaudit_run(dir_arg(dir) + " verify --device lustre-MDT0009").exit, 1);
  EXPECT_EQ(chaudit_run(dir_arg(dir) + " verify --device lustre-MDT0000").exit, 0);
}

TEST(Cli, CollectorRunReportsCycles) {
  TempDir tmp;
  auto dir = tmp.path() / "c";
  auto r = chaudit_run(dir_arg(dir) +
                       " --format json collector run --mask ALL --workload denied-opens.wl --cycles 2 "
                       "--interval 0.01");
  ASSERT_EQ(r.exit, 0) << r.out;
  std::vector<json> cycles;
  std::size_t at = 0;
  while (at < r.out.size()) {
    auto nl = r.out.find('\n', at);
    if (nl == std::string::npos) nl = r.out.size();
    if (nl > at) cycles.push_back(json::parse(r.out.substr(at, nl - at)));
    at = nl + 1;
  }
  ASSERT_EQ(cycles.size(), 2u);
  EXPECT_GT(cycles[0]["ingested"].get<int>(), 0);
  EXPECT_EQ(cycles[1]["read"], 0);
  auto denied = json::parse(api_body(dir, "/api/v1/anomalies/denied-opens"));
  ASSERT_EQ(denied["rows"].size(), 1u);
  EXPECT_EQ(denied["rows"][0]["uid"], 501);
  EXPECT_EQ(denied["rows"][0]["count"], 3);
}
