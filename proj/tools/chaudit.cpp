// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

// chaudit: simulator, collector, store queries and API in one binary.
//
// Exit status: 0 success, 1 operational error, 2 usage error.

#include <signal.h>

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "chaudit/api.hpp"
#include "chaudit/collector.hpp"
#include "chaudit/error.hpp"
#include "chaudit/event_json.hpp"
#include "chaudit/simfs.hpp"
#include "chaudit/store.hpp"
#include "chaudit/workload.hpp"

namespace fs = std::filesystem;
using namespace chaudit;
using nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string data_dir = "chaudit-data";
  std::string format = "table";
  bool json() const { return format == "json"; }
};

struct Filters {
  std::string device;
  std::vector<std::string> types;
  std::optional<std::uint32_t> uid;
  std::optional<std::uint32_t> gid;
  std::string fid;
  std::string nid;
  std::string name_contains;
  std::string from;
  std::string to;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--device", device, "Collection (device) name");
    cmd->add_option("--type", types, "Record type name; repeatable or comma separated")
        ->delimiter(',');
    cmd->add_option("--uid", uid, "Acting user id");
    cmd->add_option("--gid", gid, "Acting group id");
    cmd->add_option("--fid", fid, "Target fid");
    cmd->add_option("--nid", nid, "Client NID, e.g. 10.128.11.159@tcp");
    cmd->add_option("--name-contains", name_contains, "Substring of the entry name");
    cmd->add_option("--from", from, "Earliest timestamp (RFC 3339, inclusive)");
    cmd->add_option("--to", to, "Latest timestamp (RFC 3339, inclusive)");
  }

  // Same parameter names and parser as the HTTP API.
  std::multimap<std::string, std::string> params() const {
    std::multimap<std::string, std::string> p;
    if (!device.empty()) p.emplace("device", device);
    for (const auto& t : types) p.emplace("type", t);
    if (uid) p.emplace("uid", std::to_string(*uid));
    if (gid) p.emplace("gid", std::to_string(*gid));
    if (!fid.empty()) p.emplace("fid", fid);
    if (!nid.empty()) p.emplace("nid", nid);
    if (!name_contains.empty()) p.emplace("name_contains", name_contains);
    if (!from.empty()) p.emplace("from", from);
    if (!to.empty()) p.emplace("to", to);
    return p;
  }
};

void print_json(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

std::string workload_text(const std::string& name) {
  if (fs::is_regular_file(name)) {
    std::ifstream in(name);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  if (auto builtin = sim::builtin_script(name)) return std::string(*builtin);
  throw Error(Errc::NotFound, fmt::format("no workload file or built-in script '{}'", name));
}

sim::RunReport run_named_workload(sim::SimFs& simfs, const std::string& name, bool keep_going) {
  sim::RunOptions options;
  options.keep_going = keep_going;
  return sim::run_workload(simfs, sim::parse_script(workload_text(name)), options);
}

std::chrono::milliseconds seconds_to_ms(double secs) {
  if (!(secs > 0)) throw UsageError("interval must be positive");
  auto ms = std::chrono::milliseconds{static_cast<std::int64_t>(secs * 1000)};
  return std::max(ms, std::chrono::milliseconds{1});
}

// Blocks SIGINT/SIGTERM in this and all later threads; wait_for_signal()
// then receives them synchronously.
sigset_t block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int wait_for_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

std::string cell(const std::optional<std::string>& v) { return v ? *v : "-"; }

void print_events_table(const std::vector<AuditEvent>& events) {
  fmt::print("{:<16} {:>8} {:<6} {:<30} {:>11} {:<20} {:<26} {}\n", "DEVICE", "INDEX", "TYPE",
             "TIME (UTC)", "UID:GID", "NID", "FID", "NAME");
  for (const auto& e : events) {
    const auto& r = e.record;
    fmt::print("{:<16} {:>8} {:<6} {:<30} {:>11} {:<20} {:<26} {}\n", e.device, r.index,
               record_type(r.type).name, format_rfc3339(r.timestamp()),
               r.user ? fmt::format("{}:{}", r.user->uid, r.user->gid) : "-",
               r.nid ? to_string(*r.nid) : "-", to_string(r.target), cell(r.name));
  }
}

// --- subcommands -------------------------------------------------------------

struct DemoArgs {
  std::string workload = "create100.wl";
  std::optional<std::uint64_t> tamper_index;
};

// Flips one byte in the persisted line of `index`.
void tamper(const fs::path& events_file, std::uint64_t index) {
  std::fstream f(events_file, std::ios::in | std::ios::out | std::ios::binary);
  std::string line;
  std::streamoff offset = 0;
  auto needle = fmt::format("\"index\":{},", index);
  while (std::getline(f, line)) {
    if (line.find(needle) != std::string::npos) {
      auto pos = line.find("\"ts_utc\"");
      f.clear();
      f.seekp(offset + static_cast<std::streamoff>(pos + 1));
      f.put(static_cast<char>(line[pos + 1] ^ 0x20));
      return;
    }
    offset += static_cast<std::streamoff>(line.size() + 1);
  }
  throw Error(Errc::NotFound, fmt::format("no persisted event with index {}", index));
}

int cmd_demo(const Globals& g, const DemoArgs& args) {
  fs::path dir = g.data_dir;
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    throw UsageError(fmt::format("demo needs an empty or absent data dir; {} is not empty",
                                 dir.string()));
  }
  auto started = std::chrono::steady_clock::now();
  sim::SimFs simfs;
  store::AuditStore store(dir);
  collector::SimDevice device(simfs, simfs.mdt_name());
  collector::CollectorConfig cfg;
  cfg.device = simfs.mdt_name();
  cfg.store_dir = dir;
  collector::Collector col(cfg, device, store, [&simfs] { return simfs.now(); });
  simfs.set_mask(simfs.mdt_name(), "ALL");
  run_named_workload(simfs, args.workload, false);

  std::size_t cycles = 0;
  while (col.run_cycle().read > 0) ++cycles;
  if (args.tamper_index) tamper(dir / cfg.device / "events.jsonl", *args.tamper_index);

  store::QuerySpec all;
  all.device = cfg.device;
  auto counts = store.counts_by(store::Dimension::Type, all);
  auto verify = store.verify_chain(cfg.device);

  // Indices must be exactly 1..last with nothing missing.
  std::uint64_t expect = 1;
  bool gapless = true;
  for (const auto& e : store.events_after(cfg.device, 0, SIZE_MAX)) {
    if (e.record.index != expect++) gapless = false;
  }
  std::uint64_t last = simfs.last_index(cfg.device);
  gapless = gapless && expect - 1 == last;

  std::map<std::string, std::size_t> want;
  if (args.workload == "create100.wl") {
    want = {{"CLOSE", 100}, {"CREAT", 100}, {"MARK", 2}, {"MTIME", 100}, {"OPEN", 100}};
  }
  bool counts_ok = want.empty() || counts == want;
  bool ok = counts_ok && gapless && verify.ok;
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started);

  if (g.json()) {
    ordered_json out;
    out["device"] = cfg.device;
    out["workload"] = args.workload;
    out["counts"] = api::counts_view(store::Dimension::Type, counts);
    out["first_index"] = last ? 1 : 0;
    out["last_index"] = last;
    out["gapless"] = gapless;
    out["chain"] = api::verify_view(cfg.device, verify);
    out["ok"] = ok;
    print_json(out);
  } else {
    fmt::print("device     {}\nworkload   {}\ncycles     {}\n", cfg.device, args.workload, cycles);
    fmt::print("indices    1..{} ({})\n", last, gapless ? "gapless" : "GAPS");
    for (const auto& [type, n] : counts) fmt::print("  {:<6} {:>5}\n", type, n);
    if (verify.ok) {
      fmt::print("chain      ok ({} events, head {})\n", verify.checked, to_hex(verify.head));
    } else {
      fmt::print("chain      BROKEN, first_bad_index={}\n", *verify.first_bad_index);
    }
    fmt::print("elapsed    {:.2f}s\n{}\n", elapsed.count(), ok ? "PASS" : "FAIL");
  }
  if (!verify.ok) {
    std::cerr << fmt::format("chaudit: chain verification failed at index {}\n",
                             *verify.first_bad_index);
  }
  return ok ? 0 : 1;
}

struct CollectorArgs {
  std::string device = "lustre-MDT0000";
  std::optional<double> interval;
  std::size_t batch_max = collector::kDefaultBatchMax;
  std::string userid;
  std::string mask = "ALL";
  std::vector<std::string> workloads;
  std::optional<std::size_t> cycles;
};

collector::CollectorConfig collector_config(const Globals& g, const CollectorArgs& a) {
  collector::CollectorConfig cfg;
  cfg.store_dir = g.data_dir;
  cfg = collector::apply_env(cfg);
  cfg.store_dir = g.data_dir;
  cfg.device = a.device;
  cfg.batch_max = a.batch_max;
  if (a.interval) cfg.poll_interval = seconds_to_ms(*a.interval);
  if (!a.userid.empty()) cfg.userid = a.userid;
  return cfg;
}

void print_cycle(const Globals& g, std::size_t n, const collector::CycleReport& r) {
  if (g.json()) {
    ordered_json j;
    j["cycle"] = n;
    j["read"] = r.read;
    j["ingested"] = r.ingested;
    j["duplicates"] = r.duplicates;
    j["quarantined"] = r.quarantined;
    j["cleared_to"] = r.cleared_to;
    std::cout << j.dump() << std::endl;
  } else {
    fmt::print("cycle {}: read={} ingested={} duplicates={} quarantined={} cleared_to={}\n", n,
               r.read, r.ingested, r.duplicates, r.quarantined, r.cleared_to);
    std::fflush(stdout);
  }
}

int cmd_collector_run(const Globals& g, const CollectorArgs& a) {
  auto cfg = collector_config(g, a);
  collector::validate(cfg);
  sim::SimFs simfs;
  if (a.device != simfs.mdt_name()) {
    throw Error(Errc::UnknownDevice, fmt::format("simulated device is {}, not {}",
                                                 simfs.mdt_name(), a.device));
  }
  store::AuditStore store(cfg.store_dir);
  collector::SimDevice device(simfs, cfg.device);
  collector::Collector col(cfg, device, store);
  simfs.set_mask(cfg.device, a.mask);
  for (const auto& w : a.workloads) run_named_workload(simfs, w, true);

  std::size_t n = 0;
  if (a.cycles) {
    for (std::size_t i = 0; i < *a.cycles; ++i) {
      if (i > 0) std::this_thread::sleep_for(cfg.poll_interval);
      print_cycle(g, ++n, col.run_cycle());
    }
    return 0;
  }
  auto signals = block_signals();
  std::exception_ptr failure;
  std::jthread loop([&](std::stop_token stop) {
    try {
      col.run_loop(stop, collector::default_sleep,
                   [&](const collector::CycleReport& r) { print_cycle(g, ++n, r); });
    } catch (...) {
      failure = std::current_exception();
      kill(getpid(), SIGTERM);
    }
  });
  wait_for_signal(signals);
  loop.request_stop();
  loop.join();
  if (failure) std::rethrow_exception(failure);
  return 0;
}

struct QueryArgs {
  Filters filters;
  std::size_t limit = store::kDefaultLimit;
  std::string cursor;
};

int cmd_query(const Globals& g, const QueryArgs& a) {
  auto params = a.filters.params();
  params.emplace("limit", std::to_string(a.limit));
  if (!a.cursor.empty()) params.emplace("cursor", a.cursor);
  auto spec = api::parse_query(params);
  store::AuditStore store(g.data_dir, {.sync = true, .read_only = true});
  auto page = store.query(spec);
  if (g.json()) {
    print_json(api::page_view(page));
  } else if (page.events.empty()) {
    fmt::print("no matching events\n");
  } else {
    print_events_table(page.events);
    fmt::print("{} of {} events", page.events.size(), page.total);
    if (page.next_cursor) fmt::print("; next page: --cursor {}", *page.next_cursor);
    fmt::print("\n");
  }
  return 0;
}

int cmd_trail(const Globals& g, const std::string& fid_text) {
  auto fid = api::parse_fid_param(fid_text);
  store::AuditStore store(g.data_dir, {.sync = true, .read_only = true});
  auto events = store.trail(fid);
  if (g.json()) {
    print_json(api::trail_view(fid, events));
  } else if (events.empty()) {
    fmt::print("no events for {}\n", to_string(fid));
  } else {
    print_events_table(events);
  }
  return 0;
}

int cmd_counts(const Globals& g, const std::string& by, const Filters& filters) {
  auto dim = store::parse_dimension(by);
  auto spec = api::parse_query(filters.params());
  store::AuditStore store(g.data_dir, {.sync = true, .read_only = true});
  auto counts = store.counts_by(dim, spec);
  if (g.json()) {
    print_json(api::counts_view(dim, counts));
  } else {
    fmt::print("{:<24} {:>8}\n", store::to_string(dim), "count");
    std::size_t total = 0;
    for (const auto& [k, v] : counts) {
      fmt::print("{:<24} {:>8}\n", k, v);
      total += v;
    }
    fmt::print("{:<24} {:>8}\n", "total", total);
  }
  return 0;
}

int cmd_verify(const Globals& g, const std::string& device) {
  store::AuditStore store(g.data_dir, {.sync = true, .read_only = true});
  auto result = store.verify_chain(device);
  if (g.json()) {
    print_json(api::verify_view(device, result));
  } else if (result.ok) {
    fmt::print("{}: ok, {} events, head {}\n", device, result.checked, to_hex(result.head));
  } else {
    fmt::print("{}: TAMPERED, first_bad_index={}\n", device, *result.first_bad_index);
  }
  return result.ok ? 0 : 1;
}

struct DfArgs {
  std::vector<std::string> workloads;
  std::vector<std::string> targets;
};

int cmd_df(const Globals& g, const DfArgs& a) {
  sim::SimFs simfs;
  for (const auto& w : a.workloads) run_named_workload(simfs, w, true);
  auto report = simfs.df(a.targets);
  if (g.json()) {
    print_json(api::df_view(report));
  } else {
    std::cout << sim::render_df(report);
  }
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  double heartbeat = 15;
};

api::ApiConfig api_config(const Globals& g, const ServeArgs& a) {
  api::ApiConfig cfg;
  cfg.host = a.host;
  cfg.port = a.port;
  cfg.store_dir = g.data_dir;
  if (!a.static_dir.empty()) cfg.static_dir = a.static_dir;
  cfg.heartbeat = seconds_to_ms(a.heartbeat);
  return cfg;
}

int cmd_serve_api(const Globals& g, const ServeArgs& a) {
  auto signals = block_signals();
  store::AuditStore store(g.data_dir, {.sync = true, .read_only = true});
  api::Server server(api_config(g, a), store);
  int port = server.start();
  fmt::print(stderr, "chaudit: serving {} on http://{}:{}{}\n", g.data_dir, a.host, port,
             api::kPrefix);
  wait_for_signal(signals);
  server.stop();
  return 0;
}

int cmd_sim_serve(const Globals& g, const ServeArgs& a, const CollectorArgs& c) {
  auto signals = block_signals();
  auto cfg = collector_config(g, c);
  collector::validate(cfg);
  sim::SimFs simfs;
  store::AuditStore store(cfg.store_dir);
  collector::SimDevice device(simfs, simfs.mdt_name());
  cfg.device = simfs.mdt_name();
  collector::Collector col(cfg, device, store);
  simfs.set_mask(cfg.device, c.mask);
  for (const auto& w : c.workloads) run_named_workload(simfs, w, true);

  auto acfg = api_config(g, a);
  acfg.refresh_interval = std::chrono::milliseconds::zero();
  api::Server server(acfg, store, &simfs);
  int port = server.start();
  fmt::print(stderr, "chaudit: simulator {} polled every {} ms; API on http://{}:{}{}\n",
             cfg.device, cfg.poll_interval.count(), a.host, port, api::kPrefix);

  std::exception_ptr failure;
  std::jthread loop([&](std::stop_token stop) {
    try {
      col.run_loop(stop);
    } catch (...) {
      failure = std::current_exception();
      kill(getpid(), SIGTERM);
    }
  });
  wait_for_signal(signals);
  loop.request_stop();
  loop.join();
  server.stop();
  if (failure) std::rethrow_exception(failure);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Changelog audit pipeline: simulator, collector, tamper-evident store, API"};
  app.require_subcommand(1);
  // Global flags may also follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--data-dir", g.data_dir, "Store directory")
      ->envname("AUDIT_DATA_DIR")
      ->capture_default_str();
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();

  DemoArgs demo;
  auto* demo_cmd = app.add_subcommand("demo", "Reproduce the 100-file experiment end to end");
  demo_cmd->add_option("--workload", demo.workload, "Workload script (built-in name or file)")
      ->capture_default_str();
  demo_cmd->add_option("--tamper-index", demo.tamper_index,
                       "Corrupt the stored event with this index before verifying");

  CollectorArgs col;
  auto add_collector_opts = [&](CLI::App* cmd) {
    cmd->add_option("--interval", col.interval, "Poll interval in seconds (default 5)");
    cmd->add_option("--batch-max", col.batch_max, "Records per cycle")->capture_default_str();
    cmd->add_option("--userid", col.userid, "Changelog user to resume as");
    cmd->add_option("--mask", col.mask, "Changelog mask: ALL or type names")
        ->capture_default_str();
    cmd->add_option("--workload", col.workloads, "Run this workload on the simulator first");
  };

  ServeArgs serve;
  auto add_serve_opts = [&](CLI::App* cmd) {
    cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
    cmd->add_option("--port", serve.port, "Bind port")->check(CLI::Range(1, 65535))
        ->capture_default_str();
    cmd->add_option("--static-dir", serve.static_dir, "Serve a dashboard bundle from here");
    cmd->add_option("--heartbeat", serve.heartbeat, "Event stream heartbeat in seconds")
        ->capture_default_str();
  };

  auto* sim_cmd = app.add_subcommand("sim", "Simulated file system");
  sim_cmd->require_subcommand(1);
  auto* sim_serve = sim_cmd->add_subcommand(
      "serve", "Run simulator, collector and API (with workload control) in one process");
  add_serve_opts(sim_serve);
  add_collector_opts(sim_serve);

  auto* col_cmd = app.add_subcommand("collector", "Changelog collector");
  col_cmd->require_subcommand(1);
  auto* col_run = col_cmd->add_subcommand("run", "Poll an in-process simulated MDT into the store");
  col_run->add_option("--device", col.device, "Device to poll")->capture_default_str();
  add_collector_opts(col_run);
  col_run->add_option("--cycles", col.cycles, "Stop after this many cycles");

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "Search stored events");
  query.filters.add_to(query_cmd);
  query_cmd->add_option("--limit", query.limit, "Page size (1..10000)")->capture_default_str();
  query_cmd->add_option("--cursor", query.cursor, "Continue after a previous page");

  std::string trail_fid;
  auto* trail_cmd = app.add_subcommand("trail", "Every event naming a fid as target or parent");
  trail_cmd->add_option("fid", trail_fid, "Fid, e.g. [0x200000401:0x1:0x0]")->required();

  std::string counts_by = "type";
  Filters counts_filters;
  auto* counts_cmd = app.add_subcommand("counts", "Event counts grouped by a dimension");
  counts_cmd->add_option("--by", counts_by, "type, uid or nid")
      ->check(CLI::IsMember({"type", "uid", "nid"}))
      ->capture_default_str();
  counts_filters.add_to(counts_cmd);

  std::string verify_device = "lustre-MDT0000";
  auto* verify_cmd = app.add_subcommand("verify", "Recompute a collection's hash chain");
  verify_cmd->add_option("--device", verify_device, "Collection")->capture_default_str();

  DfArgs df;
  auto* df_cmd = app.add_subcommand("df", "Capacity report of a fresh simulated file system");
  df_cmd->add_option("--workload", df.workloads, "Run this workload first");
  df_cmd->add_option("target", df.targets, "Restrict to these targets");

  auto* serve_api = app.add_subcommand("serve-api", "Serve the query API over a store");
  add_serve_opts(serve_api);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*demo_cmd) return cmd_demo(g, demo);
    if (*sim_serve) return cmd_sim_serve(g, serve, col);
    if (*col_run) return cmd_collector_run(g, col);
    if (*query_cmd) return cmd_query(g, query);
    if (*trail_cmd) return cmd_trail(g, trail_fid);
    if (*counts_cmd) return cmd_counts(g, counts_by, counts_filters);
    if (*verify_cmd) return cmd_verify(g, verify_device);
    if (*df_cmd) return cmd_df(g, df);
    if (*serve_api) return cmd_serve_api(g, serve);
  } catch (const UsageError& e) {
    std::cerr << "chaudit: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "chaudit: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return e.code() == Errc::BadSpec || e.code() == Errc::BadCursor ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "chaudit: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
