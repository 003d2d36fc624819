// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "chaudit/workload.hpp"

using namespace chaudit;
using namespace chaudit::sim;

namespace {

std::size_t parse_error_line(std::string_view text) {
  try {
    parse_script(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ScriptParse) << e.what();
    return e.position().value_or(0);
  }
  ADD_FAILURE() << "parsed: " << text;
  return 0;
}

}  // namespace

TEST(Size, Suffixes) {
  EXPECT_EQ(parse_size("123"), 123u);
  EXPECT_EQ(parse_size("4K"), 4096u);
  EXPECT_EQ(parse_size("10M"), 10u * 1024 * 1024);
  EXPECT_EQ(parse_size("2g"), 2ull << 30);
  EXPECT_EQ(parse_size("1.2M"), 1258291u);  // floor(1.2 * 1048576)
  EXPECT_EQ(parse_size("0.5K"), 512u);
  for (auto bad : {"", "M", "1.M", ".5K", "1x", "-1", "1.2.3M", "99999999999999999999"}) {
    EXPECT_THROW(parse_size(bad), Error) << bad;
  }
}

TEST(Script, RepeatExpandsCounter) {
  auto s = parse_script(
      "ctx 500 500 10.0.0.1@tcp\n"
      "repeat 3 {\n"
      "  create /f{i} 0600\n"
      "  repeat 2 {\n"
      "    write /f{i:03} 1K\n"
      "  }\n"
      "}\n");
  EXPECT_EQ(s.op_count(), 9u);
  ASSERT_EQ(s.steps.size(), 10u);
  auto ctx = std::get<ClientCtx>(s.steps[0].action);
  EXPECT_EQ(ctx.uid, 500u);
  EXPECT_EQ(to_string(ctx.nid), "10.0.0.1@tcp");
  auto c = std::get<op::Create>(std::get<FsOp>(s.steps[4].action));
  EXPECT_EQ(c.path, "/f1");
  EXPECT_EQ(c.mode, 0600);
  EXPECT_EQ(s.steps[4].line, 3u);
  // Inner repeat rebinds {i} to its own counter.
  auto w = std::get<op::Write>(std::get<FsOp>(s.steps[6].action));
  EXPECT_EQ(w.path, "/f001");
  EXPECT_EQ(w.bytes, 1024u);
  EXPECT_EQ(s.steps[6].line, 5u);
}

TEST(Script, CommentsAndBlankLines) {
  auto s = parse_script("# header\n\n  mkdir /d 0755  # trailing\n\t\ncreate /d/x 0644\n");
  ASSERT_EQ(s.steps.size(), 2u);
  EXPECT_EQ(s.steps[0].line, 3u);
  EXPECT_EQ(s.steps[1].line, 5u);
}

TEST(Script, ErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line("mkdir /a 0755\nfrobnicate /a\n"), 2u);
  EXPECT_EQ(parse_error_line("mkdir /a\ncreate\n"), 2u);
  EXPECT_EQ(parse_error_line("\n\nrepeat x {\n}\n"), 3u);
  EXPECT_EQ(parse_error_line("repeat 2 {\n create /a{i} 0644\n"), 1u);
  EXPECT_EQ(parse_error_line("create /a 0644\n}\n"), 2u);
  EXPECT_EQ(parse_error_line("touch /a btime\n"), 1u);
  EXPECT_EQ(parse_error_line("create /a 0999\n"), 1u);
  EXPECT_EQ(parse_error_line("write /a 10Q\n"), 1u);
  EXPECT_EQ(parse_error_line("ctx 1 1 not-a-nid\n"), 1u);
  EXPECT_EQ(parse_error_line("open /a rwz\n"), 1u);
  // Oversized expansions are rejected up front, at the outermost repeat.
  EXPECT_EQ(parse_error_line("close /a\nrepeat 100000 {\nrepeat 100001 {\nclose /a\n}\n}\n"), 2u);
  EXPECT_EQ(parse_script("repeat 10 {\n}\n").op_count(), 0u);
}

TEST(Builtins, AllParseAndRun) {
  auto names = builtin_script_names();
  EXPECT_EQ(names, (std::vector<std::string>{"create100.wl", "denied-opens.wl", "lifecycle.wl"}));
  EXPECT_FALSE(builtin_script("nope.wl"));
  for (const auto& name : names) {
    SimFs fs;
    RunOptions opts;
    opts.keep_going = true;
    auto report = run_workload(fs, parse_script(*builtin_script(name)), opts);
    if (name == "denied-opens.wl") {
      ASSERT_EQ(report.failures.size(), 3u);
      for (const auto& f : report.failures) {
        EXPECT_EQ(f.code, Errc::PermissionDenied);
        EXPECT_EQ(f.line, 12u);
      }
      EXPECT_EQ(report.failures[0].op_number, 6u);
    } else {
      EXPECT_TRUE(report.failures.empty()) << name;
    }
  }
}

TEST(Run, StopsAtFirstFailureUnlessKeepGoing) {
  SimFs fs;
  auto script = parse_script("create /a 0644\ncreate /a 0644\ncreate /b 0644\n");
  try {
    run_workload(fs, script);
    FAIL();
  } catch (const WorkloadError& e) {
    EXPECT_EQ(e.code(), Errc::Exists);
    EXPECT_EQ(e.op_number(), 2u);
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_FALSE(fs.stat("/b"));
  SimFs fs2;
  RunOptions opts;
  opts.keep_going = true;
  auto r = run_workload(fs2, script, opts);
  EXPECT_EQ(r.ops, 3u);
  EXPECT_EQ(r.failures.size(), 1u);
  EXPECT_TRUE(fs2.stat("/b"));
}
