// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "chaudit/workload.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <limits>

namespace chaudit::sim {

namespace {

constexpr std::string_view kCreate100 = R"(# 100 files of 10 MiB each: create, open for write, write, close.
ctx 0 0 10.128.11.159@tcp
repeat 100 {
  create /file{i:03} 0644
  open /file{i:03} -w-
  write /file{i:03} 10M
  close /file{i:03}
}
)";

constexpr std::string_view kDeniedOpens = R"(# uid 501 repeatedly tries to open a file private to uid 500.
# Run with keep-going: every denied open fails the operation.
ctx 0 0 192.168.1.115@tcp0
mkdir /proj 0777
ctx 500 500 10.128.11.159@tcp
create /proj/secret 0600
open /proj/secret -w-
write /proj/secret 1M
close /proj/secret
ctx 501 501 10.128.11.160@tcp
repeat 3 {
  open /proj/secret -w-
}
)";

constexpr std::string_view kLifecycle = R"(# One file from creation to removal.
ctx 0 0 192.168.1.115@tcp0
create /report.txt 0644
chmod /report.txt 0600
rename /report.txt /report-final.txt
unlink /report-final.txt
)";

struct Builtin {
  std::string_view name;
  std::string_view text;
};

constexpr std::array<Builtin, 3> kBuiltins{{
    {"create100.wl", kCreate100},
    {"denied-opens.wl", kDeniedOpens},
    {"lifecycle.wl", kLifecycle},
}};

struct Line {
  std::size_t number = 0;
  std::vector<std::string> tokens;
};

// Block structure before `{i}` expansion.
struct Node {
  Line line;
  std::size_t repeat = 0;
  std::vector<Node> body;
  bool is_repeat = false;
};

[[noreturn]] void parse_error(std::size_t line, const std::string& reason) {
  throw Error(Errc::ScriptParse, fmt::format("line {}: {}", line, reason), line);
}

std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> lines;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    ++number;
    Line line{number, {}};
    std::size_t i = 0;
    while (i < raw.size()) {
      while (i < raw.size() && (raw[i] == ' ' || raw[i] == '\t' || raw[i] == '\r')) ++i;
      if (i >= raw.size() || raw[i] == '#') break;
      std::size_t j = i;
      while (j < raw.size() && raw[j] != ' ' && raw[j] != '\t' && raw[j] != '\r') ++j;
      line.tokens.emplace_back(raw.substr(i, j - i));
      i = j;
    }
    if (!line.tokens.empty()) lines.push_back(std::move(line));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return lines;
}

std::uint64_t parse_count(const std::string& text, std::size_t line, const char* what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    parse_error(line, fmt::format("invalid {} '{}'", what, text));
  }
  return v;
}

std::vector<Node> build(const std::vector<Line>& lines, std::size_t& at, bool nested,
                        std::size_t open_line) {
  std::vector<Node> nodes;
  while (at < lines.size()) {
    const Line& l = lines[at++];
    if (l.tokens.size() == 1 && l.tokens[0] == "}") {
      if (!nested) parse_error(l.number, "'}' without matching repeat");
      return nodes;
    }
    Node n;
    n.line = l;
    if (l.tokens[0] == "repeat") {
      if (l.tokens.size() != 3 || l.tokens[2] != "{") {
        parse_error(l.number, "expected 'repeat <n> {'");
      }
      n.is_repeat = true;
      n.repeat = parse_count(l.tokens[1], l.number, "repeat count");
      n.body = build(lines, at, true, l.number);
    }
    nodes.push_back(std::move(n));
  }
  if (nested) parse_error(open_line, "repeat block is not closed");
  return nodes;
}

std::string substitute(const std::string& token, std::optional<std::uint64_t> counter,
                       std::size_t line) {
  std::string out;
  std::size_t i = 0;
  while (i < token.size()) {
    if (token.compare(i, 2, "{i") != 0) {
      out.push_back(token[i++]);
      continue;
    }
    std::size_t close = token.find('}', i);
    if (close == std::string::npos) parse_error(line, fmt::format("unterminated '{{' in '{}'", token));
    if (!counter) parse_error(line, "'{i}' used outside a repeat block");
    std::string spec = token.substr(i + 2, close - i - 2);
    if (spec.empty()) {
      out += std::to_string(*counter);
    } else if (spec.size() >= 2 && spec[0] == ':') {
      auto width = parse_count(spec.substr(spec[1] == '0' ? 2 : 1), line, "pad width");
      if (width > 20) parse_error(line, "pad width too large");
      out += fmt::format("{:0{}}", *counter, width);
    } else {
      parse_error(line, fmt::format("bad substitution in '{}'", token));
    }
    i = close + 1;
  }
  return out;
}

std::uint16_t parse_mode(const std::string& text, std::size_t line) {
  if (text.empty() || text.size() > 5) parse_error(line, fmt::format("invalid mode '{}'", text));
  unsigned v = 0;
  for (char c : text) {
    if (c < '0' || c > '7') parse_error(line, fmt::format("invalid octal mode '{}'", text));
    v = v * 8 + static_cast<unsigned>(c - '0');
  }
  if (v > 07777) parse_error(line, fmt::format("mode '{}' out of range", text));
  return static_cast<std::uint16_t>(v);
}

std::uint32_t parse_id(const std::string& text, std::size_t line, const char* what) {
  auto v = parse_count(text, line, what);
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    parse_error(line, fmt::format("{} '{}' out of range", what, text));
  }
  return static_cast<std::uint32_t>(v);
}

std::uint64_t size_arg(const std::string& text, std::size_t line) {
  try {
    return parse_size(text);
  } catch (const Error& e) {
    parse_error(line, e.what());
  }
}

std::variant<ClientCtx, FsOp> parse_action(const std::vector<std::string>& t, std::size_t line) {
  const std::string& verb = t[0];
  auto args = [&](std::size_t min, std::size_t max) {
    if (t.size() - 1 < min || t.size() - 1 > max) {
      parse_error(line, fmt::format("'{}' takes {} argument(s), got {}", verb,
                                    min == max ? std::to_string(min)
                                               : fmt::format("{}-{}", min, max),
                                    t.size() - 1));
    }
  };
  auto opt_mode = [&](std::uint16_t fallback) {
    return t.size() > 2 ? parse_mode(t[2], line) : fallback;
  };

  if (verb == "ctx") {
    args(3, 3);
    ClientCtx ctx;
    ctx.uid = parse_id(t[1], line, "uid");
    ctx.gid = parse_id(t[2], line, "gid");
    try {
      ctx.nid = parse_nid(t[3]);
    } catch (const Error& e) {
      parse_error(line, fmt::format("invalid nid '{}'", t[3]));
    }
    return ctx;
  }
  if (verb == "mkdir") {
    args(1, 2);
    return op::Mkdir{t[1], opt_mode(0755)};
  }
  if (verb == "create") {
    args(1, 2);
    return op::Create{t[1], opt_mode(0644)};
  }
  if (verb == "mknod") {
    args(1, 2);
    return op::Mknod{t[1], opt_mode(0644)};
  }
  if (verb == "open") {
    args(2, 2);
    try {
      return op::Open{t[1], parse_access_mask(t[2])};
    } catch (const Error&) {
      parse_error(line, fmt::format("invalid access mask '{}'", t[2]));
    }
  }
  if (verb == "write") {
    args(2, 2);
    return op::Write{t[1], size_arg(t[2], line)};
  }
  if (verb == "truncate") {
    args(2, 2);
    return op::Truncate{t[1], size_arg(t[2], line)};
  }
  if (verb == "close") {
    args(1, 1);
    return op::Close{t[1]};
  }
  if (verb == "unlink") {
    args(1, 1);
    return op::Unlink{t[1]};
  }
  if (verb == "rmdir") {
    args(1, 1);
    return op::Rmdir{t[1]};
  }
  if (verb == "rename") {
    args(2, 2);
    return op::Rename{t[1], t[2]};
  }
  if (verb == "chmod") {
    args(2, 2);
    return op::Chmod{t[1], parse_mode(t[2], line)};
  }
  if (verb == "chown") {
    args(2, 2);
    auto colon = t[2].find(':');
    if (colon == std::string::npos) parse_error(line, "chown expects <uid>:<gid>");
    return op::Chown{t[1], parse_id(t[2].substr(0, colon), line, "uid"),
                     parse_id(t[2].substr(colon + 1), line, "gid")};
  }
  if (verb == "setx") {
    args(3, 3);
    return op::SetXattr{t[1], t[2], t[3]};
  }
  if (verb == "getx") {
    args(2, 2);
    return op::GetXattr{t[1], t[2]};
  }
  if (verb == "link") {
    args(2, 2);
    return op::Link{t[1], t[2]};
  }
  if (verb == "symlink") {
    args(2, 2);
    return op::Symlink{t[1], t[2]};
  }
  if (verb == "layout") {
    args(2, 2);
    return op::LayoutChange{t[1], parse_id(t[2], line, "stripe count")};
  }
  if (verb == "migrate") {
    args(2, 2);
    return op::Migrate{t[1], parse_count(t[2], line, "OST index")};
  }
  if (verb == "hsm") {
    args(1, 1);
    return op::HsmEvent{t[1]};
  }
  if (verb == "flrw") {
    args(1, 1);
    return op::FlrWrite{t[1]};
  }
  if (verb == "resync") {
    args(1, 1);
    return op::FlrResync{t[1]};
  }
  if (verb == "touch") {
    args(2, 2);
    if (t[2] == "atime") return op::Touch{t[1], op::TimeField::Atime};
    if (t[2] == "mtime") return op::Touch{t[1], op::TimeField::Mtime};
    if (t[2] == "ctime") return op::Touch{t[1], op::TimeField::Ctime};
    parse_error(line, fmt::format("touch expects atime, mtime or ctime, got '{}'", t[2]));
  }
  parse_error(line, fmt::format("unknown directive '{}'", verb));
}

// Upper bound on what `nodes` expands to, saturating at kMaxScriptOps + 1 so
// oversized scripts fail before anything is materialised.
std::uint64_t bounded_size(const std::vector<Node>& nodes) {
  constexpr std::uint64_t cap = kMaxScriptOps + 1;
  std::uint64_t total = 0;
  for (const auto& n : nodes) {
    std::uint64_t add = 1;
    if (n.is_repeat) {
      std::uint64_t body = bounded_size(n.body);
      add = (body != 0 && n.repeat > cap / body) ? cap : n.repeat * body;
    }
    total = std::min(cap, total + add);
  }
  return total;
}

void expand(const std::vector<Node>& nodes, std::optional<std::uint64_t> counter,
            Script& out, std::size_t& ops) {
  for (const auto& n : nodes) {
    if (n.is_repeat) {
      for (std::uint64_t k = 0; k < n.repeat; ++k) expand(n.body, k, out, ops);
      continue;
    }
    std::vector<std::string> tokens;
    tokens.reserve(n.line.tokens.size());
    for (const auto& tok : n.line.tokens) tokens.push_back(substitute(tok, counter, n.line.number));
    auto action = parse_action(tokens, n.line.number);
    if (std::holds_alternative<FsOp>(action) && ++ops > kMaxScriptOps) {
      parse_error(n.line.number, fmt::format("script expands past {} operations", kMaxScriptOps));
    }
    out.steps.push_back(ScriptStep{n.line.number, std::move(action)});
  }
}

}  // namespace

std::size_t Script::op_count() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += std::holds_alternative<FsOp>(s.action) ? 1 : 0;
  return n;
}

std::uint64_t parse_size(std::string_view text) {
  auto bad = [&]() -> std::uint64_t {
    throw Error(Errc::InvalidArgument, fmt::format("invalid size '{}'", text));
  };
  if (text.empty()) return bad();
  std::uint64_t multiplier = 1;
  switch (text.back()) {
    case 'K': case 'k': multiplier = KiB; break;
    case 'M': case 'm': multiplier = MiB; break;
    case 'G': case 'g': multiplier = GiB; break;
    default: break;
  }
  if (multiplier != 1) text.remove_suffix(1);
  auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() || (dot != std::string_view::npos && frac.empty()) || frac.size() > 9) {
    return bad();
  }
  std::uint64_t w = 0;
  auto r1 = std::from_chars(whole.data(), whole.data() + whole.size(), w);
  if (r1.ec != std::errc{} || r1.ptr != whole.data() + whole.size()) return bad();
  std::uint64_t f = 0;
  std::uint64_t scale = 1;
  for (char c : frac) {
    if (c < '0' || c > '9') return bad();
    f = f * 10 + static_cast<std::uint64_t>(c - '0');
    scale *= 10;
  }
  if (w > std::numeric_limits<std::uint64_t>::max() / multiplier) return bad();
  // Fractions are exact: floor(f / scale * multiplier).
  return w * multiplier + static_cast<std::uint64_t>(
                              (static_cast<unsigned __int128>(f) * multiplier) / scale);
}

Script parse_script(std::string_view text) {
  auto lines = tokenize(text);
  std::size_t at = 0;
  auto nodes = build(lines, at, false, 0);
  std::uint64_t running = 0;
  for (const auto& n : nodes) {
    running += bounded_size({n});
    if (running > kMaxScriptOps) {
      parse_error(n.line.number, fmt::format("script expands past {} operations", kMaxScriptOps));
    }
  }
  Script script;
  std::size_t ops = 0;
  expand(nodes, std::nullopt, script, ops);
  return script;
}

WorkloadError::WorkloadError(const Error& cause, std::size_t op_number, std::size_t line)
    : Error(cause.code(), fmt::format("op {} (line {}): {}", op_number, line, cause.what()), line),
      op_number_(op_number),
      line_(line) {}

RunReport run_workload(SimFs& fs, const Script& script, const RunOptions& options) {
  RunReport report;
  ClientCtx ctx = options.initial_ctx;
  for (const auto& step : script.steps) {
    if (const auto* c = std::get_if<ClientCtx>(&step.action)) {
      ctx = *c;
      continue;
    }
    ++report.ops;
    try {
      fs.apply(ctx, std::get<FsOp>(step.action));
    } catch (const Error& e) {
      if (!options.keep_going) throw WorkloadError(e, report.ops, step.line);
      report.failures.push_back(RunFailure{report.ops, step.line, e.code(), e.what()});
    }
  }
  return report;
}

std::optional<std::string_view> builtin_script(std::string_view name) {
  for (const auto& b : kBuiltins) {
    if (b.name == name) return b.text;
  }
  return std::nullopt;
}

std::vector<std::string> builtin_script_names() {
  std::vector<std::string> out;
  for (const auto& b : kBuiltins) out.emplace_back(b.name);
  return out;
}

}  // namespace chaudit::sim
