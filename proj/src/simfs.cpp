// Copyright 2026 The chaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "chaudit/simfs.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "chaudit/error.hpp"

namespace chaudit::sim {

namespace {

constexpr int kMaxSymlinkDepth = 8;

// Extended-flag bits describing which optional record fields are present.
constexpr std::uint64_t kExtUser = 0x1;
constexpr std::uint64_t kExtNid = 0x2;
constexpr std::uint64_t kExtMode = 0x4;

std::uint64_t rounded_gib_tenths(int tenths) {
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(tenths) / 10.0 *
                                                 static_cast<double>(GiB)));
}

std::vector<std::string> split_path(const std::string& path) {
  if (path.empty() || path.front() != '/') {
    throw Error(Errc::InvalidArgument, fmt::format("path '{}' is not absolute", path));
  }
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = i;
    while (j < path.size() && path[j] != '/') ++j;
    if (j > i) parts.emplace_back(path.substr(i, j - i));
    i = j;
  }
  return parts;
}

std::vector<std::string> split_relative(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = i;
    while (j < path.size() && path[j] != '/') ++j;
    if (j > i) parts.emplace_back(path.substr(i, j - i));
    i = j;
  }
  return parts;
}

// Byte count of each stripe for a file of `size` bytes over `count` stripes,
// laid out in kStripeSize chunks round-robin.
std::vector<std::uint64_t> stripe_bytes(std::uint64_t size, std::size_t count) {
  std::vector<std::uint64_t> out(count, 0);
  if (count == 0) return out;
  std::uint64_t chunks = size / kStripeSize;
  std::uint64_t tail = size % kStripeSize;
  for (std::size_t j = 0; j < count; ++j) {
    out[j] = (chunks / count + (j < chunks % count ? 1 : 0)) * kStripeSize;
  }
  out[chunks % count] += tail;
  return out;
}

[[noreturn]] void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace

Topology Topology::standard(std::string fsname, int oss_count, int osts_per_oss) {
  Topology t;
  t.fsname = std::move(fsname);
  t.oss_count = oss_count;
  t.osts_per_oss = osts_per_oss;
  t.mdt = TargetSpace{t.fsname + "-MDT0000", rounded_gib_tenths(11), 0};
  for (int i = 0; i < oss_count * osts_per_oss; ++i) {
    t.osts.push_back(TargetSpace{ost_name(t.fsname, static_cast<std::size_t>(i)),
                                 rounded_gib_tenths(18), 0});
  }
  return t;
}

std::string ost_name(const std::string& fsname, std::size_t index) {
  return fmt::format("{}-OST{:04x}", fsname, index);
}

ChangelogMask ChangelogMask::all() {
  ChangelogMask m;
  m.bits_.set();
  return m;
}

ChangelogMask ChangelogMask::standard() {
  ChangelogMask m;
  for (const auto& t : record_types()) m.set(t.kind, !t.audit_only);
  return m;
}

std::vector<std::string> ChangelogMask::names() const {
  std::vector<std::string> out;
  for (const auto& t : record_types()) {
    if (contains(t.kind)) out.emplace_back(t.name);
  }
  return out;
}

// All namespace mutation logic. Runs with the SimFs exclusive lock held;
// every operation validates fully before touching state so a failed call
// leaves the namespace and capacity counters unchanged.
class SimFs::Mutation {
 public:
  Mutation(SimFs& fs, const ClientCtx& ctx, Timestamp now) : fs_(fs), ctx_(ctx), now_(now) {}

  OpResult operator()(const op::Mkdir& o) { return make_node(o.path, InodeKind::Dir, o.mode); }
  OpResult operator()(const op::Create& o) { return make_node(o.path, InodeKind::File, o.mode); }
  OpResult operator()(const op::Mknod& o) { return make_node(o.path, InodeKind::Device, o.mode); }

  OpResult operator()(const op::Symlink& o) {
    if (o.target.empty()) fail(Errc::InvalidArgument, "empty symlink target");
    return make_node(o.path, InodeKind::Symlink, 0777, o.target);
  }

  OpResult operator()(const op::Open& o) {
    Inode& ino = node(resolve(o.path, true));
    if (ino.kind == InodeKind::Dir && o.access.write) {
      fail(Errc::IsDir, fmt::format("{} is a directory", o.path));
    }
    std::uint64_t flags = o.access.write ? (o.access.read ? 0x2 : 0x1) : 0x0;
    if (!permits(ino, o.access)) {
      emit(RecordKind::Nopen, ino.fid, flags, o.access);
      fail(Errc::PermissionDenied,
           fmt::format("open {} with {} denied for uid {}", o.path, to_string(o.access), ctx_.uid));
    }
    emit(RecordKind::Open, ino.fid, flags, o.access);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::Close& o) {
    Inode& ino = node(resolve(o.path, true));
    emit(RecordKind::Close, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::Write& o) {
    Inode& ino = regular_file(o.path);
    require(ino, AccessMask{false, true, false}, "write");
    relayout(ino, ino.size + o.bytes, current_osts(ino));
    ino.mtime = ino.ctime = now_;
    emit(RecordKind::Mtime, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::Truncate& o) {
    Inode& ino = regular_file(o.path);
    require(ino, AccessMask{false, true, false}, "truncate");
    relayout(ino, o.size, current_osts(ino));
    ino.mtime = ino.ctime = now_;
    emit(RecordKind::Trunc, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::Chmod& o) {
    Inode& ino = node(resolve(o.path, true));
    require_owner(ino, "chmod");
    ino.mode = o.mode & 0777;
    ino.ctime = now_;
    emit(RecordKind::Sattr, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::Chown& o) {
    Inode& ino = node(resolve(o.path, true));
    if (ctx_.uid != 0) fail(Errc::PermissionDenied, "chown requires uid 0");
    ino.uid = o.uid;
    ino.gid = o.gid;
    ino.ctime = now_;
    emit(RecordKind::Sattr, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::SetXattr& o) {
    Inode& ino = node(resolve(o.path, true));
    if (o.name.empty()) fail(Errc::InvalidArgument, "empty xattr name");
    require(ino, AccessMask{false, true, false}, "setxattr");
    ino.xattrs[o.name] = o.value;
    ino.ctime = now_;
    emit(RecordKind::Xattr, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::GetXattr& o) {
    Inode& ino = node(resolve(o.path, true));
    require(ino, AccessMask{true, false, false}, "getxattr");
    auto it = ino.xattrs.find(o.name);
    if (it == ino.xattrs.end()) {
      fail(Errc::NoEnt, fmt::format("no xattr '{}' on {}", o.name, o.path));
    }
    emit(RecordKind::Gxatr, ino.fid);
    return {ino.fid, it->second};
  }

  OpResult operator()(const op::Link& o) {
    Inode& src = node(resolve(o.src, false));
    if (src.kind == InodeKind::Dir) fail(Errc::IsDir, fmt::format("{} is a directory", o.src));
    auto [dir_fid, leaf] = resolve_parent(o.dst);
    Inode& dir = node(dir_fid);
    require(dir, AccessMask{false, true, true}, "link");
    if (dir.entries.count(leaf) != 0) fail(Errc::Exists, fmt::format("{} exists", o.dst));
    dir.entries.emplace(leaf, src.fid);
    dir.mtime = dir.ctime = now_;
    ++src.nlink;
    src.ctime = now_;
    emit_ns(RecordKind::Hlink, src.fid, dir_fid, leaf);
    return {src.fid, std::nullopt};
  }

  OpResult operator()(const op::Unlink& o) {
    auto [dir_fid, leaf] = resolve_parent(o.path);
    Inode& dir = node(dir_fid);
    require(dir, AccessMask{false, true, true}, "unlink");
    Fid victim = child(dir, leaf, o.path);
    if (node(victim).kind == InodeKind::Dir) {
      fail(Errc::IsDir, fmt::format("{} is a directory", o.path));
    }
    dir.entries.erase(leaf);
    dir.mtime = dir.ctime = now_;
    drop_link(victim);
    emit_ns(RecordKind::Unlnk, victim, dir_fid, leaf);
    return {victim, std::nullopt};
  }

  OpResult operator()(const op::Rmdir& o) {
    auto [dir_fid, leaf] = resolve_parent(o.path);
    Inode& dir = node(dir_fid);
    require(dir, AccessMask{false, true, true}, "rmdir");
    Fid victim = child(dir, leaf, o.path);
    Inode& v = node(victim);
    if (v.kind != InodeKind::Dir) fail(Errc::NotDir, fmt::format("{} is not a directory", o.path));
    if (!v.entries.empty()) fail(Errc::NotEmpty, fmt::format("{} is not empty", o.path));
    dir.entries.erase(leaf);
    --dir.nlink;
    dir.mtime = dir.ctime = now_;
    remove_inode(victim);
    emit_ns(RecordKind::Rmdir, victim, dir_fid, leaf);
    return {victim, std::nullopt};
  }

  OpResult operator()(const op::Rename& o) {
    auto [src_dir_fid, src_leaf] = resolve_parent(o.src);
    auto [dst_dir_fid, dst_leaf] = resolve_parent(o.dst);
    Inode& src_dir = node(src_dir_fid);
    Inode& dst_dir = node(dst_dir_fid);
    require(src_dir, AccessMask{false, true, true}, "rename");
    require(dst_dir, AccessMask{false, true, true}, "rename");
    Fid moved = child(src_dir, src_leaf, o.src);
    Inode& m = node(moved);

    std::optional<Fid> victim;
    if (auto it = dst_dir.entries.find(dst_leaf); it != dst_dir.entries.end()) {
      victim = it->second;
    }
    bool same_entry = src_dir_fid == dst_dir_fid && src_leaf == dst_leaf;
    if (victim && !same_entry && *victim != moved) {
      Inode& v = node(*victim);
      if (m.kind == InodeKind::Dir) {
        if (v.kind != InodeKind::Dir) {
          fail(Errc::NotDir, fmt::format("{} is not a directory", o.dst));
        }
        if (!v.entries.empty()) fail(Errc::NotEmpty, fmt::format("{} is not empty", o.dst));
      } else if (v.kind == InodeKind::Dir) {
        fail(Errc::IsDir, fmt::format("{} is a directory", o.dst));
      }
    }
    if (m.kind == InodeKind::Dir) {
      // The destination must not sit inside the directory being moved.
      for (Fid cur = dst_dir_fid;; cur = node(cur).parent) {
        if (cur == moved) {
          fail(Errc::InvalidArgument, fmt::format("cannot move {} into itself", o.src));
        }
        if (cur == SimFs::root_fid()) break;
      }
    }

    if (!same_entry) {
      if (victim && *victim != moved) {
        dst_dir.entries.erase(dst_leaf);
        if (node(*victim).kind == InodeKind::Dir) {
          --dst_dir.nlink;
          remove_inode(*victim);
        } else {
          drop_link(*victim);
        }
      } else if (victim) {
        // Both names already refer to the same inode (hard links).
        dst_dir.entries.erase(dst_leaf);
        --m.nlink;
      }
      src_dir.entries.erase(src_leaf);
      dst_dir.entries[dst_leaf] = moved;
      if (m.kind == InodeKind::Dir && src_dir_fid != dst_dir_fid) {
        --src_dir.nlink;
        ++dst_dir.nlink;
        m.parent = dst_dir_fid;
      }
    }
    src_dir.mtime = src_dir.ctime = now_;
    dst_dir.mtime = dst_dir.ctime = now_;
    m.ctime = now_;
    emit_ns(RecordKind::Renme, moved, src_dir_fid, src_leaf);
    emit_ns(RecordKind::Rnmto, moved, dst_dir_fid, dst_leaf);
    return {moved, std::nullopt};
  }

  OpResult operator()(const op::LayoutChange& o) {
    Inode& ino = regular_file(o.path);
    require_owner(ino, "layout change");
    if (o.stripe_count < 1 || o.stripe_count > fs_.topology_.osts.size()) {
      fail(Errc::InvalidArgument, fmt::format("stripe count {} out of range", o.stripe_count));
    }
    std::size_t first = ino.stripes.empty() ? 0 : ino.stripes.front().ost;
    relayout(ino, ino.size, consecutive_osts(first, o.stripe_count));
    ino.ctime = now_;
    emit(RecordKind::Lyout, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::Migrate& o) {
    Inode& ino = regular_file(o.path);
    require_owner(ino, "migrate");
    if (o.ost >= fs_.topology_.osts.size()) {
      fail(Errc::InvalidArgument, fmt::format("no OST index {}", o.ost));
    }
    relayout(ino, ino.size, consecutive_osts(o.ost, std::max<std::size_t>(1, ino.stripes.size())));
    ino.ctime = now_;
    emit(RecordKind::Migrt, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::HsmEvent& o) {
    Inode& ino = regular_file(o.path);
    require_owner(ino, "hsm");
    emit(RecordKind::Hsm, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::FlrWrite& o) {
    Inode& ino = regular_file(o.path);
    require(ino, AccessMask{false, true, false}, "flr write");
    emit(RecordKind::Flrw, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::FlrResync& o) {
    Inode& ino = regular_file(o.path);
    require(ino, AccessMask{false, true, false}, "flr resync");
    emit(RecordKind::Resync, ino.fid);
    return {ino.fid, std::nullopt};
  }

  OpResult operator()(const op::Touch& o) {
    Inode& ino = node(resolve(o.path, true));
    switch (o.field) {
      case op::TimeField::Atime:
        require(ino, AccessMask{true, false, false}, "atime update");
        ino.atime = now_;
        emit(RecordKind::Atime, ino.fid);
        break;
      case op::TimeField::Mtime:
        require(ino, AccessMask{false, true, false}, "mtime update");
        ino.mtime = now_;
        emit(RecordKind::Mtime, ino.fid);
        break;
      case op::TimeField::Ctime:
        require(ino, AccessMask{false, true, false}, "ctime update");
        ino.ctime = now_;
        emit(RecordKind::Ctime, ino.fid);
        break;
    }
    return {ino.fid, std::nullopt};
  }

 private:
  Inode& node(const Fid& fid) { return fs_.inodes_.at(fid); }

  bool permits(const Inode& ino, AccessMask want) const {
    if (ctx_.uid == 0) return true;
    unsigned shift = ctx_.uid == ino.uid ? 6u : (ctx_.gid == ino.gid ? 3u : 0u);
    unsigned bits = (ino.mode >> shift) & 07u;
    return (!want.read || (bits & 04u)) && (!want.write || (bits & 02u)) &&
           (!want.exec || (bits & 01u));
  }

  void require(const Inode& ino, AccessMask want, const char* what) const {
    if (!permits(ino, want)) {
      fail(Errc::PermissionDenied, fmt::format("{} denied on {} for uid {}", what,
                                               to_string(ino.fid), ctx_.uid));
    }
  }

  void require_owner(const Inode& ino, const char* what) const {
    if (ctx_.uid != 0 && ctx_.uid != ino.uid) {
      fail(Errc::PermissionDenied, fmt::format("{} requires ownership of {}", what,
                                               to_string(ino.fid)));
    }
  }

  Fid child(const Inode& dir, const std::string& leaf, const std::string& path) const {
    auto it = dir.entries.find(leaf);
    if (it == dir.entries.end()) fail(Errc::NoEnt, fmt::format("{} does not exist", path));
    return it->second;
  }

  Fid walk(Fid cur, const std::vector<std::string>& parts, bool follow_final, int depth) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      Inode& dir = node(cur);
      if (dir.kind != InodeKind::Dir) {
        fail(Errc::NotDir, fmt::format("{} is not a directory", parts[i > 0 ? i - 1 : 0]));
      }
      require(dir, AccessMask{false, false, true}, "lookup");
      const auto& part = parts[i];
      if (part == ".") continue;
      if (part == "..") {
        cur = dir.parent;
        continue;
      }
      auto it = dir.entries.find(part);
      if (it == dir.entries.end()) fail(Errc::NoEnt, fmt::format("{} does not exist", part));
      Fid next = it->second;
      const Inode& n = node(next);
      bool last = i + 1 == parts.size();
      if (n.kind == InodeKind::Symlink && (!last || follow_final)) {
        if (depth >= kMaxSymlinkDepth) fail(Errc::InvalidArgument, "too many symbolic links");
        const std::string& target = n.link_target;
        Fid base = target.front() == '/' ? SimFs::root_fid() : cur;
        next = walk(base, split_relative(target), true, depth + 1);
      }
      cur = next;
    }
    return cur;
  }

  Fid resolve(const std::string& path, bool follow_final) {
    return walk(SimFs::root_fid(), split_path(path), follow_final, 0);
  }

  std::pair<Fid, std::string> resolve_parent(const std::string& path) {
    auto parts = split_path(path);
    if (parts.empty()) fail(Errc::InvalidArgument, "operation needs a name below /");
    std::string leaf = parts.back();
    parts.pop_back();
    if (leaf == "." || leaf == "..") {
      fail(Errc::InvalidArgument, fmt::format("invalid final component in {}", path));
    }
    if (!is_valid_filename(leaf)) fail(Errc::InvalidArgument, fmt::format("bad name in {}", path));
    Fid dir = walk(SimFs::root_fid(), parts, true, 0);
    if (node(dir).kind != InodeKind::Dir) {
      fail(Errc::NotDir, fmt::format("parent of {} is not a directory", path));
    }
    return {dir, leaf};
  }

  Inode& regular_file(const std::string& path) {
    Inode& ino = node(resolve(path, true));
    if (ino.kind == InodeKind::Dir) fail(Errc::IsDir, fmt::format("{} is a directory", path));
    if (ino.kind != InodeKind::File) {
      fail(Errc::InvalidArgument, fmt::format("{} is not a regular file", path));
    }
    return ino;
  }

  OpResult make_node(const std::string& path, InodeKind kind, std::uint16_t mode,
                     std::string link_target = {}) {
    auto [dir_fid, leaf] = resolve_parent(path);
    Inode& dir = node(dir_fid);
    require(dir, AccessMask{false, true, true}, "create");
    if (dir.entries.count(leaf) != 0) fail(Errc::Exists, fmt::format("{} exists", path));
    auto& mdt = fs_.topology_.mdt;
    if (mdt.used + kInodeBytes > mdt.capacity) {
      fail(Errc::NoSpace, fmt::format("{} has no room for another inode", mdt.name));
    }

    Inode ino;
    ino.fid = fs_.allocate_fid();
    ino.kind = kind;
    ino.mode = mode & 0777;
    ino.uid = ctx_.uid;
    ino.gid = ctx_.gid;
    ino.atime = ino.mtime = ino.ctime = now_;
    ino.link_target = std::move(link_target);
    RecordKind record = RecordKind::Creat;
    switch (kind) {
      case InodeKind::File: {
        std::size_t n = fs_.topology_.osts.size();
        std::size_t count = std::min<std::size_t>(fs_.options_.default_stripe_count, n);
        for (auto ost : consecutive_osts(fs_.next_ost_, count)) ino.stripes.push_back({ost, 0});
        if (n > 0) fs_.next_ost_ = (fs_.next_ost_ + count) % n;
        break;
      }
      case InodeKind::Dir:
        ino.nlink = 2;
        ino.parent = dir_fid;
        ++dir.nlink;
        record = RecordKind::Mkdir;
        break;
      case InodeKind::Symlink:
        ino.size = ino.link_target.size();
        record = RecordKind::Slink;
        break;
      case InodeKind::Device:
        record = RecordKind::Mknod;
        break;
    }
    Fid fid = ino.fid;
    dir.entries.emplace(leaf, fid);
    dir.mtime = dir.ctime = now_;
    mdt.used += kInodeBytes;
    fs_.inodes_.emplace(fid, std::move(ino));
    emit_ns(record, fid, dir_fid, leaf);
    return {fid, std::nullopt};
  }

  std::vector<std::size_t> current_osts(const Inode& ino) const {
    std::vector<std::size_t> out;
    for (const auto& s : ino.stripes) out.push_back(s.ost);
    return out;
  }

  std::vector<std::size_t> consecutive_osts(std::size_t first, std::size_t count) const {
    std::size_t n = fs_.topology_.osts.size();
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < count && n > 0; ++j) out.push_back((first + j) % n);
    return out;
  }

  // Moves the file to `size` bytes over `osts`, or throws NoSpace without
  // changing anything.
  void relayout(Inode& ino, std::uint64_t size, const std::vector<std::size_t>& osts) {
    auto& targets = fs_.topology_.osts;
    if (osts.empty() && size > 0) fail(Errc::NoSpace, "no OSTs configured");
    std::vector<std::int64_t> delta(targets.size(), 0);
    for (const auto& s : ino.stripes) delta[s.ost] -= static_cast<std::int64_t>(s.bytes);
    auto bytes = stripe_bytes(size, osts.size());
    for (std::size_t j = 0; j < osts.size(); ++j) {
      delta[osts[j]] += static_cast<std::int64_t>(bytes[j]);
    }
    for (std::size_t k = 0; k < targets.size(); ++k) {
      auto after = static_cast<std::int64_t>(targets[k].used) + delta[k];
      if (after > static_cast<std::int64_t>(targets[k].capacity)) {
        fail(Errc::NoSpace, fmt::format("{} is full", targets[k].name));
      }
    }
    for (std::size_t k = 0; k < targets.size(); ++k) {
      targets[k].used = static_cast<std::uint64_t>(static_cast<std::int64_t>(targets[k].used) +
                                                   delta[k]);
    }
    ino.stripes.clear();
    for (std::size_t j = 0; j < osts.size(); ++j) ino.stripes.push_back({osts[j], bytes[j]});
    ino.size = size;
  }

  void drop_link(const Fid& fid) {
    Inode& ino = node(fid);
    ino.ctime = now_;
    if (--ino.nlink == 0) remove_inode(fid);
  }

  void remove_inode(const Fid& fid) {
    Inode& ino = node(fid);
    for (const auto& s : ino.stripes) fs_.topology_.osts[s.ost].used -= s.bytes;
    fs_.topology_.mdt.used -= kInodeBytes;
    fs_.inodes_.erase(fid);
  }

  ChangelogRecord base(RecordKind kind, const Fid& target) const {
    ChangelogRecord r;
    r.type = kind;
    r.target = target;
    r.set_timestamp(now_);
    r.user = Credentials{ctx_.uid, ctx_.gid};
    r.nid = ctx_.nid;
    r.ext_flags = kExtUser | kExtNid;
    return r;
  }

  void emit(RecordKind kind, const Fid& target, std::uint64_t flags = 0,
            std::optional<AccessMask> access = std::nullopt) {
    auto r = base(kind, target);
    r.flags = flags;
    if (access) {
      r.mode_mask = access;
      *r.ext_flags |= kExtMode;
    }
    fs_.emit(std::move(r));
  }

  void emit_ns(RecordKind kind, const Fid& target, const Fid& parent, const std::string& name) {
    auto r = base(kind, target);
    r.parent = parent;
    r.name = name;
    fs_.emit(std::move(r));
  }

  SimFs& fs_;
  const ClientCtx& ctx_;
  Timestamp now_;
};

SimFs::SimFs(SimOptions options)
    : options_(std::move(options)),
      topology_(options_.topology),
      clock_(options_.epoch) {
  mdt_name_ = topology_.mdt.name;
  Inode root;
  root.fid = root_fid();
  root.kind = InodeKind::Dir;
  root.mode = 0755;
  root.nlink = 2;
  root.parent = root.fid;
  root.atime = root.mtime = root.ctime = clock_;
  topology_.mdt.used += kInodeBytes;
  inodes_.emplace(root.fid, std::move(root));
}

std::vector<std::string> SimFs::devices() const { return {mdt_name_}; }

Fid SimFs::allocate_fid() {
  if (next_oid_ == 0) {
    ++next_sequence_;
    next_oid_ = 1;
  }
  return Fid{next_sequence_, next_oid_++, 0};
}

ChangelogState& SimFs::changelog(const std::string& device) {
  if (device != mdt_name_) fail(Errc::UnknownDevice, fmt::format("unknown device '{}'", device));
  return changelog_;
}

const ChangelogState& SimFs::changelog(const std::string& device) const {
  if (device != mdt_name_) fail(Errc::UnknownDevice, fmt::format("unknown device '{}'", device));
  return changelog_;
}

Timestamp SimFs::advance_clock() {
  if (options_.clock) return options_.clock();
  Timestamp t = clock_;
  clock_ += options_.tick;
  return t;
}

Timestamp SimFs::now() const {
  std::shared_lock lock(mutex_);
  return options_.clock ? options_.clock() : clock_;
}

void SimFs::emit(ChangelogRecord record) {
  if (record.type != RecordKind::Mark && !changelog_.mask.contains(record.type)) return;
  record.index = changelog_.next_index++;
  changelog_.ring.push_back(std::move(record));
}

std::uint64_t SimFs::purge(ChangelogState& cl) {
  if (cl.users.empty()) return 0;
  std::uint64_t floor = cl.users.front().second;
  for (const auto& [id, cleared] : cl.users) floor = std::min(floor, cleared);
  std::uint64_t purged = 0;
  while (!cl.ring.empty() && cl.ring.front().index <= floor) {
    cl.ring.pop_front();
    ++purged;
  }
  return purged;
}

namespace {

ChangelogRecord mark_record(Timestamp now) {
  ChangelogRecord r;
  r.type = RecordKind::Mark;
  r.set_timestamp(now);
  return r;
}

}  // namespace

std::string SimFs::changelog_register(const std::string& device) {
  std::unique_lock lock(mutex_);
  auto& cl = changelog(device);
  auto now = advance_clock();
  std::string id = fmt::format("cl{}", ++cl.registrations);
  cl.users.emplace_back(id, cl.next_index - 1);
  purge(cl);
  emit(mark_record(now));
  return id;
}

std::vector<std::string> SimFs::set_mask(const std::string& device, const std::string& spec) {
  ChangelogMask mask;
  std::string trimmed = spec;
  trimmed.erase(0, trimmed.find_first_not_of(" \t"));
  trimmed.erase(trimmed.find_last_not_of(" \t") + 1);
  if (trimmed == "ALL" || trimmed == "all") {
    mask = ChangelogMask::all();
  } else {
    std::size_t i = 0;
    while (i < trimmed.size()) {
      while (i < trimmed.size() && (trimmed[i] == ' ' || trimmed[i] == ',')) ++i;
      std::size_t j = i;
      while (j < trimmed.size() && trimmed[j] != ' ' && trimmed[j] != ',') ++j;
      if (j > i) mask.set(type_by_name(trimmed.substr(i, j - i)).kind);
      i = j;
    }
  }
  return set_mask(device, mask);
}

std::vector<std::string> SimFs::set_mask(const std::string& device, const ChangelogMask& mask) {
  std::unique_lock lock(mutex_);
  auto& cl = changelog(device);
  auto now = advance_clock();
  cl.mask = mask;
  emit(mark_record(now));
  return cl.mask.names();
}

ChangelogMask SimFs::mask(const std::string& device) const {
  std::shared_lock lock(mutex_);
  return changelog(device).mask;
}

OpResult SimFs::apply(const ClientCtx& ctx, const FsOp& operation) {
  std::unique_lock lock(mutex_);
  Mutation m(*this, ctx, advance_clock());
  return std::visit(m, operation);
}

std::vector<ChangelogRecord> SimFs::changelog_read(const std::string& device,
                                                   const std::string& userid,
                                                   std::uint64_t since_index,
                                                   std::size_t max) const {
  std::shared_lock lock(mutex_);
  const auto& cl = changelog(device);
  auto user = std::find_if(cl.users.begin(), cl.users.end(),
                           [&](const auto& u) { return u.first == userid; });
  if (user == cl.users.end()) {
    fail(Errc::UnknownUser, fmt::format("changelog user '{}' is not registered", userid));
  }
  std::uint64_t after = std::max(since_index, user->second);
  auto it = std::upper_bound(cl.ring.begin(), cl.ring.end(), after,
                             [](std::uint64_t v, const ChangelogRecord& r) { return v < r.index; });
  std::vector<ChangelogRecord> out;
  for (; it != cl.ring.end() && out.size() < max; ++it) out.push_back(*it);
  return out;
}

std::uint64_t SimFs::changelog_clear(const std::string& device, const std::string& userid,
                                     std::uint64_t end_index) {
  std::unique_lock lock(mutex_);
  auto& cl = changelog(device);
  auto user = std::find_if(cl.users.begin(), cl.users.end(),
                           [&](const auto& u) { return u.first == userid; });
  if (user == cl.users.end()) {
    fail(Errc::UnknownUser, fmt::format("changelog user '{}' is not registered", userid));
  }
  if (end_index > cl.next_index - 1) {
    fail(Errc::IndexOutOfRange,
         fmt::format("clear index {} beyond last record {}", end_index, cl.next_index - 1));
  }
  if (end_index == 0) return 0;
  user->second = std::max(user->second, end_index);
  return purge(cl);
}

std::uint64_t SimFs::last_index(const std::string& device) const {
  std::shared_lock lock(mutex_);
  return changelog(device).next_index - 1;
}

ChangelogState SimFs::changelog_state(const std::string& device) const {
  std::shared_lock lock(mutex_);
  return changelog(device);
}

namespace {

CapacityRow make_row(const TargetSpace& t, std::string mount) {
  CapacityRow row;
  row.uuid = t.name + "_UID";
  row.total = t.capacity;
  row.used = t.used;
  row.available = t.capacity - t.used;
  row.use_percent =
      t.capacity == 0 ? 0 : static_cast<int>((t.used * 100 + t.capacity - 1) / t.capacity);
  row.mount = std::move(mount);
  return row;
}

}  // namespace

CapacityReport SimFs::df(const std::vector<std::string>& targets) const {
  std::shared_lock lock(mutex_);
  auto wanted = [&](const TargetSpace& t) {
    if (targets.empty()) return true;
    return std::any_of(targets.begin(), targets.end(),
                       [&](const std::string& n) { return n == t.name || n == t.name + "_UID"; });
  };
  for (const auto& n : targets) {
    bool known = n == topology_.mdt.name || n == topology_.mdt.name + "_UID";
    for (const auto& o : topology_.osts) known = known || n == o.name || n == o.name + "_UID";
    if (!known) fail(Errc::UnknownDevice, fmt::format("unknown target '{}'", n));
  }

  CapacityReport report;
  if (wanted(topology_.mdt)) {
    report.rows.push_back(make_row(topology_.mdt, options_.mount_point + "[MDT:0]"));
  }
  TargetSpace sum{"filesystem_summary", 0, 0};
  for (std::size_t i = 0; i < topology_.osts.size(); ++i) {
    const auto& o = topology_.osts[i];
    if (!wanted(o)) continue;
    report.rows.push_back(make_row(o, fmt::format("{}[OST:{}]", options_.mount_point, i)));
    sum.capacity += o.capacity;
    sum.used += o.used;
  }
  report.summary = make_row(sum, options_.mount_point);
  report.summary.uuid = "filesystem_summary:";
  return report;
}

std::string human_size(std::uint64_t bytes) {
  static constexpr char kUnits[] = "KMGTPE";
  double v = static_cast<double>(bytes) / 1024.0;
  std::size_t unit = 0;
  while (v >= 1024.0 && unit + 1 < sizeof(kUnits) - 1) {
    v /= 1024.0;
    ++unit;
  }
  return fmt::format("{:.1f}{}", v, kUnits[unit]);
}

std::string render_df(const CapacityReport& report) {
  std::string out = fmt::format("{:<20} {:>10} {:>10} {:>10} {:>4} {}\n", "UUID", "bytes", "Used",
                                "Available", "Use%", "Mounted on");
  auto line = [&](const CapacityRow& r) {
    out += fmt::format("{:<20} {:>10} {:>10} {:>10} {:>3}% {}\n", r.uuid, human_size(r.total),
                       human_size(r.used), human_size(r.available), r.use_percent, r.mount);
  };
  for (const auto& r : report.rows) line(r);
  line(report.summary);
  return out;
}

std::optional<Inode> SimFs::stat(const std::string& path) const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> parts;
  try {
    parts = split_path(path);
  } catch (const Error&) {
    return std::nullopt;
  }
  Fid cur = root_fid();
  for (const auto& part : parts) {
    const auto& dir = inodes_.at(cur);
    if (dir.kind != InodeKind::Dir) return std::nullopt;
    if (part == ".") continue;
    if (part == "..") {
      cur = dir.parent;
      continue;
    }
    auto it = dir.entries.find(part);
    if (it == dir.entries.end()) return std::nullopt;
    cur = it->second;
  }
  return inodes_.at(cur);
}

std::optional<Inode> SimFs::inode(const Fid& fid) const {
  std::shared_lock lock(mutex_);
  auto it = inodes_.find(fid);
  if (it == inodes_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t SimFs::live_file_bytes() const {
  std::shared_lock lock(mutex_);
  std::uint64_t total = 0;
  for (const auto& [fid, ino] : inodes_) {
    for (const auto& s : ino.stripes) total += s.bytes;
  }
  return total;
}

std::uint64_t SimFs::ost_used_bytes() const {
  std::shared_lock lock(mutex_);
  std::uint64_t total = 0;
  for (const auto& o : topology_.osts) total += o.used;
  return total;
}

Topology SimFs::topology() const {
  std::shared_lock lock(mutex_);
  return topology_;
}

}  // namespace chaudit::sim
