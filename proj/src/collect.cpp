#include "cio/collect.hpp"

#include <algorithm>
#include <ostream>

#include "cio/archive.hpp"
#include "cio/crc32.hpp"

namespace cio::collect {

using store::join_path;
using store::split_path;

namespace {

// Subdirectory `dir` (possibly the root, "") under `base`.
std::string under(const char* base, const std::string& dir) { return dir.empty() ? base : join_path(base, dir); }

}  // namespace

void CollectorPolicy::validate() const {
  if (!(max_delay_s > 0) || max_data == 0 || min_free_space == 0 || gfs_block_size == 0) {
    throw Error(ErrorCode::config, "collector policy values must all be positive");
  }
}

const char* to_string(FlushReason r) {
  switch (r) {
    case FlushReason::none: return "none";
    case FlushReason::delay: return "delay";
    case FlushReason::data: return "data";
    case FlushReason::space: return "space";
    case FlushReason::forced: return "forced";
    case FlushReason::drain: return "drain";
  }
  return "?";
}

FlushDecision should_flush(SimTime last_write, std::uint64_t buffered, std::uint64_t ifs_free, SimTime now,
                           const CollectorPolicy& policy) {
  if ((now - last_write).seconds() > policy.max_delay_s) return {true, FlushReason::delay};
  if (buffered > policy.max_data) return {true, FlushReason::data};
  if (ifs_free < policy.min_free_space) return {true, FlushReason::space};
  return {};
}

FlushDecision should_flush(const CollectorState& state, const store::Store& ifs, SimTime now,
                           const CollectorPolicy& policy) {
  return should_flush(state.last_write, state.buffered_bytes, ifs.free_space(), now, policy);
}

std::vector<store::FileObject> stage_task_output(const workload::TaskSpec& task, store::Store& lfs,
                                                 store::Store& ifs, CollectorState& state,
                                                 const std::function<void()>& on_full) {
  std::vector<store::FileObject> staged;
  for (const auto& out : task.outputs) {
    const auto blob = store::read_blob(lfs, out.name);
    const std::string incoming = join_path(kIncomingDir, out.name);
    try {
      ifs.put(incoming, blob);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::store_full || !on_full) throw;
      on_full();
      ifs.put(incoming, blob);
    }
    const auto [dir, leaf] = split_path(out.name);
    const std::string to_dir = under(kStagingDir, dir);
    ifs.make_dir(to_dir);
    staged.push_back(ifs.atomic_move(under(kIncomingDir, dir), to_dir, leaf));
    lfs.remove(out.name);
    state.staged[out.name] = blob.size;
    state.buffered_bytes += blob.size;
  }
  return staged;
}

std::string archive_name(NodeId ifs_node, std::uint64_t seq) {
  return "cio-" + std::to_string(ifs_node.index) + "-" + std::to_string(seq) + ".cioa";
}

std::string archive_path(NodeId ifs_node, std::uint64_t seq) {
  return "cio/" + std::to_string(ifs_node.index) + "/" + archive_name(ifs_node, seq);
}

std::optional<PendingFlush> begin_flush(CollectorState& state, const store::Store& ifs, FlushReason reason) {
  if (state.flushing) throw Error(ErrorCode::runtime, "collector already has a flush in progress");
  if (state.staged.empty()) return std::nullopt;
  PendingFlush p;
  p.seq = state.flush_seq++;
  p.reason = reason;
  p.name = archive_name(state.ifs_node, p.seq);
  p.gfs_path = archive_path(state.ifs_node, p.seq);
  p.members.assign(state.staged.begin(), state.staged.end());

  std::vector<store::Blob> blobs;
  blobs.reserve(p.members.size());
  bool materialized = true;
  for (const auto& [name, size] : p.members) {
    blobs.push_back(store::read_blob(ifs, join_path(kStagingDir, name)));
    materialized = materialized && blobs.back().materialized();
  }
  if (materialized) {
    auto w = archive::create_archive(std::make_unique<archive::MemorySink>());
    for (std::size_t i = 0; i < blobs.size(); ++i) w.append_member(p.members[i].first, *blobs[i].bytes);
    w.finalize();
    p.archive = store::Blob::of(static_cast<archive::MemorySink&>(w.sink()).take());
  } else {
    std::vector<archive::DirectoryEntry> entries;
    entries.reserve(p.members.size());
    for (const auto& [name, size] : p.members) entries.push_back({name, 0, size, 0});
    p.archive = store::Blob::sized(archive::encoded_size(entries));
  }
  state.staged.clear();
  state.buffered_bytes = 0;
  state.flushing = true;
  return p;
}

FlushRecord complete_flush(CollectorState& state, PendingFlush pending, store::Store& ifs, store::Store& gfs,
                           SimTime now, const CollectorPolicy& policy,
                           const std::function<bool(const std::string&)>& retain) {
  try {
    gfs.put(pending.gfs_path, pending.archive);
  } catch (...) {
    for (const auto& [name, size] : pending.members) {
      state.staged[name] = size;
      state.buffered_bytes += size;
    }
    state.flushing = false;
    throw;
  }
  for (const auto& [name, size] : pending.members) {
    const auto [dir, leaf] = split_path(name);
    if (retain && retain(name)) {
      const std::string to_dir = under(kCacheDir, dir);
      ifs.make_dir(to_dir);
      ifs.atomic_move(under(kStagingDir, dir), to_dir, leaf);
    } else {
      ifs.remove(join_path(kStagingDir, name));
    }
  }
  FlushRecord rec;
  rec.time = now;
  rec.ifs_node = state.ifs_node;
  rec.reason = pending.reason;
  rec.bytes = pending.archive.size;
  rec.block_writes = (pending.archive.size + policy.gfs_block_size - 1) / policy.gfs_block_size;
  rec.archive_name = pending.name;
  rec.members.reserve(pending.members.size());
  for (auto& m : pending.members) rec.members.push_back(std::move(m.first));
  state.last_write = now;
  state.flushing = false;
  state.history.push_back(rec);
  return rec;
}

std::optional<FlushRecord> flush_to_gfs(CollectorState& state, store::Store& ifs, store::Store& gfs, SimTime now,
                                        const CollectorPolicy& policy, FlushReason reason) {
  auto pending = begin_flush(state, ifs, reason);
  if (!pending) return std::nullopt;
  return complete_flush(state, std::move(*pending), ifs, gfs, now, policy);
}

std::string baseline_directory(NodeId node, const std::string& output_name) {
  return join_path("n" + std::to_string(node.index), split_path(output_name).first);
}

std::vector<GfsWrite> synchronous_baseline_write(const workload::TaskSpec& task, NodeId node, store::Store& lfs,
                                                 store::Store& gfs) {
  std::vector<GfsWrite> writes;
  for (const auto& out : task.outputs) {
    const auto blob = store::read_blob(lfs, out.name);
    GfsWrite w{join_path("n" + std::to_string(node.index), out.name), baseline_directory(node, out.name), blob.size};
    gfs.put(w.path, blob);
    lfs.remove(out.name);
    writes.push_back(std::move(w));
  }
  return writes;
}

ArchiveAudit audit_archives(const store::Store& gfs, const std::map<std::string, std::uint32_t>& expected,
                            const std::string& root) {
  ArchiveAudit audit;
  const std::string prefix = root + "/";
  for (const auto& [path, size] : gfs.snapshot()) {
    if (path.rfind(prefix, 0) != 0) continue;
    ++audit.archives;
    const auto bytes = gfs.get(path);
    archive::MemorySource src(bytes);
    const auto reader = archive::open_archive(src);
    for (const auto& status : reader.verify()) {
      ++audit.appearances[status.path];
      auto it = expected.find(status.path);
      if (!status.ok || (it != expected.end() && it->second != status.actual_crc32)) {
        audit.bad_members.push_back(status.path);
      }
    }
  }
  for (const auto& [name, count] : audit.appearances) {
    if (count > 1) audit.duplicated.push_back(name);
  }
  for (const auto& [name, crc] : expected) {
    if (!audit.appearances.count(name)) audit.missing.push_back(name);
  }
  return audit;
}

void write_flush_csv(std::ostream& out, const std::vector<FlushRecord>& flushes) {
  out << "time_us,ifs_node,reason,members,bytes,archive_name\n";
  for (const auto& f : flushes) {
    out << f.time.us << ',' << f.ifs_node.index << ',' << to_string(f.reason) << ',' << f.members.size() << ','
        << f.bytes << ',' << f.archive_name << '\n';
  }
}

}  // namespace cio::collect
