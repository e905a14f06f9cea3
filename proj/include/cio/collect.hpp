#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cio/cluster.hpp"
#include "cio/common.hpp"
#include "cio/store.hpp"
#include "cio/workload.hpp"

namespace cio::collect {

using cluster::NodeId;

struct CollectorPolicy {
  double max_delay_s = 10.0;
  std::uint64_t max_data = 256 * MiB;
  std::uint64_t min_free_space = 128 * MiB;
  std::uint64_t gfs_block_size = 4 * MiB;

  void validate() const;
};

enum class FlushReason { none, delay, data, space, forced, drain };
const char* to_string(FlushReason r);

struct FlushDecision {
  bool flush = false;
  FlushReason reason = FlushReason::none;
  friend bool operator==(const FlushDecision&, const FlushDecision&) = default;
};

/// IFS directory layout used by a collector.
inline constexpr const char* kIncomingDir = "incoming";
inline constexpr const char* kStagingDir = "staging";
inline constexpr const char* kCacheDir = "cache";

struct FlushRecord {
  SimTime time;  // completion
  NodeId ifs_node;
  FlushReason reason = FlushReason::none;
  std::vector<std::string> members;
  std::uint64_t bytes = 0;  // archive size
  std::uint64_t block_writes = 0;
  std::string archive_name;
};

struct CollectorState {
  NodeId ifs_node;
  std::map<std::string, std::uint64_t> staged;  // output name -> size, excluding an in-flight flush
  std::uint64_t buffered_bytes = 0;
  SimTime last_write;
  std::uint64_t flush_seq = 0;
  bool flushing = false;
  std::vector<FlushRecord> history;
};

/// Strict comparisons; reason precedence is delay, data, space.
FlushDecision should_flush(SimTime last_write, std::uint64_t buffered, std::uint64_t ifs_free, SimTime now,
                           const CollectorPolicy& policy);
FlushDecision should_flush(const CollectorState& state, const store::Store& ifs, SimTime now,
                           const CollectorPolicy& policy);

/// Copies the task's outputs from `lfs` into the IFS incoming area, moves
/// each atomically into staging and deletes the LFS copy. If the IFS is full,
/// `on_full` runs (normally a forced flush) and the copy is retried once.
std::vector<store::FileObject> stage_task_output(const workload::TaskSpec& task, store::Store& lfs,
                                                 store::Store& ifs, CollectorState& state,
                                                 const std::function<void()>& on_full = {});

std::string archive_name(NodeId ifs_node, std::uint64_t seq);
/// GFS path of an archive: cio/<ifs_node>/<archive name>.
std::string archive_path(NodeId ifs_node, std::uint64_t seq);

/// A flush between taking its snapshot and landing on GFS.
struct PendingFlush {
  std::uint64_t seq = 0;
  FlushReason reason = FlushReason::none;
  std::vector<std::pair<std::string, std::uint64_t>> members;
  store::Blob archive;  // materialized when every member was
  std::string gfs_path;
  std::string name;
};

/// Snapshots the staging set into an archive image. Returns nothing when
/// staging is empty. Members stay on the IFS until complete_flush.
std::optional<PendingFlush> begin_flush(CollectorState& state, const store::Store& ifs, FlushReason reason);

/// Writes the archive to GFS, then drops the members from staging. Members
/// for which `retain` is true move to the IFS cache instead. If the GFS write
/// fails the members return to staging and the error propagates.
FlushRecord complete_flush(CollectorState& state, PendingFlush pending, store::Store& ifs, store::Store& gfs,
                           SimTime now, const CollectorPolicy& policy,
                           const std::function<bool(const std::string&)>& retain = {});

/// begin_flush + complete_flush at one instant.
std::optional<FlushRecord> flush_to_gfs(CollectorState& state, store::Store& ifs, store::Store& gfs, SimTime now,
                                        const CollectorPolicy& policy, FlushReason reason = FlushReason::drain);

/// Per-node directory used by GFS-direct writes.
std::string baseline_directory(NodeId node, const std::string& output_name);

struct GfsWrite {
  std::string path;
  std::string directory;
  std::uint64_t bytes = 0;
};

/// Writes every output of the task as its own GFS file under the node's
/// directory, one create and one write each, and removes the LFS copy.
std::vector<GfsWrite> synchronous_baseline_write(const workload::TaskSpec& task, NodeId node, store::Store& lfs,
                                                 store::Store& gfs);

/// Cross-check of archives on GFS against expected outputs.
struct ArchiveAudit {
  std::map<std::string, std::uint32_t> appearances;  // member -> number of archives holding it
  std::vector<std::string> bad_members;              // failed checksum or expected crc
  std::vector<std::string> missing;
  std::vector<std::string> duplicated;
  std::size_t archives = 0;

  bool ok() const { return bad_members.empty() && missing.empty() && duplicated.empty(); }
};

/// Opens every archive under `root` on `gfs`, verifies each member and
/// compares against `expected` (output name -> crc32).
ArchiveAudit audit_archives(const store::Store& gfs, const std::map<std::string, std::uint32_t>& expected,
                            const std::string& root = "cio");

/// `time_us,ifs_node,reason,members,bytes,archive_name`
void write_flush_csv(std::ostream& out, const std::vector<FlushRecord>& flushes);

}  // namespace cio::collect
