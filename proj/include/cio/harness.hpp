#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cio/cluster.hpp"
#include "cio/collect.hpp"
#include "cio/distribute.hpp"
#include "cio/simnet.hpp"
#include "cio/workload.hpp"

namespace cio::harness {

enum class Mode { cio, gfs_direct };
const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct WorkloadSource {
  enum class Kind { synthetic, dock, file } kind = Kind::synthetic;
  std::string path;
  workload::SyntheticParams synthetic;
  std::uint64_t dock_tasks = 0;
  workload::DockParams dock;
  bool dock_auto_shards = true;  // CIO mode: one stage-2 shard per IFS
};

struct ScenarioConfig {
  cluster::TopologyConfig topology;
  Mode mode = Mode::cio;
  double dispatch_rate = 1000.0;  // tasks per second
  std::uint64_t seed = 1;
  distribute::PlacementPolicy placement;
  collect::CollectorPolicy collector;
  WorkloadSource workload;
  std::string output_dir;
  bool flow_log = false;
  bool materialize = false;  // carry real bytes through every store

  void validate() const;
};

/// Parses an INI file with sections [topology] [mode] [placement]
/// [collector] [workload] [output]. Sizes accept B/KB/MB/GB suffixes
/// (binary multiples). Unknown keys are errors.
ScenarioConfig parse_config(std::istream& in);
ScenarioConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const ScenarioConfig& c);
std::uint64_t parse_size(const std::string& text);

/// Applies "key=value,key=value" overrides onto a workload source, as given
/// by --synthetic or --dock on the command line.
void apply_workload_overrides(WorkloadSource& src, WorkloadSource::Kind kind, const std::string& spec);

workload::Workload build_workload(const ScenarioConfig& c, const cluster::Topology& topology);

struct TaskRecord {
  std::uint64_t id = 0;
  std::uint32_t node = 0;
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::uint32_t stage = 1;
};

struct StageTime {
  std::uint32_t stage = 0;
  std::int64_t first_start_us = 0;
  std::int64_t last_end_us = 0;
  std::int64_t elapsed_us = 0;  // share of the makespan attributed to this stage
};

struct RunReport {
  Mode mode = Mode::cio;
  std::int64_t makespan_us = 0;
  std::int64_t ideal_makespan_us = 0;
  std::vector<TaskRecord> tasks;  // by id
  std::vector<collect::FlushRecord> flushes;
  distribute::DistributionReport distribution;
  distribute::PlacementPlan plan;
  std::map<cluster::LinkClass, std::uint64_t> bytes_by_link;
  std::uint64_t payload_bytes = 0;  // task output bytes
  std::uint32_t executors = 0;      // executor nodes
  std::uint32_t cores = 0;
  std::uint64_t gfs_creates = 0;
  std::vector<simnet::Event> flow_log;
  /// Final GFS contents; kept only when output bytes were materialized.
  std::shared_ptr<const store::Store> gfs;
};

/// Zero-IO makespan of `w` under the same dispatcher: FIFO by id, free cores
/// in the order they became free, at most `dispatch_rate` starts per second.
std::int64_t ideal_makespan_us(const workload::Workload& w, const cluster::Topology& topology, double dispatch_rate);

struct RunOptions {
  /// Directory-backed stores rooted here instead of in-memory ones.
  std::optional<std::filesystem::path> store_root;
  /// Worker threads producing task output bytes (emulation).
  unsigned workers = 0;
};

RunReport run_scenario(const ScenarioConfig& config, const workload::Workload& w, const RunOptions& options = {});
RunReport run_scenario(const ScenarioConfig& config);
/// run_scenario against directory stores under `<output_dir>/stores` with a
/// worker pool; content is always materialized.
RunReport emulate_scenario(ScenarioConfig config, const workload::Workload& w, unsigned workers = 4);

double efficiency(const RunReport& r);
double aggregate_throughput(const RunReport& r);  // MB/s of task output
double per_node_throughput(const RunReport& r);
double aggregate_throughput(std::uint64_t bytes, std::int64_t elapsed_us);
std::vector<StageTime> stage_breakdown(const RunReport& r);

/// Deterministic payload of an object, a function of its name, size and seed.
store::Bytes object_content(const std::string& name, std::uint64_t size, std::uint64_t seed);

/// Writes tasks.csv, flows.csv, flushes.csv, distribution.csv, metrics.csv,
/// plus workload.txt and config.ini so that `report` can recompute.
void emit_csv(const RunReport& r, const ScenarioConfig& c, const workload::Workload& w,
              const std::filesystem::path& dir);
void write_tasks_csv(std::ostream& out, const std::vector<TaskRecord>& tasks);
void write_metrics_csv(std::ostream& out, const RunReport& r);
std::string emit_summary(const RunReport& r);

struct Metrics {
  std::int64_t makespan_us = 0;
  std::int64_t ideal_makespan_us = 0;
  double efficiency = 0;
  std::uint64_t payload_bytes = 0;
  double aggregate_mbps = 0;
  double per_node_mbps = 0;
  std::uint32_t executors = 0;
  std::uint64_t tasks = 0;
  std::uint64_t flushes = 0;
};

Metrics metrics_of(const RunReport& r);
/// Re-derives metrics from a run directory's CSVs, workload and config.
Metrics recompute_metrics(const std::filesystem::path& dir);
/// Metrics as written in metrics.csv.
Metrics read_metrics_csv(const std::filesystem::path& file);

struct DistributionBench {
  std::uint32_t nodes = 0;
  std::uint64_t bytes = 0;  // per node
  std::int64_t naive_us = 0;
  std::int64_t tree_us = 0;
  double naive_mbps = 0;  // equivalent throughput, nodes * bytes / time
  double tree_mbps = 0;
  std::uint64_t tree_gfs_reads = 0;
};

/// One object of `bytes` delivered to the LFS of every compute node, once by
/// each node reading GFS directly and once by spanning-tree broadcast.
DistributionBench distribution_benchmark(std::uint32_t nodes, std::uint64_t bytes,
                                         const cluster::CalibrationProfile& profile);

struct StripeBench {
  std::uint32_t width = 0;
  std::uint32_t readers = 0;
  std::int64_t elapsed_us = 0;
  double aggregate_mbps = 0;
};

/// `readers` nodes each read a whole object striped over `width` servers,
/// every chunk as its own concurrent flow.
StripeBench stripe_benchmark(std::uint32_t width, std::uint32_t readers, std::uint64_t object_bytes,
                             std::uint64_t chunk_size, const cluster::CalibrationProfile& profile);

}  // namespace cio::harness
