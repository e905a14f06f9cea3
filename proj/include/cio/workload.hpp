#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cio/cluster.hpp"
#include "cio/common.hpp"

namespace cio::workload {

struct OutputSpec {
  std::string name;
  std::uint64_t size = 0;
  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct TaskSpec {
  std::uint64_t id = 0;
  std::uint32_t stage = 1;
  double compute_seconds = 0;
  std::vector<std::string> inputs;
  std::vector<OutputSpec> outputs;
  std::optional<std::uint32_t> pinned_node;  // set for run_on_all instances
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct Workload {
  std::vector<TaskSpec> tasks;
  std::map<std::string, std::uint64_t> manifest;  // objects already on GFS

  /// Every object name with its size: manifest entries plus task outputs.
  std::map<std::string, std::uint64_t> objects() const;
  std::uint64_t total_output_bytes() const;
  friend bool operator==(const Workload&, const Workload&) = default;
};

/// Empty result means the workload is valid. Each message names the task ids
/// involved.
std::vector<std::string> validate(const Workload& w);
/// Throws invalid_argument with all messages joined.
void validate_or_throw(const Workload& w);

/// Writer and reader lookups for a validated workload.
class DataflowIndex {
 public:
  explicit DataflowIndex(const Workload& w);
  /// Index into w.tasks of the task writing `object`, if any.
  std::optional<std::size_t> writer_of(const std::string& object) const;
  /// Indices of distinct tasks reading `object`, ascending.
  const std::vector<std::size_t>& readers_of(const std::string& object) const;
  std::optional<std::size_t> index_of(std::uint64_t task_id) const;

 private:
  std::unordered_map<std::string, std::size_t> writer_;
  std::unordered_map<std::string, std::vector<std::size_t>> readers_;
  std::unordered_map<std::uint64_t, std::size_t> by_id_;
  std::vector<std::size_t> none_;
};

/// True iff every input written by some task has its writer in `completed`.
bool dataflow_ready(const TaskSpec& task, const std::set<std::uint64_t>& completed, const Workload& w);
bool dataflow_ready(const TaskSpec& task, const std::set<std::uint64_t>& completed, const Workload& w,
                    const DataflowIndex& index);

struct SyntheticParams {
  std::uint64_t n_tasks = 0;
  double compute_seconds = 4.0;
  std::uint64_t output_size = 1 * KiB;
  std::uint64_t output_size_max = 0;  // > output_size draws sizes uniformly in between
  std::uint64_t shared_input_size = 0;
  std::uint64_t per_task_input_size = 0;
  std::uint64_t seed = 1;
};

Workload generate_synthetic(const SyntheticParams& p);

struct DockParams {
  double stage1_seconds = 550.0;
  std::uint64_t output_size = 10 * KiB;
  std::uint64_t shared_input_size = 5 * MiB;  // receptor set, read by every docking task
  std::uint64_t per_task_input_size = 5 * KiB;
  std::uint32_t stage2_shards = 0;  // 0 or 1: one summarize task; otherwise shards + merge
  double stage2_seconds_per_mb = 4.63;
  double select_fraction = 0.05;    // share of scanned bytes kept by summarize/select
  double stage3_seconds = 25.0;
};

Workload dock_like_workflow(std::uint64_t n_stage1_tasks, const DockParams& p);

/// One instance of `tmpl` per executor, pinned to it. "{node}" in input and
/// output names is replaced by the executor's node index. Ids count up from
/// `first_id`.
std::vector<TaskSpec> run_on_all(const TaskSpec& tmpl, const cluster::Topology& topology,
                                 std::uint64_t first_id);

void write_workload(std::ostream& out, const Workload& w);
Workload read_workload(std::istream& in);
Workload load_workload(const std::string& path);
void save_workload(const std::string& path, const Workload& w);

}  // namespace cio::workload
