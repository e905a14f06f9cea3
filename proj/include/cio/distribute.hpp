#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cio/cluster.hpp"
#include "cio/simnet.hpp"
#include "cio/store.hpp"
#include "cio/workload.hpp"

namespace cio::distribute {

using cluster::NodeId;

enum class AccessPattern { read_many, read_few };
const char* to_string(AccessPattern p);

struct AccessClass {
  AccessPattern variant = AccessPattern::read_few;
  std::uint64_t reader_count = 0;
  friend bool operator==(const AccessClass&, const AccessClass&) = default;
};

/// Reader counts for every object a task reads or the manifest lists.
std::map<std::string, AccessClass> classify_access(const workload::Workload& w,
                                                   std::uint64_t read_many_threshold = 2);

struct PlacementPolicy {
  std::uint64_t lfs_max_bytes = 256 * MiB;
  std::uint64_t read_many_threshold = 2;
  bool broadcast_to_lfs = false;  // replicate read-many objects to every executor LFS instead of IFSs

  void validate() const;
};

enum class Method { broadcast, direct_read, stage_once };
const char* to_string(Method m);

struct Placement {
  std::string object;
  std::uint64_t size = 0;
  AccessClass access;
  store::Tier tier = store::Tier::lfs;
  Method method = Method::direct_read;
  /// Empty with `deferred` set when the reader is only known at dispatch.
  std::vector<NodeId> targets;
  bool deferred = false;
  friend bool operator==(const Placement&, const Placement&) = default;
};

/// One placement per GFS-resident object that some task reads. Objects
/// produced by tasks are moved by the collector, not planned here.
struct PlacementPlan {
  std::vector<Placement> placements;
  const Placement* find(const std::string& object) const;
  friend bool operator==(const PlacementPlan&, const PlacementPlan&) = default;
};

PlacementPlan plan_placement(const workload::Workload& w, const cluster::Topology& topology,
                             const PlacementPolicy& policy);

/// Node that receives a deferred read-few object for a reader on `reader`.
NodeId bind_target(const Placement& p, NodeId reader, const cluster::Topology& topology);

struct BroadcastSchedule {
  NodeId source;
  std::vector<std::vector<std::pair<NodeId, NodeId>>> rounds;  // (sender, receiver)
  std::size_t n = 0;

  std::size_t transfers() const;
};

/// Doubling schedule: every holder, lowest id first, serves the lowest
/// pending receiver each round.
BroadcastSchedule spanning_tree_schedule(NodeId src, const std::vector<NodeId>& dests);

/// Node that fetches a broadcast object from GFS before the tree fan-out: the
/// lowest-id compute node in the first destination's pset that is not itself
/// a destination, or the first destination when every node there is one.
NodeId broadcast_root(const std::vector<NodeId>& sorted_dests, const cluster::Topology& topology);

/// Per-node stores of a cluster. IFS entries exist only for IFS servers.
struct ClusterStores {
  std::shared_ptr<store::Store> gfs;
  std::unordered_map<std::uint32_t, std::shared_ptr<store::Store>> lfs;
  std::unordered_map<std::uint32_t, std::shared_ptr<store::Store>> ifs;

  store::Store& at(NodeId node, store::Tier tier) const;
};

ClusterStores make_memory_stores(const cluster::Topology& topology,
                                 std::uint64_t gfs_capacity = std::uint64_t{1} << 50);

struct DistributionRow {
  std::string object;
  Method method = Method::direct_read;
  std::uint64_t bytes = 0;
  std::uint64_t placements = 0;
  std::int64_t elapsed_us = 0;
  double equivalent_mbps = 0;
};

struct DistributionReport {
  std::vector<DistributionRow> rows;
  std::uint64_t gfs_reads = 0;
  std::uint64_t node_transfers = 0;
  std::uint64_t bytes_placed = 0;
  std::int64_t elapsed_us = 0;
  bool complete = false;
  std::string error;  // set when execution aborted part way
};

/// Runs every non-deferred placement concurrently from the network's current
/// time and materializes the copies in `stores`. Broadcasts fetch once from
/// GFS into the root and fan out over the torus per spanning_tree_schedule.
DistributionReport execute_plan(const PlacementPlan& plan, simnet::Network& net, const ClusterStores& stores);

/// nodes * data size / time, in MB/s.
double equivalent_throughput(std::uint64_t nodes, std::uint64_t bytes_per_node, std::int64_t elapsed_us);
double equivalent_throughput(const DistributionReport& report);

/// `object,method,bytes,placements,elapsed_us,equivalent_MBps`
void write_report_csv(std::ostream& out, const DistributionReport& report);

}  // namespace cio::distribute
