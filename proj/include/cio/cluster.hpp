#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cio/common.hpp"

namespace cio::cluster {

struct NodeId {
  std::uint32_t index = 0;
  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

enum class NodeRole { executor, ifs_server, io_node, gfs_server };
enum class LinkClass { torus, collective_tree, gfs_uplink, node_local };

const char* to_string(NodeRole role);
const char* to_string(LinkClass cls);

/// Named bundle of link rates (MB/s) and GFS parameters.
struct CalibrationProfile {
  std::string name = "bgp-2008";
  double torus_mbps = 140.0;        // effective point-to-point torus rate per NIC direction
  double tree_mbps = 760.0;         // collective network, per pset and direction
  double gfs_mbps = 2400.0;         // GFS aggregate
  double lfs_mbps = 1500.0;         // RAM-disk copy rate on one node
  double create_latency_s = 4.0;    // service demand of one GFS file creation
  double create_contention = 2000;  // in-service creates at which metadata throughput peaks; 0 = none
  bool same_dir_serialize = true;
  std::uint64_t lfs_capacity = 1 * GiB;
  std::uint64_t ifs_capacity = 64 * GiB;

  void validate() const;
};

/// Known names: "bgp-2008" (measured-rate calibration) and "unit" (round
/// numbers with no GFS create cost, handy for tests).
CalibrationProfile profile_by_name(const std::string& name);

struct TopologyConfig {
  std::uint32_t compute_nodes = 0;
  std::uint32_t pset_size = 64;
  std::uint32_t ifs_per_pset = 1;
  std::uint32_t cores_per_node = 1;
  CalibrationProfile profile;
};

/// Immutable cluster description. Compute nodes occupy ids [0, N), IO nodes
/// [N, N + psets) and the GFS server is the last id.
class Topology {
 public:
  std::uint32_t compute_count() const { return compute_count_; }
  std::uint32_t node_count() const { return static_cast<std::uint32_t>(roles_.size()); }
  std::uint32_t pset_size() const { return pset_size_; }
  std::uint32_t ifs_per_pset() const { return ifs_per_pset_; }
  std::uint32_t pset_count() const { return pset_count_; }
  std::uint32_t cores_per_node() const { return cores_per_node_; }
  const CalibrationProfile& profile() const { return profile_; }

  bool contains(NodeId n) const { return n.index < roles_.size(); }
  bool is_compute(NodeId n) const { return n.index < compute_count_; }
  std::uint32_t pset_of(NodeId compute_node) const;
  NodeId io_node(std::uint32_t pset) const { return NodeId{compute_count_ + pset}; }
  NodeId gfs_node() const { return NodeId{compute_count_ + pset_count_}; }

  std::span<const NodeId> executors() const { return executors_; }
  std::span<const NodeId> ifs_servers() const { return ifs_servers_; }
  /// IFS servers belonging to one pset, lowest id first.
  std::vector<NodeId> ifs_servers_in(std::uint32_t pset) const;

  double capacity_mbps(LinkClass cls) const;

 private:
  friend Topology build_topology(const TopologyConfig& config);
  friend NodeRole role_of(const Topology& topology, NodeId node);
  friend NodeId ifs_server_for(const Topology& topology, NodeId node);

  std::uint32_t compute_count_ = 0;
  std::uint32_t pset_size_ = 1;
  std::uint32_t ifs_per_pset_ = 0;
  std::uint32_t pset_count_ = 0;
  std::uint32_t cores_per_node_ = 1;
  CalibrationProfile profile_;
  std::vector<NodeRole> roles_;
  std::vector<NodeId> ifs_of_;  // per compute node; self for servers
  std::vector<NodeId> executors_;
  std::vector<NodeId> ifs_servers_;
};

Topology build_topology(const TopologyConfig& config);
NodeRole role_of(const Topology& topology, NodeId node);
NodeId ifs_server_for(const Topology& topology, NodeId node);

/// Link class used between two node roles; throws for pairs with no link.
LinkClass link_class_between(NodeRole a, NodeRole b);

}  // namespace cio::cluster

template <>
struct std::hash<cio::cluster::NodeId> {
  std::size_t operator()(cio::cluster::NodeId n) const noexcept { return n.index; }
};
