#include "cio/cluster.hpp"

#include <algorithm>

namespace cio::cluster {

const char* to_string(NodeRole role) {
  switch (role) {
    case NodeRole::executor: return "executor";
    case NodeRole::ifs_server: return "ifs-server";
    case NodeRole::io_node: return "io-node";
    case NodeRole::gfs_server: return "gfs-server";
  }
  return "?";
}

const char* to_string(LinkClass cls) {
  switch (cls) {
    case LinkClass::torus: return "torus";
    case LinkClass::collective_tree: return "collective-tree";
    case LinkClass::gfs_uplink: return "gfs-uplink";
    case LinkClass::node_local: return "node-local";
  }
  return "?";
}

void CalibrationProfile::validate() const {
  if (!(torus_mbps > 0 && tree_mbps > 0 && gfs_mbps > 0 && lfs_mbps > 0)) {
    throw Error(ErrorCode::config, "profile '" + name + "': all rates must be positive");
  }
  if (create_latency_s < 0 || create_contention < 0) {
    throw Error(ErrorCode::config, "profile '" + name + "': latencies must be non-negative");
  }
  if (lfs_capacity == 0 || ifs_capacity == 0) {
    throw Error(ErrorCode::config, "profile '" + name + "': store capacities must be positive");
  }
}

CalibrationProfile profile_by_name(const std::string& name) {
  if (name == "bgp-2008") return CalibrationProfile{};
  if (name == "unit") {
    CalibrationProfile p;
    p.name = "unit";
    p.torus_mbps = 100.0;
    p.tree_mbps = 400.0;
    p.gfs_mbps = 1000.0;
    p.lfs_mbps = 1000.0;
    p.create_latency_s = 0.0;
    p.create_contention = 0.0;
    p.same_dir_serialize = false;
    p.lfs_capacity = 2 * GiB;
    return p;
  }
  throw Error(ErrorCode::config, "unknown calibration profile '" + name + "'");
}

std::uint32_t Topology::pset_of(NodeId compute_node) const {
  if (!is_compute(compute_node)) {
    throw Error(ErrorCode::invalid_argument,
                "node " + std::to_string(compute_node.index) + " is not a compute node");
  }
  return compute_node.index / pset_size_;
}

std::vector<NodeId> Topology::ifs_servers_in(std::uint32_t pset) const {
  std::vector<NodeId> out;
  const std::uint32_t first = pset * pset_size_;
  const std::uint32_t last = std::min(first + pset_size_, compute_count_);
  for (std::uint32_t i = first; i < last; ++i) {
    if (roles_[i] == NodeRole::ifs_server) out.push_back(NodeId{i});
  }
  return out;
}

double Topology::capacity_mbps(LinkClass cls) const {
  switch (cls) {
    case LinkClass::torus: return profile_.torus_mbps;
    case LinkClass::collective_tree: return profile_.tree_mbps;
    case LinkClass::gfs_uplink: return profile_.gfs_mbps;
    case LinkClass::node_local: return profile_.lfs_mbps;
  }
  return 0;
}

Topology build_topology(const TopologyConfig& config) {
  if (config.compute_nodes == 0) {
    throw Error(ErrorCode::config, "topology needs at least one compute node");
  }
  if (config.pset_size == 0) throw Error(ErrorCode::config, "pset_size must be >= 1");
  if (config.ifs_per_pset >= config.pset_size) {
    throw Error(ErrorCode::config, "ifs_per_pset must be smaller than pset_size");
  }
  if (config.cores_per_node == 0) throw Error(ErrorCode::config, "cores_per_node must be >= 1");
  config.profile.validate();

  Topology t;
  t.compute_count_ = config.compute_nodes;
  t.pset_size_ = config.pset_size;
  t.ifs_per_pset_ = config.ifs_per_pset;
  t.cores_per_node_ = config.cores_per_node;
  t.profile_ = config.profile;
  t.pset_count_ = (config.compute_nodes + config.pset_size - 1) / config.pset_size;

  const std::uint32_t n = config.compute_nodes;
  t.roles_.assign(n, NodeRole::executor);
  t.ifs_of_.assign(n, NodeId{0});
  for (std::uint32_t p = 0; p < t.pset_count_; ++p) {
    const std::uint32_t first = p * config.pset_size;
    const std::uint32_t size = std::min(config.pset_size, n - first);
    if (config.ifs_per_pset >= size) {
      throw Error(ErrorCode::config, "pset " + std::to_string(p) + " has " + std::to_string(size) +
                                         " nodes, too few for " +
                                         std::to_string(config.ifs_per_pset) + " IFS servers");
    }
    for (std::uint32_t k = 0; k < config.ifs_per_pset; ++k) {
      t.roles_[first + k] = NodeRole::ifs_server;
      t.ifs_of_[first + k] = NodeId{first + k};
      t.ifs_servers_.push_back(NodeId{first + k});
    }
    for (std::uint32_t j = 0; j + config.ifs_per_pset < size; ++j) {
      const NodeId exec{first + config.ifs_per_pset + j};
      t.executors_.push_back(exec);
      if (config.ifs_per_pset > 0) {
        t.ifs_of_[exec.index] = NodeId{first + j % config.ifs_per_pset};
      }
    }
  }
  for (std::uint32_t p = 0; p < t.pset_count_; ++p) t.roles_.push_back(NodeRole::io_node);
  t.roles_.push_back(NodeRole::gfs_server);
  return t;
}

NodeRole role_of(const Topology& topology, NodeId node) {
  if (!topology.contains(node)) {
    throw Error(ErrorCode::not_found, "unknown node " + std::to_string(node.index));
  }
  return topology.roles_[node.index];
}

NodeId ifs_server_for(const Topology& topology, NodeId node) {
  if (topology.ifs_per_pset_ == 0) {
    throw Error(ErrorCode::invalid_argument, "topology has no IFS servers");
  }
  if (role_of(topology, node) != NodeRole::executor) {
    throw Error(ErrorCode::invalid_argument,
                "node " + std::to_string(node.index) + " is not an executor");
  }
  return topology.ifs_of_[node.index];
}

LinkClass link_class_between(NodeRole a, NodeRole b) {
  auto compute = [](NodeRole r) { return r == NodeRole::executor || r == NodeRole::ifs_server; };
  if (compute(a) && compute(b)) return LinkClass::torus;
  if ((compute(a) && b == NodeRole::io_node) || (a == NodeRole::io_node && compute(b))) {
    return LinkClass::collective_tree;
  }
  if (a == NodeRole::gfs_server || b == NodeRole::gfs_server) return LinkClass::gfs_uplink;
  throw Error(ErrorCode::invalid_argument, std::string("no link between ") + to_string(a) +
                                               " and " + to_string(b));
}

}  // namespace cio::cluster
