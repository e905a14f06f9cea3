#include "cio/harness.hpp"

namespace cio::harness {

using cluster::NodeId;

DistributionBench distribution_benchmark(std::uint32_t nodes, std::uint64_t bytes,
                                         const cluster::CalibrationProfile& profile) {
  if (nodes == 0 || bytes == 0) throw Error(ErrorCode::invalid_argument, "benchmark needs nodes and bytes");
  cluster::TopologyConfig tc;
  tc.compute_nodes = nodes;
  tc.ifs_per_pset = 0;
  tc.profile = profile;
  const auto topo = cluster::build_topology(tc);
  std::vector<NodeId> all(topo.executors().begin(), topo.executors().end());

  auto run = [&](distribute::Method method) {
    distribute::Placement p;
    p.object = "bench/input";
    p.size = bytes;
    p.access = {distribute::AccessPattern::read_many, nodes};
    p.tier = store::Tier::lfs;
    p.method = method;
    p.targets = all;
    distribute::PlacementPlan plan{{p}};
    simnet::Network net(topo, simnet::GfsModel::from_profile(profile));
    auto stores = distribute::make_memory_stores(topo);
    stores.gfs->put(p.object, store::Blob::sized(bytes));
    auto r = distribute::execute_plan(plan, net, stores);
    if (!r.complete) throw Error(ErrorCode::runtime, "distribution benchmark failed: " + r.error);
    return r;
  };
  DistributionBench b;
  b.nodes = nodes;
  b.bytes = bytes;
  const auto naive = run(distribute::Method::direct_read);
  const auto tree = run(distribute::Method::broadcast);
  b.naive_us = naive.elapsed_us;
  b.tree_us = tree.elapsed_us;
  b.naive_mbps = distribute::equivalent_throughput(nodes, bytes, naive.elapsed_us);
  b.tree_mbps = distribute::equivalent_throughput(nodes, bytes, tree.elapsed_us);
  b.tree_gfs_reads = tree.gfs_reads;
  return b;
}

StripeBench stripe_benchmark(std::uint32_t width, std::uint32_t readers, std::uint64_t object_bytes,
                             std::uint64_t chunk_size, const cluster::CalibrationProfile& profile) {
  if (width == 0 || readers == 0) throw Error(ErrorCode::invalid_argument, "stripe benchmark needs servers and readers");
  cluster::TopologyConfig tc;
  tc.compute_nodes = width + readers;
  tc.pset_size = tc.compute_nodes;
  tc.ifs_per_pset = 0;
  tc.profile = profile;
  const auto topo = cluster::build_topology(tc);

  std::vector<std::shared_ptr<store::Store>> servers;
  for (std::uint32_t i = 0; i < width; ++i) {
    servers.push_back(std::make_shared<store::MemoryStore>(store::Tier::lfs, profile.lfs_capacity));
  }
  store::StripedStore ifs(servers, chunk_size);
  const auto map = ifs.put("bench/striped", store::Blob::sized(object_bytes));

  simnet::Network net(topo, simnet::GfsModel::from_profile(profile));
  for (std::uint32_t r = 0; r < readers; ++r) {
    for (const auto& c : map.chunks) net.submit_flow(NodeId{c.server}, NodeId{width + r}, c.length, net.now());
  }
  while (auto t = net.next_event_time()) net.advance_to(*t);
  StripeBench b;
  b.width = width;
  b.readers = readers;
  b.elapsed_us = net.now().us;
  b.aggregate_mbps = aggregate_throughput(object_bytes * readers, b.elapsed_us);
  return b;
}

}  // namespace cio::harness
