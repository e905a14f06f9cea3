#include "cio/distribute.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace cio::distribute {

const char* to_string(AccessPattern p) { return p == AccessPattern::read_many ? "read-many" : "read-few"; }

const char* to_string(Method m) {
  switch (m) {
    case Method::broadcast: return "broadcast";
    case Method::direct_read: return "direct-read";
    case Method::stage_once: return "stage-once";
  }
  return "?";
}

std::map<std::string, AccessClass> classify_access(const workload::Workload& w, std::uint64_t threshold) {
  std::map<std::string, AccessClass> out;
  for (const auto& [name, size] : w.manifest) out[name];
  for (const auto& t : w.tasks) {
    std::set<std::string> distinct(t.inputs.begin(), t.inputs.end());
    for (const auto& in : distinct) ++out[in].reader_count;
  }
  for (auto& [name, c] : out) {
    c.variant = c.reader_count >= threshold ? AccessPattern::read_many : AccessPattern::read_few;
  }
  return out;
}

void PlacementPolicy::validate() const {
  if (lfs_max_bytes == 0) throw Error(ErrorCode::config, "placement lfs_max_bytes must be positive");
  if (read_many_threshold == 0) throw Error(ErrorCode::config, "placement read_many_threshold must be positive");
}

const Placement* PlacementPlan::find(const std::string& object) const {
  for (const auto& p : placements) {
    if (p.object == object) return &p;
  }
  return nullptr;
}

PlacementPlan plan_placement(const workload::Workload& w, const cluster::Topology& topology,
                             const PlacementPolicy& policy) {
  policy.validate();
  const auto classes = classify_access(w, policy.read_many_threshold);
  const auto& profile = topology.profile();

  // Pinned reader nodes per object; an object with any unpinned reader is
  // bound at dispatch.
  std::map<std::string, std::set<std::uint32_t>> pinned;
  std::set<std::string> floating;
  for (const auto& t : w.tasks) {
    for (const auto& in : t.inputs) {
      if (t.pinned_node) {
        pinned[in].insert(*t.pinned_node);
      } else {
        floating.insert(in);
      }
    }
  }
  auto reader_nodes = [&](const std::string& obj) {
    std::vector<NodeId> out;
    for (auto n : pinned[obj]) out.push_back(NodeId{n});
    return out;
  };

  PlacementPlan plan;
  for (const auto& [name, size] : w.manifest) {
    const AccessClass access = classes.at(name);
    if (access.reader_count == 0) continue;
    Placement p;
    p.object = name;
    p.size = size;
    p.access = access;
    const bool fixed = !floating.count(name);

    if (size <= policy.lfs_max_bytes && size <= profile.lfs_capacity) {
      p.tier = store::Tier::lfs;
      p.method = Method::direct_read;
      if (fixed) {
        p.targets = reader_nodes(name);
      } else {
        p.deferred = true;
      }
      plan.placements.push_back(std::move(p));
      continue;
    }

    if (topology.ifs_servers().empty()) {
      throw Error(ErrorCode::unplaceable, "object '" + name + "' exceeds the LFS limit and the topology has no IFS");
    }
    if (size > profile.ifs_capacity) {
      throw Error(ErrorCode::unplaceable, "object '" + name + "' (" + std::to_string(size) +
                                              " bytes) is larger than IFS capacity");
    }
    if (access.variant == AccessPattern::read_few) {
      p.tier = store::Tier::ifs;
      p.method = Method::stage_once;
      if (fixed) {
        std::set<NodeId> servers;
        for (auto n : reader_nodes(name)) servers.insert(cluster::ifs_server_for(topology, n));
        p.targets.assign(servers.begin(), servers.end());
      } else {
        p.deferred = true;
      }
    } else if (policy.broadcast_to_lfs && size <= profile.lfs_capacity) {
      p.tier = store::Tier::lfs;
      p.method = Method::broadcast;
      if (fixed) {
        p.targets = reader_nodes(name);
      } else {
        p.targets.assign(topology.executors().begin(), topology.executors().end());
      }
    } else {
      p.tier = store::Tier::ifs;
      p.method = Method::broadcast;
      std::set<NodeId> servers;
      if (fixed) {
        for (auto n : reader_nodes(name)) servers.insert(cluster::ifs_server_for(topology, n));
      } else {
        servers.insert(topology.ifs_servers().begin(), topology.ifs_servers().end());
      }
      p.targets.assign(servers.begin(), servers.end());
    }
    plan.placements.push_back(std::move(p));
  }
  return plan;
}

NodeId bind_target(const Placement& p, NodeId reader, const cluster::Topology& topology) {
  return p.tier == store::Tier::ifs ? cluster::ifs_server_for(topology, reader) : reader;
}

std::size_t BroadcastSchedule::transfers() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.size();
  return n;
}

BroadcastSchedule spanning_tree_schedule(NodeId src, const std::vector<NodeId>& dests) {
  if (dests.empty()) throw Error(ErrorCode::invalid_argument, "broadcast needs at least one destination");
  std::vector<NodeId> pending = dests;
  std::sort(pending.begin(), pending.end());
  if (std::adjacent_find(pending.begin(), pending.end()) != pending.end()) {
    throw Error(ErrorCode::invalid_argument, "duplicate broadcast destination");
  }
  if (std::binary_search(pending.begin(), pending.end(), src)) {
    throw Error(ErrorCode::invalid_argument, "broadcast source is also a destination");
  }
  BroadcastSchedule s;
  s.source = src;
  s.n = pending.size();
  std::set<NodeId> holders{src};
  std::size_t next = 0;
  while (next < pending.size()) {
    std::vector<std::pair<NodeId, NodeId>> round;
    for (auto it = holders.begin(); it != holders.end() && next < pending.size(); ++it) {
      round.emplace_back(*it, pending[next++]);
    }
    for (const auto& [from, to] : round) holders.insert(to);
    s.rounds.push_back(std::move(round));
  }
  return s;
}

NodeId broadcast_root(const std::vector<NodeId>& sorted_dests, const cluster::Topology& topology) {
  if (sorted_dests.empty()) throw Error(ErrorCode::invalid_argument, "broadcast needs at least one destination");
  const NodeId first = sorted_dests.front();
  if (!topology.is_compute(first)) throw Error(ErrorCode::invalid_argument, "broadcast targets must be compute nodes");
  const std::uint32_t pset = topology.pset_of(first);
  const std::uint32_t begin = pset * topology.pset_size();
  const std::uint32_t end = std::min(topology.compute_count(), begin + topology.pset_size());
  for (std::uint32_t i = begin; i < end; ++i) {
    if (!std::binary_search(sorted_dests.begin(), sorted_dests.end(), NodeId{i})) return NodeId{i};
  }
  return first;
}

store::Store& ClusterStores::at(NodeId node, store::Tier tier) const {
  if (tier == store::Tier::gfs) return *gfs;
  const auto& m = tier == store::Tier::lfs ? lfs : ifs;
  auto it = m.find(node.index);
  if (it == m.end()) {
    throw Error(ErrorCode::not_found, std::string("node ") + std::to_string(node.index) + " has no " +
                                          store::to_string(tier) + " store");
  }
  return *it->second;
}

ClusterStores make_memory_stores(const cluster::Topology& topology, std::uint64_t gfs_capacity) {
  ClusterStores s;
  s.gfs = std::make_shared<store::MemoryStore>(store::Tier::gfs, gfs_capacity);
  for (std::uint32_t i = 0; i < topology.compute_count(); ++i) {
    s.lfs.emplace(i, std::make_shared<store::MemoryStore>(store::Tier::lfs, topology.profile().lfs_capacity));
  }
  for (const auto n : topology.ifs_servers()) {
    s.ifs.emplace(n.index, std::make_shared<store::MemoryStore>(store::Tier::ifs, topology.profile().ifs_capacity));
  }
  return s;
}

double equivalent_throughput(std::uint64_t nodes, std::uint64_t bytes_per_node, std::int64_t elapsed_us) {
  if (elapsed_us <= 0) throw Error(ErrorCode::invalid_argument, "equivalent throughput needs a positive elapsed time");
  return static_cast<double>(nodes) * bytes_to_mb(bytes_per_node) / (static_cast<double>(elapsed_us) / 1e6);
}

double equivalent_throughput(const DistributionReport& report) {
  if (report.elapsed_us <= 0) {
    throw Error(ErrorCode::invalid_argument, "equivalent throughput needs a positive elapsed time");
  }
  return bytes_to_mb(report.bytes_placed) / (static_cast<double>(report.elapsed_us) / 1e6);
}

namespace {

struct Transfer {
  NodeId src, dst;
  std::size_t row = 0;
  std::vector<std::size_t> deps;
  bool store_copy = false;  // destination keeps the object
  bool submitted = false;
  bool done = false;
};

}  // namespace

DistributionReport execute_plan(const PlacementPlan& plan, simnet::Network& net, const ClusterStores& stores) {
  const auto& topo = net.topology();
  const NodeId gfs = topo.gfs_node();
  DistributionReport report;
  std::vector<Transfer> xfers;
  std::vector<const Placement*> row_plan;

  for (const auto& p : plan.placements) {
    if (p.deferred || p.targets.empty()) continue;
    const std::size_t row = report.rows.size();
    report.rows.push_back({p.object, p.method, p.size, p.targets.size(), 0, 0});
    row_plan.push_back(&p);
    if (p.method != Method::broadcast) {
      for (auto t : p.targets) xfers.push_back({gfs, t, row, {}, true});
      continue;
    }
    std::vector<NodeId> dests = p.targets;
    std::sort(dests.begin(), dests.end());
    const NodeId root = broadcast_root(dests, topo);
    const bool root_is_dest = std::binary_search(dests.begin(), dests.end(), root);
    const std::size_t fetch = xfers.size();
    xfers.push_back({gfs, root, row, {}, root_is_dest});
    if (root_is_dest) dests.erase(std::find(dests.begin(), dests.end(), root));
    if (dests.empty()) continue;
    const auto sched = spanning_tree_schedule(root, dests);
    // A sender needs its own copy and sends one transfer at a time.
    std::unordered_map<std::uint32_t, std::size_t> has_copy{{root.index, fetch}};
    std::unordered_map<std::uint32_t, std::size_t> last_send;
    for (const auto& round : sched.rounds) {
      for (const auto& [from, to] : round) {
        Transfer x{from, to, row, {has_copy.at(from.index)}, true};
        if (auto it = last_send.find(from.index); it != last_send.end()) x.deps.push_back(it->second);
        last_send[from.index] = xfers.size();
        has_copy[to.index] = xfers.size();
        xfers.push_back(std::move(x));
      }
    }
  }

  const SimTime t0 = net.now();
  std::unordered_map<std::uint64_t, std::size_t> by_flow;
  std::vector<std::vector<std::size_t>> dependents(xfers.size());
  std::vector<std::size_t> waiting(xfers.size());
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < xfers.size(); ++i) {
    waiting[i] = xfers[i].deps.size();
    for (auto d : xfers[i].deps) dependents[d].push_back(i);
    if (waiting[i] == 0) ready.push_back(i);
  }

  try {
    std::size_t remaining = xfers.size();
    while (remaining > 0) {
      for (auto i : ready) {
        auto& x = xfers[i];
        x.submitted = true;
        const auto id = net.submit_flow(x.src, x.dst, report.rows[x.row].bytes, net.now());
        by_flow.emplace(id.value, i);
        if (x.src == gfs) {
          ++report.gfs_reads;
        } else {
          ++report.node_transfers;
        }
      }
      ready.clear();
      auto next = net.next_event_time();
      if (!next) throw Error(ErrorCode::runtime, "distribution stalled with transfers outstanding");
      for (const auto& ev : net.advance_to(*next)) {
        if (ev.type != simnet::EventType::flow_end) continue;
        auto it = by_flow.find(ev.id.value);
        if (it == by_flow.end()) continue;
        auto& x = xfers[it->second];
        x.done = true;
        --remaining;
        auto& row = report.rows[x.row];
        row.elapsed_us = std::max(row.elapsed_us, (ev.time - t0).us);
        if (x.store_copy) {
          const Placement& p = *row_plan[x.row];
          store::Store& dst = stores.at(x.dst, p.tier);
          if (!dst.contains(p.object)) dst.put(p.object, store::read_blob(*stores.gfs, p.object));
          report.bytes_placed += p.size;
        }
        for (auto d : dependents[it->second]) {
          if (--waiting[d] == 0) ready.push_back(d);
        }
      }
    }
    report.complete = true;
  } catch (const Error& e) {
    report.error = e.what();
  }
  for (auto& row : report.rows) {
    report.elapsed_us = std::max(report.elapsed_us, row.elapsed_us);
    if (row.elapsed_us > 0) row.equivalent_mbps = equivalent_throughput(row.placements, row.bytes, row.elapsed_us);
  }
  return report;
}

void write_report_csv(std::ostream& out, const DistributionReport& report) {
  out << "object,method,bytes,placements,elapsed_us,equivalent_MBps\n";
  for (const auto& r : report.rows) {
    out << r.object << ',' << to_string(r.method) << ',' << r.bytes << ',' << r.placements << ',' << r.elapsed_us
        << ',' << r.equivalent_mbps << '\n';
  }
}

}  // namespace cio::distribute
