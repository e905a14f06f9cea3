#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "cio/crc32.hpp"
#include "cio/distribute.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cio;
using namespace cio::distribute;
using cluster::NodeId;

namespace {

cluster::Topology topo(std::uint32_t nodes, const std::string& profile = "unit", std::uint32_t ifs = 1) {
  return cluster::build_topology({nodes, 64, ifs, 1, cluster::profile_by_name(profile)});
}

workload::TaskSpec reader(std::uint64_t id, std::vector<std::string> in) {
  workload::TaskSpec t;
  t.id = id;
  t.compute_seconds = 1;
  t.inputs = std::move(in);
  t.outputs.push_back({"o" + std::to_string(id), 1});
  return t;
}

// Smallest r with 2^r >= n + 1, by repeated doubling.
std::size_t rounds_oracle(std::size_t n) {
  std::size_t r = 0, have = 1;
  while (have < n + 1) {
    have *= 2;
    ++r;
  }
  return r;
}

}  // namespace

TEST_CASE("access classification") {
  workload::Workload w;
  w.manifest = {{"all", 10}, {"one", 10}, {"none", 10}};
  for (std::uint64_t i = 0; i < 256; ++i) w.tasks.push_back(reader(i, i == 0 ? std::vector<std::string>{"all", "one"}
                                                                            : std::vector<std::string>{"all", "all"}));
  auto c = classify_access(w);
  CHECK(c.at("all") == AccessClass{AccessPattern::read_many, 256});
  CHECK(c.at("one") == AccessClass{AccessPattern::read_few, 1});
  CHECK(c.at("none") == AccessClass{AccessPattern::read_few, 0});
  CHECK(classify_access(w, 300).at("all").variant == AccessPattern::read_few);
}

TEST_CASE("placement rules") {
  auto t = topo(4096, "bgp-2008");
  PlacementPolicy policy;  // 256 MB LFS limit
  workload::Workload w;
  w.manifest = {{"small", 1 * KiB}, {"big", 3 * GiB}, {"common", 500 * MiB}, {"unused", 5}};
  w.tasks.push_back(reader(0, {"small"}));
  w.tasks.push_back(reader(1, {"big"}));
  for (std::uint64_t i = 2; i < 4098; ++i) w.tasks.push_back(reader(i, {"common"}));
  auto plan = plan_placement(w, t, policy);
  CHECK(plan.placements.size() == 3);
  CHECK(plan.find("unused") == nullptr);

  const auto* small = plan.find("small");
  REQUIRE(small);
  CHECK(small->tier == store::Tier::lfs);
  CHECK(small->method == Method::direct_read);
  CHECK(small->deferred);
  CHECK(bind_target(*small, NodeId{70}, t) == NodeId{70});

  const auto* big = plan.find("big");
  REQUIRE(big);
  CHECK(big->tier == store::Tier::ifs);
  CHECK(big->method == Method::stage_once);
  CHECK(bind_target(*big, NodeId{70}, t) == NodeId{64});

  const auto* common = plan.find("common");
  REQUIRE(common);
  CHECK(common->method == Method::broadcast);
  CHECK(common->tier == store::Tier::ifs);
  CHECK(common->targets.size() == 64);
  CHECK(std::set<NodeId>(common->targets.begin(), common->targets.end()) ==
        std::set<NodeId>(t.ifs_servers().begin(), t.ifs_servers().end()));

  SUBCASE("pinned readers bind at plan time") {
    workload::Workload p;
    p.manifest = {{"small", 10}, {"big", 1 * GiB}};
    auto a = reader(0, {"small", "big"});
    a.pinned_node = 130;
    p.tasks.push_back(a);
    auto pp = plan_placement(p, t, policy);
    CHECK(pp.find("small")->targets == std::vector<NodeId>{NodeId{130}});
    CHECK(pp.find("big")->targets == std::vector<NodeId>{NodeId{128}});
  }
  SUBCASE("unplaceable objects") {
    workload::Workload huge;
    huge.manifest = {{"huge", 65 * GiB}};
    huge.tasks.push_back(reader(0, {"huge"}));
    try {
      plan_placement(huge, t, policy);
      FAIL("expected unplaceable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::unplaceable);
      CHECK(std::string(e.what()).find("huge") != std::string::npos);
    }
    CHECK_THROWS_AS(plan_placement(w, topo(128, "bgp-2008", 0), policy), Error);
  }
  CHECK_THROWS_AS(plan_placement(w, t, PlacementPolicy{0}), Error);
}

TEST_CASE("spanning tree schedule structure") {
  CHECK(spanning_tree_schedule(NodeId{0}, {NodeId{1}}).rounds.size() == 1);
  std::vector<NodeId> d64;
  for (std::uint32_t i = 1; i <= 64; ++i) d64.push_back(NodeId{i});
  auto s64 = spanning_tree_schedule(NodeId{0}, d64);
  CHECK(s64.rounds.size() == 7);
  CHECK(s64.transfers() == 64);
  std::vector<NodeId> d4095;
  for (std::uint32_t i = 1; i <= 4095; ++i) d4095.push_back(NodeId{i});
  CHECK(spanning_tree_schedule(NodeId{0}, d4095).rounds.size() == 12);

  CHECK_THROWS_AS(spanning_tree_schedule(NodeId{0}, {}), Error);
  CHECK_THROWS_AS(spanning_tree_schedule(NodeId{0}, {NodeId{0}}), Error);
  CHECK_THROWS_AS(spanning_tree_schedule(NodeId{0}, {NodeId{2}, NodeId{2}}), Error);

  std::mt19937_64 rng(4);
  for (std::size_t n = 1; n <= 600; n += 1 + rng() % 7) {
    std::set<NodeId> pool;
    while (pool.size() < n) pool.insert(NodeId{static_cast<std::uint32_t>(1 + rng() % 5000)});
    std::vector<NodeId> dests(pool.begin(), pool.end());
    std::shuffle(dests.begin(), dests.end(), rng);
    const NodeId src{static_cast<std::uint32_t>(5001 + rng() % 10)};
    auto s = spanning_tree_schedule(src, dests);
    CHECK(s.rounds.size() == rounds_oracle(n));
    CHECK(s.transfers() == n);
    std::set<NodeId> holders{src}, received;
    for (std::size_t r = 0; r < s.rounds.size(); ++r) {
      std::set<NodeId> senders;
      for (const auto& [from, to] : s.rounds[r]) {
        CHECK(holders.count(from) == 1);
        CHECK(senders.insert(from).second);
        CHECK(received.insert(to).second);
      }
      for (const auto& [from, to] : s.rounds[r]) holders.insert(to);
      CHECK(holders.size() == std::min<std::size_t>(std::size_t{1} << (r + 1), n + 1));
    }
    CHECK(received == pool);
  }
}

TEST_CASE("execute a broadcast: one GFS read and identical replicas") {
  auto t = topo(512);
  simnet::Network net(t);
  net.enable_log(true);
  auto stores = make_memory_stores(t);
  std::mt19937_64 rng(1);
  const auto content = test::random_bytes(rng, 300 * KiB);
  stores.gfs->put("data", store::Blob::of(content));

  PlacementPlan plan;
  Placement p;
  p.object = "data";
  p.size = content.size();
  p.access = {AccessPattern::read_many, 512};
  p.tier = store::Tier::ifs;
  p.method = Method::broadcast;
  p.targets.assign(t.ifs_servers().begin(), t.ifs_servers().end());
  plan.placements.push_back(p);

  auto report = execute_plan(plan, net, stores);
  REQUIRE(report.complete);
  CHECK(report.gfs_reads == 1);
  std::size_t gfs_flows = 0;
  for (const auto& e : net.log()) {
    if (e.type == simnet::EventType::flow_start && e.src == t.gfs_node()) ++gfs_flows;
  }
  CHECK(gfs_flows == 1);
  CHECK(net.flows_submitted(cluster::LinkClass::gfs_uplink) == 1);
  CHECK(report.node_transfers == 8);
  CHECK(report.bytes_placed == 8 * content.size());
  for (auto n : t.ifs_servers()) {
    CHECK(crc32(stores.at(n, store::Tier::ifs).get("data")) == crc32(content));
  }
  // Root is the first non-IFS node of pset 0 and keeps no copy.
  CHECK(broadcast_root(p.targets, t) == NodeId{1});
  CHECK_FALSE(stores.at(NodeId{1}, store::Tier::lfs).contains("data"));
}

TEST_CASE("direct reads and throughput accounting") {
  CHECK(equivalent_throughput(4, 100 * MiB, 50'000'000) == doctest::Approx(8.0));
  CHECK_THROWS_AS(equivalent_throughput(4, 1, 0), Error);

  auto t = topo(256, "bgp-2008", 0);
  simnet::Network net(t, simnet::GfsModel{2400, 0, false, 0});
  auto stores = make_memory_stores(t);
  stores.gfs->put("obj", store::Blob::sized(100 * MiB));
  PlacementPlan plan;
  Placement p;
  p.object = "obj";
  p.size = 100 * MiB;
  p.method = Method::direct_read;
  p.targets.assign(t.executors().begin(), t.executors().end());
  plan.placements.push_back(p);
  auto r = execute_plan(plan, net, stores);
  REQUIRE(r.complete);
  CHECK(r.bytes_placed == 256 * 100 * MiB);
  for (auto n : t.executors()) CHECK(stores.at(n, store::Tier::lfs).contains("obj"));
  // 4 psets x 760 MB/s of tree exceeds 2400 MB/s, so GFS caps the aggregate.
  CHECK(equivalent_throughput(r) == doctest::Approx(2400).epsilon(0.01));
  CHECK(equivalent_throughput(r) / 256 == doctest::Approx(9.375).epsilon(0.01));

  std::ostringstream csv;
  write_report_csv(csv, r);
  CHECK(csv.str().rfind("object,method,bytes,placements,elapsed_us,equivalent_MBps\nobj,direct-read,", 0) == 0);
}

TEST_CASE("failed placement yields a partial report") {
  auto t = topo(64);
  simnet::Network net(t);
  auto stores = make_memory_stores(t);
  stores.gfs->put("obj", store::Blob::sized(3 * GiB));
  PlacementPlan plan;
  Placement p;
  p.object = "obj";
  p.size = 3 * GiB;
  p.method = Method::direct_read;
  p.targets = {NodeId{5}};
  plan.placements.push_back(p);
  auto r = execute_plan(plan, net, stores);
  CHECK_FALSE(r.complete);
  CHECK(r.error.find("full") != std::string::npos);
}
