#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cio/archive.hpp"
#include "cio/crc32.hpp"
#include "cio/harness.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cio;
using namespace cio::harness;

namespace {

ScenarioConfig small_config(Mode mode, std::uint32_t nodes = 16, std::uint32_t pset = 8) {
  ScenarioConfig c;
  c.topology.compute_nodes = nodes;
  c.topology.pset_size = pset;
  c.topology.ifs_per_pset = 1;
  c.topology.profile = cluster::profile_by_name("bgp-2008");
  c.mode = mode;
  c.dispatch_rate = 1000;
  return c;
}

workload::Workload compute_only(std::uint64_t n, double seconds) {
  workload::Workload w;
  for (std::uint64_t i = 0; i < n; ++i) {
    workload::TaskSpec t;
    t.id = i;
    t.compute_seconds = seconds;
    w.tasks.push_back(t);
  }
  return w;
}

workload::Workload synthetic(std::uint64_t n, std::uint64_t out, std::uint64_t seed = 1, double seconds = 1.0) {
  workload::SyntheticParams p;
  p.n_tasks = n;
  p.compute_seconds = seconds;
  p.output_size = out;
  p.seed = seed;
  return workload::generate_synthetic(p);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Relative agreement to 6 significant figures.
bool same6(double a, double b) {
  if (a == b) return true;
  return std::abs(a - b) <= 5e-6 * std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("zero-IO tasks finish in one wave plus the dispatch ramp") {
  for (auto mode : {Mode::cio, Mode::gfs_direct}) {
    auto c = small_config(mode, 64, 64);
    const auto topo = cluster::build_topology(c.topology);
    const std::uint64_t n = topo.executors().size();
    const auto r = run_scenario(c, compute_only(n, 4.0));
    // n starts spaced 1 ms apart, the last one running 4 s.
    const std::int64_t expected = static_cast<std::int64_t>(n - 1) * 1000 + 4'000'000;
    CHECK(r.makespan_us == expected);
    CHECK(r.ideal_makespan_us == expected);
    CHECK(efficiency(r) == doctest::Approx(1.0));
  }
}

TEST_CASE("ideal makespan: waves when dispatch is not the limit") {
  cluster::TopologyConfig tc;
  tc.compute_nodes = 9;
  tc.pset_size = 9;
  tc.cores_per_node = 2;
  const auto topo = cluster::build_topology(tc);  // 8 executors, 16 cores
  // One start per microsecond: wave one starts at 0..15 us and each later
  // wave reuses cores as they free, so the third wave ends at 6 s + 15 us.
  CHECK(ideal_makespan_us(compute_only(48, 2.0), topo, 1e6) == 3 * 2'000'000 + 15);
  // A 49th task takes the first core freed by wave three.
  CHECK(ideal_makespan_us(compute_only(49, 2.0), topo, 1e6) == 4 * 2'000'000);
  CHECK(ideal_makespan_us(compute_only(0, 2.0), topo, 1e6) == 0);
}

TEST_CASE("efficiency of a constructed run where IO doubles each wave") {
  RunReport r;
  r.tasks.push_back({});
  r.ideal_makespan_us = 4'000'000;
  r.makespan_us = 8'000'000;
  CHECK(efficiency(r) == doctest::Approx(0.5));
  RunReport empty;
  CHECK_THROWS_AS(efficiency(empty), Error);
}

TEST_CASE("throughput arithmetic") {
  RunReport r;
  r.payload_bytes = 162 * MiB;
  r.makespan_us = 1'000'000;
  r.executors = 256;
  CHECK(aggregate_throughput(r) == doctest::Approx(162.0));
  CHECK(per_node_throughput(r) == doctest::Approx(0.6328).epsilon(1e-3));

  // 64 clients at 2.3 MB/s each.
  r.executors = 64;
  r.payload_bytes = static_cast<std::uint64_t>(64 * 2.3 * MiB);
  CHECK(aggregate_throughput(r) == doctest::Approx(147.2).epsilon(1e-4));
  CHECK(per_node_throughput(r) == doctest::Approx(2.3).epsilon(1e-4));

  r.executors = 1;
  r.payload_bytes = 100 * MiB;
  r.makespan_us = 10'000'000;
  CHECK(aggregate_throughput(r) == doctest::Approx(10.0));
  CHECK(per_node_throughput(r) == doctest::Approx(10.0));
  CHECK(aggregate_throughput(100 * MiB, 0) == 0.0);
}

TEST_CASE("identical config and seed give byte-identical CSVs") {
  test::TempDir dir;
  auto c = small_config(Mode::cio);
  c.flow_log = true;
  c.collector.max_delay_s = 2;
  const auto w = synthetic(120, 64 * KiB, 3);
  for (const char* run : {"a", "b"}) emit_csv(run_scenario(c, w), c, w, dir.path() / run);
  for (const char* f : {"tasks.csv", "flows.csv", "flushes.csv", "distribution.csv", "metrics.csv", "workload.txt",
                        "config.ini"}) {
    INFO(f);
    const auto a = slurp(dir.path() / "a" / f);
    CHECK(!a.empty());
    CHECK(a == slurp(dir.path() / "b" / f));
  }
}

TEST_CASE("GFS creates: one per output without collectors, one per flush with them") {
  const auto w = synthetic(100, 16 * KiB, 5);
  auto count_creates = [](const RunReport& r) {
    return std::count_if(r.flow_log.begin(), r.flow_log.end(),
                         [](const simnet::Event& e) { return e.type == simnet::EventType::create_end; });
  };
  auto g = small_config(Mode::gfs_direct);
  g.flow_log = true;
  const auto rg = run_scenario(g, w);
  CHECK(count_creates(rg) == 100);
  CHECK(rg.gfs_creates == 100);
  CHECK(rg.flushes.empty());

  auto c = small_config(Mode::cio);
  c.flow_log = true;
  c.collector.max_delay_s = 0.5;
  const auto rc = run_scenario(c, w);
  CHECK(rc.flushes.size() > 1);
  CHECK(count_creates(rc) == static_cast<std::ptrdiff_t>(rc.flushes.size()));
  CHECK(rc.gfs_creates == rc.flushes.size());
}

TEST_CASE("metrics recompute from the raw logs") {
  test::TempDir dir;
  for (auto mode : {Mode::cio, Mode::gfs_direct}) {
    auto c = small_config(mode);
    const auto w = synthetic(80, 256 * KiB, 9);
    const auto r = run_scenario(c, w);
    const auto run_dir = dir.path() / to_string(mode);
    emit_csv(r, c, w, run_dir);
    const auto written = read_metrics_csv(run_dir / "metrics.csv");
    const auto again = recompute_metrics(run_dir);
    CHECK(again.makespan_us == written.makespan_us);
    CHECK(again.ideal_makespan_us == written.ideal_makespan_us);
    CHECK(same6(again.efficiency, written.efficiency));
    CHECK(same6(again.aggregate_mbps, written.aggregate_mbps));
    CHECK(same6(again.per_node_mbps, written.per_node_mbps));
    CHECK(again.payload_bytes == written.payload_bytes);
    CHECK(again.tasks == 80);
    CHECK(again.flushes == written.flushes);
    const auto direct = metrics_of(r);
    CHECK(same6(direct.efficiency, written.efficiency));
  }
}

TEST_CASE("empty run writes headers only") {
  test::TempDir dir;
  auto c = small_config(Mode::cio);
  const workload::Workload w;
  const auto r = run_scenario(c, w);
  CHECK(r.makespan_us == 0);
  emit_csv(r, c, w, dir.path());
  CHECK(slurp(dir.path() / "tasks.csv") == "task_id,node,start_us,end_us,stage\n");
  CHECK(slurp(dir.path() / "flushes.csv") == "time_us,ifs_node,reason,members,bytes,archive_name\n");
  CHECK(count_lines(slurp(dir.path() / "flows.csv")) == 1);
  CHECK(count_lines(slurp(dir.path() / "distribution.csv")) == 1);
}

TEST_CASE("dispatch cap, FIFO order and core exclusivity") {
  for (auto mode : {Mode::cio, Mode::gfs_direct}) {
    auto c = small_config(mode, 64, 32);
    c.topology.cores_per_node = 4;
    c.dispatch_rate = 50;
    const auto w = synthetic(600, 32 * KiB, 2, 0.5);
    const auto r = run_scenario(c, w);
    REQUIRE(r.tasks.size() == 600);

    // Any one-second window holds at most `rate` starts.
    std::vector<std::int64_t> starts;
    for (const auto& t : r.tasks) starts.push_back(t.start_us);
    std::vector<std::int64_t> sorted = starts;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == starts);  // FIFO by id, independent tasks
    for (std::size_t i = 0; i + 50 < sorted.size(); ++i) REQUIRE(sorted[i + 50] - sorted[i] >= 1'000'000);

    // Per node, never more running tasks than cores.
    std::map<std::uint32_t, std::vector<std::pair<std::int64_t, int>>> edges;
    for (const auto& t : r.tasks) {
      CHECK(t.end_us > t.start_us);
      edges[t.node].push_back({t.start_us, +1});
      edges[t.node].push_back({t.end_us, -1});
    }
    for (auto& [node, ev] : edges) {
      std::sort(ev.begin(), ev.end());  // ends sort before starts at equal times
      int running = 0;
      for (const auto& [t, d] : ev) {
        running += d;
        REQUIRE(running <= 4);
      }
    }
  }
}

TEST_CASE("free cores are handed out across all nodes") {
  auto c = small_config(Mode::cio, 32, 32);
  const auto w = compute_only(31 * 3, 1.0);
  const auto r = run_scenario(c, w);
  std::map<std::uint32_t, int> per_node;
  for (const auto& t : r.tasks) ++per_node[t.node];
  CHECK(per_node.size() == 31);
  for (const auto& [n, k] : per_node) CHECK(k == 3);
}

TEST_CASE("causality in a staged workflow and asynchronous collection") {
  auto c = small_config(Mode::cio, 32, 16);
  workload::DockParams p;
  p.stage1_seconds = 5;
  p.stage3_seconds = 2;
  p.stage2_shards = 2;
  const auto w = workload::dock_like_workflow(60, p);
  const auto r = run_scenario(c, w);
  REQUIRE(r.tasks.size() == w.tasks.size());

  std::map<std::uint64_t, const TaskRecord*> by_id;
  for (const auto& t : r.tasks) by_id[t.id] = &t;
  const workload::DataflowIndex index(w);
  for (const auto& t : w.tasks) {
    for (const auto& in : t.inputs) {
      if (auto wi = index.writer_of(in)) {
        INFO("task " << t.id << " input " << in);
        CHECK(by_id.at(w.tasks[*wi].id)->end_us <= by_id.at(t.id)->start_us);
      }
    }
  }

  // Stage-1 tasks end without waiting for any GFS write: each takes well
  // under compute time plus one file create.
  const double create_us = c.topology.profile.create_latency_s * 1e6;
  for (const auto& t : r.tasks) {
    if (t.stage != 1) continue;
    CHECK(static_cast<double>(t.end_us - t.start_us) < p.stage1_seconds * 1e6 + create_us);
  }

  // Flushed outputs were all written by tasks that had already ended.
  std::map<std::string, std::int64_t> written_at;
  for (const auto& t : w.tasks) {
    for (const auto& o : t.outputs) written_at[o.name] = by_id.at(t.id)->end_us;
  }
  for (const auto& f : r.flushes) {
    for (const auto& m : f.members) {
      if (written_at.count(m)) CHECK(written_at[m] <= f.time.us);
    }
  }

  // Stages partition the makespan.
  const auto stages = stage_breakdown(r);
  REQUIRE(stages.size() == 3);
  std::int64_t sum = 0;
  for (const auto& s : stages) {
    CHECK(s.elapsed_us >= 0);
    sum += s.elapsed_us;
  }
  CHECK(sum == r.makespan_us);
  CHECK(stages[0].first_start_us < stages[1].first_start_us);
  CHECK(stages[1].first_start_us < stages[2].first_start_us);
}

TEST_CASE("every output lands in exactly one archive, over 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto c = small_config(Mode::cio, 8 + static_cast<std::uint32_t>(rng() % 3) * 8, 8);
    c.seed = seed;
    c.materialize = true;
    c.dispatch_rate = 200 + static_cast<double>(rng() % 800);
    c.collector.max_delay_s = 0.5 + static_cast<double>(rng() % 40) / 10.0;
    c.collector.max_data = (64 + rng() % 1024) * KiB;
    c.topology.cores_per_node = 1 + static_cast<std::uint32_t>(rng() % 4);
    workload::SyntheticParams p;
    p.n_tasks = 20 + rng() % 60;
    p.compute_seconds = 0.1 + static_cast<double>(rng() % 20) / 10.0;
    p.output_size = rng() % (8 * KiB);
    p.output_size_max = p.output_size + rng() % (256 * KiB);
    p.seed = seed;
    const auto w = workload::generate_synthetic(p);
    const auto r = run_scenario(c, w);
    REQUIRE(r.gfs);

    std::map<std::string, std::uint32_t> expected;
    for (const auto& t : w.tasks) {
      for (const auto& o : t.outputs) expected[o.name] = crc32(object_content(o.name, o.size, seed));
    }
    const auto audit = collect::audit_archives(*r.gfs, expected);
    INFO("seed " << seed);
    CHECK(audit.ok());
    CHECK(audit.appearances.size() == expected.size());
    CHECK(audit.archives == r.flushes.size());

    // Byte-level check through random access on a few members.
    for (const auto& f : r.flushes) {
      const auto bytes = r.gfs->get("cio/" + std::to_string(f.ifs_node.index) + "/" + f.archive_name);
      archive::MemorySource src(bytes);
      const auto reader = archive::open_archive(src);
      const auto& m = f.members.front();
      CHECK(reader.extract_member(m) == object_content(m, w.objects().at(m), seed));
    }
  }
}

TEST_CASE("emulation and simulation agree on plans, flushes and archives") {
  test::TempDir dir;
  auto c = small_config(Mode::cio, 8, 8);
  c.topology.cores_per_node = 2;
  c.collector.max_delay_s = 1;
  c.collector.max_data = 1 * MiB;
  c.materialize = true;
  c.output_dir = dir.path().string();
  workload::SyntheticParams p;
  p.n_tasks = 40;
  p.compute_seconds = 0.5;
  p.output_size = 4 * KiB;
  p.output_size_max = 96 * KiB;
  p.shared_input_size = 256 * KiB;
  p.per_task_input_size = 8 * KiB;
  const auto w = workload::generate_synthetic(p);
  const auto sim = run_scenario(c, w);
  const auto emu = emulate_scenario(c, w, 3);
  REQUIRE(sim.flushes.size() == emu.flushes.size());
  CHECK(sim.plan.placements.size() == emu.plan.placements.size());
  for (std::size_t i = 0; i < sim.plan.placements.size(); ++i) {
    CHECK(sim.plan.placements[i].object == emu.plan.placements[i].object);
    CHECK(sim.plan.placements[i].targets == emu.plan.placements[i].targets);
  }
  for (std::size_t i = 0; i < sim.flushes.size(); ++i) {
    CHECK(sim.flushes[i].members == emu.flushes[i].members);
    CHECK(sim.flushes[i].archive_name == emu.flushes[i].archive_name);
  }
  CHECK(sim.gfs->snapshot() == emu.gfs->snapshot());
  for (const auto& [name, size] : sim.gfs->snapshot()) CHECK(sim.gfs->get(name) == emu.gfs->get(name));
}

TEST_CASE("config parsing") {
  std::istringstream in(R"([topology]
nodes = 128
pset_size = 64
ifs_per_pset = 2
cores_per_node = 4
profile = bgp-2008
gfs_mbps = 1200

[mode]
mode = gfs-direct
dispatch_rate = 500
seed = 42

[placement]
lfs_max_bytes = 64MB
read_many_threshold = 3

[collector]
max_delay_s = 5
max_data = 1GB
min_free_space = 512KB

[workload]
source = synthetic
tasks = 10
compute_s = 2.5
output_size = 16KiB

[output]
dir = out
flow_log = true
)");
  const auto c = parse_config(in);
  CHECK(c.topology.compute_nodes == 128);
  CHECK(c.topology.ifs_per_pset == 2);
  CHECK(c.topology.cores_per_node == 4);
  CHECK(c.topology.profile.gfs_mbps == 1200);
  CHECK(c.mode == Mode::gfs_direct);
  CHECK(c.dispatch_rate == 500);
  CHECK(c.seed == 42);
  CHECK(c.placement.lfs_max_bytes == 64 * MiB);
  CHECK(c.placement.read_many_threshold == 3);
  CHECK(c.collector.max_delay_s == 5);
  CHECK(c.collector.max_data == 1 * GiB);
  CHECK(c.collector.min_free_space == 512 * KiB);
  CHECK(c.workload.synthetic.n_tasks == 10);
  CHECK(c.workload.synthetic.compute_seconds == 2.5);
  CHECK(c.workload.synthetic.output_size == 16 * KiB);
  CHECK(c.workload.synthetic.seed == 42);
  CHECK(c.output_dir == "out");
  CHECK(c.flow_log);

  // Round trip through write_config.
  std::stringstream again;
  write_config(again, c);
  const auto c2 = parse_config(again);
  CHECK(c2.topology.compute_nodes == 128);
  CHECK(c2.collector.max_data == 1 * GiB);
  CHECK(c2.mode == Mode::gfs_direct);

  CHECK(parse_size("7") == 7);
  CHECK(parse_size("2K") == 2048);
  CHECK(parse_size("3MB") == 3 * MiB);
  CHECK_THROWS_AS(parse_size("12XB"), Error);
  CHECK_THROWS_AS(parse_size(""), Error);
}

TEST_CASE("config errors") {
  auto code_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_config(in).validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::invalid_argument;  // sentinel: nothing thrown
  };
  CHECK(code_of("[topology]\nnodes = 64\nbogus = 1\n") == ErrorCode::config);
  CHECK(code_of("[nonsense]\nx = 1\n") == ErrorCode::config);
  CHECK(code_of("[topology]\nnodes = 64\n[mode]\nmode = sideways\n") == ErrorCode::config);
  CHECK(code_of("[topology]\nnodes = 64\nifs_per_pset = 0\n[mode]\nmode = cio\n") == ErrorCode::config);
  CHECK(code_of("[topology]\nnodes = 64\n[mode]\ndispatch_rate = 0\n") == ErrorCode::config);
  CHECK(code_of("[topology]\nnodes = 64\n[collector]\nmax_data = lots\n") == ErrorCode::config);
  CHECK_THROWS_AS(load_config("/nonexistent/cio.ini"), Error);
}
