#include <algorithm>
#include <random>
#include <sstream>

#include "cio/workload.hpp"
#include "doctest.h"

using namespace cio;
using namespace cio::workload;

namespace {

TaskSpec task(std::uint64_t id, std::vector<std::string> in, std::vector<std::string> out) {
  TaskSpec t;
  t.id = id;
  t.compute_seconds = 1;
  t.inputs = std::move(in);
  for (auto& o : out) t.outputs.push_back({o, 10});
  return t;
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  return std::any_of(errors.begin(), errors.end(),
                     [&](const std::string& e) { return e.find(needle) != std::string::npos; });
}

std::string serialize(const Workload& w) {
  std::ostringstream os;
  write_workload(os, w);
  return os.str();
}

}  // namespace

TEST_CASE("validation") {
  CHECK(validate(Workload{}).empty());

  Workload dup;
  dup.tasks = {task(1, {}, {"x"}), task(2, {}, {"x"})};
  auto e = validate(dup);
  REQUIRE(e.size() == 1);
  CHECK(mentions(e, "duplicate writer for 'x'"));
  CHECK(mentions(e, "tasks 1 and 2"));

  Workload cyc;
  cyc.tasks = {task(1, {"y"}, {"x"}), task(2, {"x"}, {"y"})};
  e = validate(cyc);
  REQUIRE(e.size() == 1);
  CHECK(mentions(e, "cycle"));

  Workload self;
  self.tasks = {task(7, {"x"}, {"x"})};
  CHECK(mentions(validate(self), "cycle among tasks 7"));

  Workload orphan;
  orphan.tasks = {task(3, {"ghost"}, {"x"})};
  CHECK(mentions(validate(orphan), "task 3 reads 'ghost'"));
  orphan.manifest["ghost"] = 5;
  CHECK(validate(orphan).empty());

  Workload clash;
  clash.manifest["x"] = 1;
  clash.tasks = {task(1, {}, {"x"})};
  CHECK(mentions(validate(clash), "already on GFS"));

  Workload ids;
  ids.tasks = {task(1, {}, {"a"}), task(1, {}, {"b"})};
  CHECK(mentions(validate(ids), "duplicate task id 1"));
  CHECK_THROWS_AS(validate_or_throw(ids), Error);
}

TEST_CASE("dataflow readiness") {
  Workload w;
  w.manifest["m"] = 1;
  w.tasks = {task(1, {"m"}, {"a"}), task(2, {"a", "m"}, {"b"})};
  CHECK(dataflow_ready(w.tasks[0], {}, w));
  CHECK_FALSE(dataflow_ready(w.tasks[1], {}, w));
  CHECK(dataflow_ready(w.tasks[1], {1}, w));
}

TEST_CASE("ready frontier matches a brute-force topological oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    Workload w;
    const int n = 50;
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> in;
      for (int j = 0; j < i; ++j) {
        if (rng() % 10 == 0) in.push_back("o" + std::to_string(j));
      }
      if (rng() % 3 == 0) {
        in.push_back("m" + std::to_string(i));
        w.manifest["m" + std::to_string(i)] = 1;
      }
      w.tasks.push_back(task(static_cast<std::uint64_t>(i), in, {"o" + std::to_string(i)}));
    }
    std::shuffle(w.tasks.begin(), w.tasks.end(), rng);
    REQUIRE(validate(w).empty());
    const DataflowIndex index(w);

    // Oracle: predecessors found by scanning every task's outputs directly.
    auto preds = [&](const TaskSpec& t) {
      std::set<std::uint64_t> p;
      for (const auto& in : t.inputs) {
        for (const auto& u : w.tasks) {
          for (const auto& o : u.outputs) {
            if (o.name == in) p.insert(u.id);
          }
        }
      }
      return p;
    };
    std::set<std::uint64_t> completed;
    while (completed.size() < w.tasks.size()) {
      std::set<std::uint64_t> oracle, got;
      for (const auto& t : w.tasks) {
        if (completed.count(t.id)) continue;
        const auto p = preds(t);
        if (std::includes(completed.begin(), completed.end(), p.begin(), p.end())) oracle.insert(t.id);
        if (dataflow_ready(t, completed, w, index)) got.insert(t.id);
      }
      REQUIRE(!oracle.empty());
      CHECK(got == oracle);
      // Complete a random non-empty subset of the frontier.
      for (auto id : oracle) {
        if (rng() % 2 == 0 || id == *oracle.begin()) completed.insert(id);
      }
    }
  }
}

TEST_CASE("synthetic generator") {
  auto w = generate_synthetic({256, 4.0, 1 * MiB});
  REQUIRE(w.tasks.size() == 256);
  for (const auto& t : w.tasks) {
    CHECK(t.compute_seconds == 4.0);
    REQUIRE(t.outputs.size() == 1);
    CHECK(t.outputs[0].size == 1 * MiB);
    CHECK(t.inputs.empty());
  }
  CHECK(validate(w).empty());

  SyntheticParams p{100, 32.0, 1 * KiB, 1 * MiB, 4 * MiB, 2 * KiB, 9};
  auto a = generate_synthetic(p);
  auto b = generate_synthetic(p);
  CHECK(serialize(a) == serialize(b));
  CHECK(a.manifest.at("in/shared") == 4 * MiB);
  CHECK(a.tasks[5].inputs == std::vector<std::string>{"in/shared", "in/t5"});
  p.seed = 10;
  CHECK(serialize(generate_synthetic(p)) != serialize(a));
  for (const auto& t : a.tasks) {
    CHECK(t.outputs[0].size >= 1 * KiB);
    CHECK(t.outputs[0].size <= 1 * MiB);
  }
}

TEST_CASE("DOCK-like workflow") {
  auto w = dock_like_workflow(15351, {});
  CHECK(validate(w).empty());
  std::uint64_t stage1 = 0, stage1_bytes = 0;
  for (const auto& t : w.tasks) {
    if (t.stage == 1) {
      ++stage1;
      stage1_bytes += t.outputs[0].size;
      CHECK(t.compute_seconds == 550.0);
    }
  }
  CHECK(stage1 == 15351);
  CHECK(stage1_bytes == 15351 * 10 * KiB);

  // GFS-style: one stage-2 task reading every stage-1 output.
  const auto& s2 = w.tasks[15351];
  CHECK(s2.stage == 2);
  CHECK(s2.inputs.size() == 15351);
  CHECK(s2.compute_seconds == doctest::Approx(4.63 * bytes_to_mb(stage1_bytes)));
  std::set<std::uint64_t> all_but_one;
  for (std::uint64_t i = 0; i + 1 < 15351; ++i) all_but_one.insert(i);
  CHECK_FALSE(dataflow_ready(s2, all_but_one, w));
  all_but_one.insert(15350);
  CHECK(dataflow_ready(s2, all_but_one, w));
  CHECK(w.tasks.back().stage == 3);

  DockParams sharded;
  sharded.stage2_shards = 32;
  auto c = dock_like_workflow(1000, sharded);
  CHECK(validate(c).empty());
  std::size_t shards = 0;
  std::set<std::string> covered;
  for (const auto& t : c.tasks) {
    if (t.stage == 2 && t.outputs[0].name != "dock/selected") {
      ++shards;
      covered.insert(t.inputs.begin(), t.inputs.end());
    }
  }
  CHECK(shards == 32);
  CHECK(covered.size() == 1000);
}

TEST_CASE("run task on all executors") {
  auto topo = cluster::build_topology({128, 64, 1, 1, cluster::profile_by_name("unit")});
  TaskSpec tmpl;
  tmpl.compute_seconds = 2;
  tmpl.inputs = {"local/{node}/prev"};
  tmpl.outputs = {{"post/{node}", 5}};
  auto tasks = run_on_all(tmpl, topo, 1000);
  REQUIRE(tasks.size() == topo.executors().size());
  CHECK(tasks.size() == 126);
  std::set<std::uint32_t> nodes;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    CHECK(t.id == 1000 + i);
    REQUIRE(t.pinned_node);
    nodes.insert(*t.pinned_node);
    CHECK(t.inputs[0] == "local/" + std::to_string(*t.pinned_node) + "/prev");
  }
  CHECK(nodes.size() == tasks.size());
}

TEST_CASE("text serialization round trip") {
  Workload w = dock_like_workflow(50, {});
  w.tasks[3].pinned_node = 17;
  w.tasks[4].compute_seconds = 0.1 + 0.2;
  std::istringstream in(serialize(w));
  CHECK(read_workload(in) == w);

  std::istringstream bad("[tasks]\ntask 1 stage=x\n");
  CHECK_THROWS_AS(read_workload(bad), Error);
  std::istringstream stray("task 1\n");
  CHECK_THROWS_AS(read_workload(stray), Error);
  Workload unnamed;
  unnamed.manifest["has space"] = 1;
  CHECK_THROWS_AS(serialize(unnamed), Error);
}
