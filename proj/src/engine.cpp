#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <thread>
#include <unordered_map>

#include "cio/harness.hpp"

namespace cio::harness {

using cluster::NodeId;
using simnet::Event;
using simnet::EventType;

namespace {

// FIFO-by-id dispatcher over executor cores with a start-rate cap. Free
// cores are handed out in the order they became free (node order at start),
// as executors pulling work would be. Shared by the engine and the zero-IO
// ideal so both make identical choices.
class Dispatcher {
 public:
  Dispatcher(const cluster::Topology& topo, const workload::Workload& w, double rate)
      : w_(w), interval_us_(1e6 / rate), free_cores_(topo.compute_count(), 0), skip_(topo.compute_count(), 0) {
    for (std::uint32_t c = 0; c < topo.cores_per_node(); ++c) {
      for (auto n : topo.executors()) {
        ++free_cores_[n.index];
        free_q_.push_back(n.index);
      }
    }
    free_total_ = free_q_.size();
  }

  void make_ready(std::uint32_t ti) { ready_.emplace(w_.tasks[ti].id, ti); }

  void release(std::uint32_t node) {
    ++free_cores_[node];
    free_q_.push_back(node);
    ++free_total_;
  }

  struct Pick {
    std::uint32_t task;
    std::uint32_t node;
  };

  /// Next task startable at `now`. When only the rate cap holds it back,
  /// `wake` receives the earliest time to retry.
  std::optional<Pick> next(std::int64_t now, std::optional<std::int64_t>& wake) {
    wake.reset();
    if (free_total_ == 0) return std::nullopt;
    for (auto it = ready_.begin(); it != ready_.end(); ++it) {
      const auto ti = it->second;
      const auto& pin = w_.tasks[ti].pinned_node;
      if (pin && (*pin >= free_cores_.size() || free_cores_[*pin] == 0)) continue;
      if (static_cast<double>(now) < next_slot_ - 1e-6) {
        wake = static_cast<std::int64_t>(std::ceil(next_slot_ - 1e-6));
        return std::nullopt;
      }
      std::uint32_t node;
      if (pin) {
        node = *pin;
        ++skip_[node];  // one of its queue entries is now stale
      } else {
        while (skip_[free_q_.front()] > 0) {
          --skip_[free_q_.front()];
          free_q_.pop_front();
        }
        node = free_q_.front();
        free_q_.pop_front();
      }
      ready_.erase(it);
      --free_cores_[node];
      --free_total_;
      // Keep the fractional slot when starting on (or within a microsecond
      // of) it, so the long-run rate is exact.
      const double t = static_cast<double>(now);
      const double base = t < next_slot_ + 1.0 ? std::max(next_slot_, 0.0) : t;
      next_slot_ = base + interval_us_;
      return Pick{ti, node};
    }
    return std::nullopt;
  }

 private:
  const workload::Workload& w_;
  double interval_us_;
  double next_slot_ = 0;
  std::vector<std::uint32_t> free_cores_;
  std::vector<std::uint32_t> skip_;
  std::deque<std::uint32_t> free_q_;
  std::uint64_t free_total_ = 0;
  std::set<std::pair<std::uint64_t, std::uint32_t>> ready_;
};

// Writer count per task and the dependents of each writer.
struct DepGraph {
  std::vector<std::uint32_t> unmet;
  std::vector<std::vector<std::uint32_t>> dependents;

  DepGraph(const workload::Workload& w, const workload::DataflowIndex& index) {
    unmet.assign(w.tasks.size(), 0);
    dependents.resize(w.tasks.size());
    for (std::size_t i = 0; i < w.tasks.size(); ++i) {
      std::set<std::size_t> writers;
      for (const auto& in : w.tasks[i].inputs) {
        if (auto wr = index.writer_of(in)) writers.insert(*wr);
      }
      unmet[i] = static_cast<std::uint32_t>(writers.size());
      for (auto wr : writers) dependents[wr].push_back(static_cast<std::uint32_t>(i));
    }
  }
};

void check_dispatch_rate(double rate) {
  if (!(rate > 0) || !std::isfinite(rate)) throw Error(ErrorCode::config, "dispatch_rate must be positive");
}

}  // namespace

std::int64_t ideal_makespan_us(const workload::Workload& w, const cluster::Topology& topology, double dispatch_rate) {
  check_dispatch_rate(dispatch_rate);
  if (w.tasks.empty()) return 0;
  const workload::DataflowIndex index(w);
  DepGraph deps(w, index);
  Dispatcher d(topology, w, dispatch_rate);
  for (std::uint32_t i = 0; i < w.tasks.size(); ++i) {
    if (deps.unmet[i] == 0) d.make_ready(i);
  }
  using Item = std::pair<std::int64_t, std::uint32_t>;  // (end, task)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> running;
  std::vector<std::uint32_t> node_of(w.tasks.size(), 0);
  std::int64_t now = 0, makespan = 0;
  std::size_t done = 0;
  std::optional<std::int64_t> wake;
  while (true) {
    while (auto p = d.next(now, wake)) {
      node_of[p->task] = p->node;
      running.emplace(now + SimTime::from_seconds(w.tasks[p->task].compute_seconds).us, p->task);
    }
    if (running.empty() && !wake) break;
    std::int64_t t = wake ? *wake : running.top().first;
    if (!running.empty()) t = std::min(t, running.top().first);
    now = t;
    while (!running.empty() && running.top().first == now) {
      const auto ti = running.top().second;
      running.pop();
      ++done;
      makespan = std::max(makespan, now);
      d.release(node_of[ti]);
      for (auto dep : deps.dependents[ti]) {
        if (--deps.unmet[dep] == 0) d.make_ready(dep);
      }
    }
  }
  if (done != w.tasks.size()) {
    throw Error(ErrorCode::runtime, "ideal schedule stalled: a pinned task names no executor");
  }
  return makespan;
}

store::Bytes object_content(const std::string& name, std::uint64_t size, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  store::Bytes out(size);
  std::uint64_t x = h;
  for (std::size_t i = 0; i < size; i += 8) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    for (std::size_t k = 0; k < 8 && i + k < size; ++k) out[i + k] = static_cast<std::uint8_t>(z >> (8 * k));
  }
  return out;
}

namespace {

enum class Kind : std::uint8_t { input, fetch, local_write, to_ifs, gfs_create, gfs_write, flush_create, flush_write };

struct Cont {
  Kind kind;
  std::uint32_t a;  // task, node or collector
  std::uint32_t b;  // object
};

constexpr std::uint64_t kTagShift = 56;
constexpr std::uint64_t kTagCompute = 1;
constexpr std::uint64_t kTagDispatch = 2;
constexpr std::uint64_t kTagTick = 3;
constexpr std::uint64_t kPayloadMask = (std::uint64_t{1} << kTagShift) - 1;

struct TaskRt {
  std::uint32_t node = 0;
  std::int64_t start = -1;
  std::int64_t end = -1;
  std::uint32_t pending = 0;
  std::uint32_t next_output = 0;
};

struct Collector {
  collect::CollectorState state;
  std::optional<collect::PendingFlush> pending;
  std::vector<std::uint32_t> blocked;  // tasks waiting for IFS space
};

struct Obj {
  std::string name;
  std::uint64_t size = 0;
  std::optional<std::uint32_t> writer;
  const distribute::Placement* placement = nullptr;
  std::uint32_t remaining_reads = 0;
};

distribute::ClusterStores directory_stores(const cluster::Topology& topo, const std::filesystem::path& root) {
  distribute::ClusterStores s;
  const auto& p = topo.profile();
  s.gfs = std::make_shared<store::DirectoryStore>(root / "gfs", store::Tier::gfs, std::uint64_t{1} << 50);
  for (std::uint32_t i = 0; i < topo.compute_count(); ++i) {
    s.lfs.emplace(i, std::make_shared<store::DirectoryStore>(root / ("node" + std::to_string(i)), store::Tier::lfs,
                                                             p.lfs_capacity));
  }
  for (auto n : topo.ifs_servers()) {
    s.ifs.emplace(n.index, std::make_shared<store::DirectoryStore>(root / ("node" + std::to_string(n.index)),
                                                                   store::Tier::ifs, p.ifs_capacity));
  }
  return s;
}

class Engine {
 public:
  Engine(const ScenarioConfig& c, const workload::Workload& w, const RunOptions& o)
      : c_(c),
        w_(w),
        opts_(o),
        topo_(cluster::build_topology(c.topology)),
        net_(topo_, simnet::GfsModel::from_profile(topo_.profile())),
        index_(w),
        deps_(w, index_),
        disp_(topo_, w, c.dispatch_rate),
        rt_(w.tasks.size()),
        cio_(c.mode == Mode::cio),
        materialize_(c.materialize || o.store_root.has_value()) {}

  RunReport run();

 private:
  using Timeline = std::int64_t;

  std::uint32_t obj_id(const std::string& name) const { return obj_ids_.at(name); }
  store::Store& lfs(std::uint32_t node) { return *stores_.lfs.at(node); }
  store::Store& ifs(std::uint32_t node) { return *stores_.ifs.at(node); }
  std::uint32_t ifs_of(std::uint32_t node) const { return cluster::ifs_server_for(topo_, NodeId{node}).index; }

  void flow(std::uint32_t src, std::uint32_t dst, std::uint64_t bytes, Cont k) {
    const auto id = net_.submit_flow(NodeId{src}, NodeId{dst}, bytes, net_.now());
    conts_.emplace(id.value, k);
  }
  void create(std::uint32_t node, const std::string& dir, Cont k) {
    const auto id = net_.submit_gfs_create(NodeId{node}, dir, net_.now());
    conts_.emplace(id.value, k);
  }
  std::int64_t now() const { return net_.now().us; }

  void setup();
  void handle(const Event& e, std::vector<std::uint32_t>& computed);
  void dispatch();
  void launch(std::uint32_t ti, std::uint32_t node);
  void read_input(std::uint32_t ti, std::uint32_t obj);
  void input_done(std::uint32_t ti, std::uint32_t obj);
  void fetch_done(std::uint32_t node, std::uint32_t obj);
  void start_compute(std::uint32_t ti);
  void produce_outputs(const std::vector<std::uint32_t>& tasks);
  void after_compute(std::uint32_t ti);
  void io_step_done(std::uint32_t ti);
  void write_next_gfs_output(std::uint32_t ti);
  void stage(std::uint32_t ti);
  void finish_task(std::uint32_t ti);
  void poll(std::uint32_t ifs_node);
  void start_flush(std::uint32_t ifs_node, collect::FlushReason reason);
  void flush_written(std::uint32_t ifs_node);
  void record_bytes(const Event& e);

  const ScenarioConfig& c_;
  const workload::Workload& w_;
  RunOptions opts_;
  cluster::Topology topo_;
  simnet::Network net_;
  workload::DataflowIndex index_;
  DepGraph deps_;
  Dispatcher disp_;
  std::vector<TaskRt> rt_;
  bool cio_;
  bool materialize_;

  distribute::ClusterStores stores_;
  distribute::PlacementPlan plan_;
  std::vector<Obj> objs_;
  std::unordered_map<std::string, std::uint32_t> obj_ids_;
  std::vector<std::vector<std::uint32_t>> task_inputs_;  // distinct object ids
  std::unordered_map<std::uint64_t, Cont> conts_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> fetches_;  // (node << 32 | obj) -> waiters
  std::unordered_map<std::uint32_t, Collector> collectors_;
  std::vector<std::uint32_t> dirty_;
  bool dispatch_pending_ = false;
  bool wake_scheduled_ = false;
  bool draining_ = false;
  std::size_t done_ = 0;
  RunReport report_;
};

void Engine::setup() {
  stores_ = opts_.store_root ? directory_stores(topo_, *opts_.store_root) : distribute::make_memory_stores(topo_);
  if (cio_) {
    if (topo_.ifs_per_pset() == 0) throw Error(ErrorCode::config, "CIO mode needs at least one IFS per pset");
    plan_ = distribute::plan_placement(w_, topo_, c_.placement);
  }
  for (const auto& [name, size] : w_.objects()) {
    Obj o;
    o.name = name;
    o.size = size;
    if (auto wr = index_.writer_of(name)) o.writer = static_cast<std::uint32_t>(*wr);
    o.remaining_reads = static_cast<std::uint32_t>(index_.readers_of(name).size());
    obj_ids_.emplace(name, static_cast<std::uint32_t>(objs_.size()));
    objs_.push_back(std::move(o));
  }
  for (const auto& p : plan_.placements) objs_[obj_id(p.object)].placement = &p;
  task_inputs_.resize(w_.tasks.size());
  for (std::size_t i = 0; i < w_.tasks.size(); ++i) {
    std::set<std::uint32_t> ids;
    for (const auto& in : w_.tasks[i].inputs) ids.insert(obj_id(in));
    task_inputs_[i].assign(ids.begin(), ids.end());
  }
  for (const auto& [name, size] : w_.manifest) {
    stores_.gfs->put(name, materialize_ ? store::Blob::of(object_content(name, size, c_.seed)) : store::Blob::sized(size));
  }
  if (cio_) {
    for (auto n : topo_.ifs_servers()) {
      auto& col = collectors_[n.index];
      col.state.ifs_node = n;
      for (const char* d : {collect::kIncomingDir, collect::kStagingDir, collect::kCacheDir}) ifs(n.index).make_dir(d);
    }
  }
  net_.enable_log(c_.flow_log);
}

void Engine::record_bytes(const Event& e) {
  using cluster::LinkClass;
  if (e.src == e.dst) {
    report_.bytes_by_link[LinkClass::node_local] += e.bytes;
    return;
  }
  const bool src_c = topo_.is_compute(e.src), dst_c = topo_.is_compute(e.dst);
  const bool gfs = e.src == topo_.gfs_node() || e.dst == topo_.gfs_node();
  if (src_c && dst_c) {
    report_.bytes_by_link[LinkClass::torus] += e.bytes;
  } else if (src_c || dst_c) {
    report_.bytes_by_link[LinkClass::collective_tree] += e.bytes;
    if (gfs) report_.bytes_by_link[LinkClass::gfs_uplink] += e.bytes;
  } else {
    report_.bytes_by_link[LinkClass::gfs_uplink] += e.bytes;
  }
}

void Engine::dispatch() {
  std::optional<std::int64_t> wake;
  while (auto p = disp_.next(now(), wake)) launch(p->task, p->node);
  if (wake && !wake_scheduled_) {
    wake_scheduled_ = true;
    net_.schedule_timer(SimTime{*wake}, kTagDispatch << kTagShift);
  }
}

void Engine::launch(std::uint32_t ti, std::uint32_t node) {
  auto& r = rt_[ti];
  r.node = node;
  r.start = now();
  r.pending = 1;  // guard until every read is issued
  for (auto obj : task_inputs_[ti]) read_input(ti, obj);
  input_done(ti, UINT32_MAX);
}

void Engine::read_input(std::uint32_t ti, std::uint32_t id) {
  const std::uint32_t node = rt_[ti].node;
  const Obj& o = objs_[id];
  const std::uint32_t gfs = topo_.gfs_node().index;
  ++rt_[ti].pending;
  if (o.writer) {
    const std::uint32_t wnode = rt_[*o.writer].node;
    if (cio_) {
      const std::uint32_t s = ifs_of(wnode);
      if (!ifs(s).contains(store::join_path(collect::kStagingDir, o.name)) &&
          !ifs(s).contains(store::join_path(collect::kCacheDir, o.name))) {
        throw Error(ErrorCode::runtime, "intermediate '" + o.name + "' is no longer on IFS " + std::to_string(s));
      }
      flow(s, node, o.size, {Kind::input, ti, id});
    } else {
      if (!stores_.gfs->contains(store::join_path("n" + std::to_string(wnode), o.name))) {
        throw Error(ErrorCode::runtime, "intermediate '" + o.name + "' missing on GFS");
      }
      flow(gfs, node, o.size, {Kind::input, ti, id});
    }
    return;
  }
  const auto* p = o.placement;
  if (!cio_ || !p) {
    flow(gfs, node, o.size, {Kind::input, ti, id});
    return;
  }
  if (p->tier == store::Tier::lfs) {
    if (lfs(node).contains(o.name)) {
      flow(node, node, o.size, {Kind::input, ti, id});
      return;
    }
    auto& waiters = fetches_[(std::uint64_t{node} << 32) | id];
    waiters.push_back(ti);
    if (waiters.size() == 1) flow(gfs, node, o.size, {Kind::fetch, node, id});
    return;
  }
  const std::uint32_t s = distribute::bind_target(*p, NodeId{node}, topo_).index;
  if (p->method == distribute::Method::broadcast || ifs(s).contains(o.name)) {
    flow(s, node, o.size, {Kind::input, ti, id});
    return;
  }
  auto& waiters = fetches_[(std::uint64_t{s} << 32) | id];
  waiters.push_back(ti);
  if (waiters.size() == 1) flow(gfs, s, o.size, {Kind::fetch, s, id});
}

void Engine::fetch_done(std::uint32_t node, std::uint32_t id) {
  const Obj& o = objs_[id];
  const bool to_ifs = o.placement->tier == store::Tier::ifs;
  auto& dst = to_ifs ? ifs(node) : lfs(node);
  try {
    if (!dst.contains(o.name)) dst.put(o.name, store::read_blob(*stores_.gfs, o.name));
  } catch (const Error& e) {
    // A full cache only costs a refetch next time.
    if (e.code() != ErrorCode::store_full) throw;
  }
  auto waiters = std::move(fetches_.at((std::uint64_t{node} << 32) | id));
  fetches_.erase((std::uint64_t{node} << 32) | id);
  for (auto ti : waiters) {
    if (to_ifs) {
      flow(node, rt_[ti].node, o.size, {Kind::input, ti, id});
    } else {
      input_done(ti, id);
    }
  }
}

void Engine::input_done(std::uint32_t ti, std::uint32_t id) {
  if (id != UINT32_MAX && objs_[id].writer) --objs_[id].remaining_reads;
  if (--rt_[ti].pending == 0) start_compute(ti);
}

void Engine::start_compute(std::uint32_t ti) {
  const auto at = SimTime{now()} + SimTime::from_seconds(w_.tasks[ti].compute_seconds);
  net_.schedule_timer(at, (kTagCompute << kTagShift) | ti);
}

void Engine::produce_outputs(const std::vector<std::uint32_t>& tasks) {
  auto one = [&](std::uint32_t ti) {
    auto& l = lfs(rt_[ti].node);
    for (const auto& out : w_.tasks[ti].outputs) {
      l.put(out.name, materialize_ ? store::Blob::of(object_content(out.name, out.size, c_.seed))
                                   : store::Blob::sized(out.size));
    }
  };
  const unsigned workers = std::min<std::size_t>(opts_.workers, tasks.size());
  if (workers <= 1) {
    for (auto ti : tasks) one(ti);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned k = 0; k < workers; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = k; i < tasks.size(); i += workers) one(tasks[i]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void Engine::after_compute(std::uint32_t ti) {
  auto& r = rt_[ti];
  const auto& outs = w_.tasks[ti].outputs;
  if (outs.empty()) {
    finish_task(ti);
    return;
  }
  if (!cio_) {
    r.next_output = 0;
    write_next_gfs_output(ti);
    return;
  }
  // Local write, then the move to the pset's IFS.
  r.pending = static_cast<std::uint32_t>(outs.size());
  r.next_output = 0;
  for (const auto& o : outs) flow(r.node, r.node, o.size, {Kind::local_write, ti, 0});
}

void Engine::io_step_done(std::uint32_t ti) {
  auto& r = rt_[ti];
  if (--r.pending > 0) return;
  const auto& outs = w_.tasks[ti].outputs;
  if (r.next_output == 0) {
    r.next_output = 1;
    r.pending = static_cast<std::uint32_t>(outs.size());
    const auto s = ifs_of(r.node);
    for (const auto& o : outs) flow(r.node, s, o.size, {Kind::to_ifs, ti, 0});
    return;
  }
  stage(ti);
}

void Engine::write_next_gfs_output(std::uint32_t ti) {
  auto& r = rt_[ti];
  const auto& task = w_.tasks[ti];
  if (r.next_output == task.outputs.size()) {
    collect::synchronous_baseline_write(task, NodeId{r.node}, lfs(r.node), *stores_.gfs);
    finish_task(ti);
    return;
  }
  const auto& o = task.outputs[r.next_output];
  create(r.node, collect::baseline_directory(NodeId{r.node}, o.name), {Kind::gfs_create, ti, 0});
}

void Engine::stage(std::uint32_t ti) {
  const std::uint32_t node = rt_[ti].node;
  const std::uint32_t s = ifs_of(node);
  auto& col = collectors_.at(s);
  workload::TaskSpec left;
  for (const auto& o : w_.tasks[ti].outputs) {
    if (lfs(node).contains(o.name)) left.outputs.push_back(o);
  }
  try {
    collect::stage_task_output(left, lfs(node), ifs(s), col.state);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::store_full) throw;
    if (!col.state.flushing && col.state.staged.empty()) {
      throw Error(ErrorCode::store_full, "IFS " + std::to_string(s) + " cannot hold the outputs of task " +
                                             std::to_string(w_.tasks[ti].id));
    }
    col.blocked.push_back(ti);
    if (!col.state.flushing) start_flush(s, collect::FlushReason::forced);
    return;
  }
  dirty_.push_back(s);
  finish_task(ti);
}

void Engine::finish_task(std::uint32_t ti) {
  auto& r = rt_[ti];
  r.end = now();
  ++done_;
  disp_.release(r.node);
  for (auto d : deps_.dependents[ti]) {
    if (--deps_.unmet[d] == 0) disp_.make_ready(d);
  }
  dispatch_pending_ = true;
  if (done_ == w_.tasks.size()) {
    draining_ = true;
    for (const auto& [s, col] : collectors_) dirty_.push_back(s);
  }
}

void Engine::poll(std::uint32_t s) {
  auto& col = collectors_.at(s);
  if (col.state.flushing) return;
  if (draining_) {
    if (!col.state.staged.empty()) start_flush(s, collect::FlushReason::drain);
    return;
  }
  const auto d = collect::should_flush(col.state, ifs(s), SimTime{now()}, c_.collector);
  if (d.flush) start_flush(s, d.reason);
}

void Engine::start_flush(std::uint32_t s, collect::FlushReason reason) {
  auto& col = collectors_.at(s);
  col.pending = collect::begin_flush(col.state, ifs(s), reason);
  if (!col.pending) return;
  create(s, "cio/" + std::to_string(s), {Kind::flush_create, s, 0});
}

void Engine::flush_written(std::uint32_t s) {
  auto& col = collectors_.at(s);
  auto retain = [this](const std::string& name) {
    auto it = obj_ids_.find(name);
    return it != obj_ids_.end() && objs_[it->second].remaining_reads > 0;
  };
  auto rec = collect::complete_flush(col.state, std::move(*col.pending), ifs(s), *stores_.gfs, SimTime{now()},
                                     c_.collector, retain);
  col.pending.reset();
  report_.flushes.push_back(std::move(rec));
  auto blocked = std::move(col.blocked);
  col.blocked.clear();
  for (auto ti : blocked) stage(ti);
  dirty_.push_back(s);
}

void Engine::handle(const Event& e, std::vector<std::uint32_t>& computed) {
  if (e.type == EventType::timer) {
    const auto kind = e.tag >> kTagShift;
    const auto payload = static_cast<std::uint32_t>(e.tag & kPayloadMask);
    if (kind == kTagCompute) {
      computed.push_back(payload);
    } else if (kind == kTagDispatch) {
      wake_scheduled_ = false;
      dispatch_pending_ = true;
    } else if (kind == kTagTick) {
      for (const auto& [s, col] : collectors_) dirty_.push_back(s);
      if (!draining_) net_.schedule_timer(SimTime{now()} + SimTime::from_seconds(1.0), kTagTick << kTagShift);
    }
    return;
  }
  if (e.type != EventType::flow_end && e.type != EventType::create_end) return;
  if (e.type == EventType::flow_end) record_bytes(e);
  const auto it = conts_.find(e.id.value);
  if (it == conts_.end()) return;
  const Cont k = it->second;
  conts_.erase(it);
  switch (k.kind) {
    case Kind::input: input_done(k.a, k.b); break;
    case Kind::fetch: fetch_done(k.a, k.b); break;
    case Kind::local_write:
    case Kind::to_ifs: io_step_done(k.a); break;
    case Kind::gfs_create: {
      const auto& o = w_.tasks[k.a].outputs[rt_[k.a].next_output];
      flow(rt_[k.a].node, topo_.gfs_node().index, o.size, {Kind::gfs_write, k.a, 0});
      break;
    }
    case Kind::gfs_write:
      ++rt_[k.a].next_output;
      write_next_gfs_output(k.a);
      break;
    case Kind::flush_create:
      flow(k.a, topo_.gfs_node().index, collectors_.at(k.a).pending->archive.size, {Kind::flush_write, k.a, 0});
      break;
    case Kind::flush_write: flush_written(k.a); break;
  }
}

RunReport Engine::run() {
  setup();
  report_.mode = c_.mode;
  report_.plan = plan_;
  report_.executors = static_cast<std::uint32_t>(topo_.executors().size());
  report_.cores = report_.executors * topo_.cores_per_node();
  report_.payload_bytes = w_.total_output_bytes();
  report_.ideal_makespan_us = ideal_makespan_us(w_, topo_, c_.dispatch_rate);

  if (cio_) {
    report_.distribution = distribute::execute_plan(plan_, net_, stores_);
    if (!report_.distribution.complete) {
      throw Error(ErrorCode::runtime, "input distribution failed: " + report_.distribution.error);
    }
  }
  // Distribution runs on the same clock; tasks start where it ends.
  const std::int64_t t0 = now();
  // Collectors are not phase-locked: each starts its delay clock at an
  // offset spread evenly over one max_delay period.
  {
    std::uint32_t k = 0;
    const auto n = static_cast<double>(collectors_.size());
    for (auto n_ifs : topo_.ifs_servers()) {
      auto it = collectors_.find(n_ifs.index);
      if (it == collectors_.end()) continue;
      const auto offset = SimTime::from_seconds(c_.collector.max_delay_s * (k++ / n));
      it->second.state.last_write = SimTime{t0} - offset;
    }
  }
  for (std::uint32_t i = 0; i < w_.tasks.size(); ++i) {
    if (deps_.unmet[i] == 0) disp_.make_ready(i);
  }
  if (cio_ && !w_.tasks.empty()) net_.schedule_timer(SimTime{t0} + SimTime::from_seconds(1.0), kTagTick << kTagShift);
  dispatch();

  std::vector<std::uint32_t> computed;
  while (auto t = net_.next_event_time()) {
    const auto events = net_.advance_to(*t);
    computed.clear();
    for (const auto& e : events) handle(e, computed);
    if (!computed.empty()) {
      produce_outputs(computed);
      for (auto ti : computed) after_compute(ti);
    }
    // Collectors first, so freed IFS space and flush state are current.
    while (!dirty_.empty()) {
      auto batch = std::move(dirty_);
      dirty_.clear();
      std::sort(batch.begin(), batch.end());
      batch.erase(std::unique(batch.begin(), batch.end()), batch.end());
      for (auto s : batch) poll(s);
    }
    if (dispatch_pending_) {
      dispatch_pending_ = false;
      dispatch();
    }
  }
  if (done_ != w_.tasks.size()) {
    throw Error(ErrorCode::runtime, "run stalled with " + std::to_string(w_.tasks.size() - done_) +
                                        " tasks unfinished (a pinned task names no executor?)");
  }
  for (const auto& [s, col] : collectors_) {
    if (!col.state.staged.empty() || col.pending) {
      throw Error(ErrorCode::runtime, "collector " + std::to_string(s) + " did not drain");
    }
  }

  // From the first dispatch; input distribution before it is reported
  // separately.
  std::int64_t end = t0, start = w_.tasks.empty() ? t0 : INT64_MAX;
  report_.tasks.reserve(w_.tasks.size());
  for (std::size_t i = 0; i < w_.tasks.size(); ++i) {
    const auto& r = rt_[i];
    report_.tasks.push_back({w_.tasks[i].id, r.node, r.start, r.end, w_.tasks[i].stage});
    end = std::max(end, r.end);
    start = std::min(start, r.start);
  }
  std::sort(report_.tasks.begin(), report_.tasks.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::stable_sort(report_.flushes.begin(), report_.flushes.end(),
                   [](const auto& a, const auto& b) { return a.time < b.time; });
  for (const auto& f : report_.flushes) end = std::max(end, f.time.us);
  report_.makespan_us = end - start;
  report_.gfs_creates = net_.gfs_creates_submitted();
  if (c_.flow_log) report_.flow_log = net_.log();
  if (materialize_) report_.gfs = stores_.gfs;
  return std::move(report_);
}

}  // namespace

RunReport run_scenario(const ScenarioConfig& config, const workload::Workload& w, const RunOptions& options) {
  config.validate();
  workload::validate_or_throw(w);
  Engine e(config, w, options);
  return e.run();
}

RunReport run_scenario(const ScenarioConfig& config) {
  config.validate();
  const auto topo = cluster::build_topology(config.topology);
  const auto w = build_workload(config, topo);
  return run_scenario(config, w);
}

RunReport emulate_scenario(ScenarioConfig config, const workload::Workload& w, unsigned workers) {
  if (config.output_dir.empty()) throw Error(ErrorCode::config, "emulation needs an output directory");
  config.materialize = true;
  RunOptions o;
  o.store_root = std::filesystem::path(config.output_dir) / "stores";
  std::filesystem::remove_all(*o.store_root);
  o.workers = std::max(1u, workers);
  return run_scenario(config, w, o);
}

}  // namespace cio::harness
