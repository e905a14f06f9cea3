#include "cio/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace cio::simnet {

namespace {

constexpr std::uint32_t kNoLink = std::numeric_limits<std::uint32_t>::max();

std::int64_t ceil_us(double dt) {
  if (dt <= 0) return 0;
  return static_cast<std::int64_t>(std::ceil(dt - 1e-7));
}

}  // namespace

const char* to_string(EventType type) {
  switch (type) {
    case EventType::flow_start: return "flow_start";
    case EventType::flow_end: return "flow_end";
    case EventType::create_start: return "create_start";
    case EventType::create_end: return "create_end";
    case EventType::timer: return "timer";
  }
  return "?";
}

GfsModel GfsModel::from_profile(const cluster::CalibrationProfile& p) {
  return GfsModel{p.gfs_mbps, p.create_latency_s, p.same_dir_serialize, p.create_contention};
}

std::vector<double> max_min_rates(std::span<const double> capacity,
                                  std::span<const std::vector<std::uint32_t>> paths,
                                  std::span<const double> weights) {
  const std::size_t groups = paths.size();
  std::vector<double> rate(groups, 0.0);
  if (groups == 0) return rate;

  // Compact the links that are actually used.
  std::unordered_map<std::uint32_t, std::uint32_t> local;
  std::vector<std::uint32_t> used;
  std::vector<std::vector<std::uint32_t>> link_groups;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::uint32_t l : paths[g]) {
      auto [it, fresh] = local.try_emplace(l, static_cast<std::uint32_t>(used.size()));
      if (fresh) {
        used.push_back(l);
        link_groups.emplace_back();
      }
      link_groups[it->second].push_back(static_cast<std::uint32_t>(g));
    }
  }
  const std::size_t n_links = used.size();
  std::vector<double> remaining(n_links), weight(n_links, 0.0);
  for (std::size_t i = 0; i < n_links; ++i) remaining[i] = capacity[used[i]];
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::uint32_t l : paths[g]) weight[local[l]] += weights[g];
  }
  std::vector<char> frozen(groups, 0);
  std::size_t unfrozen = groups;

  while (unfrozen > 0) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_links; ++i) {
      if (weight[i] > 0) best = std::min(best, remaining[i] / weight[i]);
    }
    if (!std::isfinite(best)) break;
    best = std::max(best, 0.0);
    const double tie = best * (1.0 + 1e-12) + 1e-300;
    for (std::size_t i = 0; i < n_links; ++i) {
      if (weight[i] <= 0 || remaining[i] / weight[i] > tie) continue;
      for (std::uint32_t g : link_groups[i]) {
        if (frozen[g]) continue;
        frozen[g] = 1;
        --unfrozen;
        rate[g] = best;
        for (std::uint32_t l : paths[g]) {
          const std::uint32_t j = local[l];
          remaining[j] = std::max(0.0, remaining[j] - best * weights[g]);
          weight[j] = std::max(0.0, weight[j] - weights[g]);
        }
      }
    }
  }
  return rate;
}

std::vector<double> fair_share_rates(std::span<const double> capacity_mbps,
                                     std::span<const std::vector<std::uint32_t>> flow_links) {
  std::vector<double> ones(flow_links.size(), 1.0);
  return max_min_rates(capacity_mbps, flow_links, ones);
}

Network::Network(const cluster::Topology& topology)
    : Network(topology, GfsModel::from_profile(topology.profile())) {}

Network::Network(const cluster::Topology& topology, GfsModel gfs)
    : topology_(&topology), gfs_(gfs) {
  if (!(gfs_.aggregate_mbps > 0) || gfs_.create_latency_s < 0) {
    throw Error(ErrorCode::invalid_argument, "GFS model needs capacity > 0 and latency >= 0");
  }
  const std::uint32_t n = topology.compute_count();
  const std::uint32_t p = topology.pset_count();
  links_.reserve(3 * std::size_t{n} + 2 * std::size_t{p} + 1);
  for (std::uint32_t i = 0; i < n; ++i)
    links_.push_back({LinkClass::node_local, topology.capacity_mbps(LinkClass::node_local)});
  for (std::uint32_t i = 0; i < 2 * n; ++i)
    links_.push_back({LinkClass::torus, topology.capacity_mbps(LinkClass::torus)});
  for (std::uint32_t i = 0; i < 2 * p; ++i)
    links_.push_back({LinkClass::collective_tree, topology.capacity_mbps(LinkClass::collective_tree)});
  links_.push_back({LinkClass::gfs_uplink, gfs_.aggregate_mbps});
  capacity_.reserve(links_.size());
  for (const auto& l : links_) capacity_.push_back(mbps_to_bytes_per_us(l.capacity_mbps));
  link_groups_.resize(links_.size());
  link_stamp_.assign(links_.size(), 0);
  remaining_.assign(links_.size(), 0.0);
  weight_.assign(links_.size(), 0.0);
}

std::vector<std::uint32_t> Network::route(NodeId src, NodeId dst) const {
  const auto& t = *topology_;
  if (!t.contains(src) || !t.contains(dst)) {
    throw Error(ErrorCode::not_found, "flow endpoint outside topology");
  }
  const std::uint32_t n = t.compute_count();
  const std::uint32_t p = t.pset_count();
  const std::uint32_t nic_out = n, nic_in = 2 * n, tree_up = 3 * n, tree_down = 3 * n + p;
  const std::uint32_t gfs = 3 * n + 2 * p;
  const NodeId g = t.gfs_node();
  auto is_ion = [&](NodeId x) { return x.index >= n && x != g; };

  if (t.is_compute(src) && t.is_compute(dst)) {
    if (src == dst) return {src.index};
    return {nic_out + src.index, nic_in + dst.index};
  }
  if (t.is_compute(src) && dst == g) return {tree_up + t.pset_of(src), gfs};
  if (src == g && t.is_compute(dst)) return {gfs, tree_down + t.pset_of(dst)};
  if (t.is_compute(src) && is_ion(dst) && t.io_node(t.pset_of(src)) == dst) return {tree_up + t.pset_of(src)};
  if (is_ion(src) && t.is_compute(dst) && t.io_node(t.pset_of(dst)) == src) return {tree_down + t.pset_of(dst)};
  if ((is_ion(src) && dst == g) || (src == g && is_ion(dst))) return {gfs};
  throw Error(ErrorCode::invalid_argument, "no route from node " + std::to_string(src.index) +
                                               " to node " + std::to_string(dst.index));
}

std::uint32_t Network::group_for(const std::vector<std::uint32_t>& path) {
  const std::uint64_t key = (std::uint64_t{path[0]} << 32) | (path.size() > 1 ? path[1] : kNoLink);
  auto [it, fresh] = group_index_.try_emplace(key, static_cast<std::uint32_t>(groups_.size()));
  if (fresh) {
    groups_.emplace_back();
    groups_.back().links = path;
  }
  return it->second;
}

FlowId Network::submit_flow(NodeId src, NodeId dst, std::uint64_t bytes, SimTime at) {
  if (at.us < now_) throw Error(ErrorCode::invalid_argument, "flow submitted in the past");
  auto path = route(src, dst);
  const std::uint64_t id = next_id_++;
  FlowRec rec{src, dst, bytes, group_for(path), false};
  flows_.emplace(id, rec);
  bool seen[4] = {false, false, false, false};
  for (std::uint32_t l : path) {
    const auto c = static_cast<std::size_t>(links_[l].cls);
    if (!seen[c]) {
      seen[c] = true;
      ++flows_by_class_[c];
    }
  }
  instants_.push({at.us, id, EventType::flow_start});
  return FlowId{id};
}

EventId Network::submit_gfs_create(NodeId node, const std::string& directory, SimTime at) {
  if (at.us < now_) throw Error(ErrorCode::invalid_argument, "create submitted in the past");
  if (!topology_->contains(node)) throw Error(ErrorCode::not_found, "unknown node");
  const std::uint64_t id = next_id_++;
  pending_creates_.emplace(id, CreateJob{id, node, directory});
  ++creates_submitted_;
  instants_.push({at.us, id, EventType::create_start});
  return EventId{id};
}

EventId Network::schedule_timer(SimTime at, std::uint64_t tag) {
  if (at.us < now_) throw Error(ErrorCode::invalid_argument, "timer scheduled in the past");
  const std::uint64_t id = next_id_++;
  timer_tags_.emplace(id, tag);
  instants_.push({at.us, id, EventType::timer});
  return EventId{id};
}

bool Network::idle() const {
  return instants_.empty() && active_flows_ == 0 && in_service_.empty();
}

void Network::record(const Event& e) {
  if (logging_) log_.push_back(e);
}

void Network::activate_flow(std::uint64_t id, std::int64_t t, std::vector<Event>& out) {
  auto& f = flows_.at(id);
  record(Event{SimTime{t}, EventId{id}, EventType::flow_start, f.src, f.dst, f.bytes, 0});
  if (f.bytes == 0) {
    Event done{SimTime{t}, EventId{id}, EventType::flow_end, f.src, f.dst, 0, 0};
    out.push_back(done);
    flows_.erase(id);
    return;
  }
  f.active = true;
  ++active_flows_;
  auto& g = groups_[f.group];
  g.served = g.served_at(t);
  g.updated = t;
  if (g.count == 0) {
    for (std::uint32_t l : g.links) link_groups_[l].push_back(f.group);
  }
  g.members.push({g.served + static_cast<double>(f.bytes), id});
  ++g.count;
  mark_dirty(f.group);
}

void Network::mark_dirty(std::uint32_t gi) {
  auto& g = groups_[gi];
  g.touched = true;
  for (std::uint32_t l : g.links) dirty_links_.push_back(l);
  rates_dirty_ = true;
}

void Network::advance_create_level(std::int64_t t) {
  if (t > create_updated_) {
    if (!in_service_.empty()) create_level_ += create_work_rate() * static_cast<double>(t - create_updated_);
    create_updated_ = t;
  }
}

// Max-min rates change only inside the connected components (links joined
// by shared groups) that contain a link whose flow set changed, so only those
// are refilled.
void Network::recompute_rates() {
  rates_dirty_ = false;
  if (++stamp_ == 0) {
    std::fill(link_stamp_.begin(), link_stamp_.end(), 0);
    for (auto& g : groups_) g.stamp = 0;
    stamp_ = 1;
  }
  std::vector<std::uint32_t> comp_links, comp_groups;
  for (std::uint32_t l : dirty_links_) {
    if (link_stamp_[l] == stamp_) continue;
    link_stamp_[l] = stamp_;
    comp_links.push_back(l);
  }
  dirty_links_.clear();
  for (std::size_t i = 0; i < comp_links.size(); ++i) {
    for (std::uint32_t gi : link_groups_[comp_links[i]]) {
      auto& g = groups_[gi];
      if (g.stamp == stamp_) continue;
      g.stamp = stamp_;
      comp_groups.push_back(gi);
      for (std::uint32_t l : g.links) {
        if (link_stamp_[l] != stamp_) {
          link_stamp_[l] = stamp_;
          comp_links.push_back(l);
        }
      }
    }
  }
  // Deterministic order regardless of how the search reached each element.
  std::sort(comp_links.begin(), comp_links.end());
  std::sort(comp_groups.begin(), comp_groups.end());

  for (std::uint32_t l : comp_links) {
    remaining_[l] = capacity_[l];
    weight_[l] = 0;
  }
  for (std::uint32_t gi : comp_groups) {
    for (std::uint32_t l : groups_[gi].links) weight_[l] += groups_[gi].count;
  }
  std::vector<double> rate(comp_groups.size(), 0.0);
  std::vector<char> frozen(comp_groups.size(), 0);
  std::unordered_map<std::uint32_t, std::uint32_t> slot;  // group -> index in comp_groups
  slot.reserve(comp_groups.size());
  for (std::uint32_t i = 0; i < comp_groups.size(); ++i) slot.emplace(comp_groups[i], i);
  std::size_t unfrozen = comp_groups.size();
  while (unfrozen > 0) {
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t l : comp_links) {
      if (weight_[l] > 0) best = std::min(best, remaining_[l] / weight_[l]);
    }
    if (!std::isfinite(best)) break;
    best = std::max(best, 0.0);
    const double tie = best * (1.0 + 1e-12) + 1e-300;
    for (std::uint32_t l : comp_links) {
      if (weight_[l] <= 0 || remaining_[l] / weight_[l] > tie) continue;
      for (std::uint32_t gi : link_groups_[l]) {
        const std::uint32_t k = slot.at(gi);
        if (frozen[k]) continue;
        frozen[k] = 1;
        --unfrozen;
        rate[k] = best;
        const double w = groups_[gi].count;
        for (std::uint32_t j : groups_[gi].links) {
          remaining_[j] = std::max(0.0, remaining_[j] - best * w);
          weight_[j] = std::max(0.0, weight_[j] - w);
        }
      }
    }
  }

  // Capacity invariant: sum of allocated rates per link never exceeds capacity.
  for (std::uint32_t l : comp_links) remaining_[l] = 0;
  for (std::uint32_t k = 0; k < comp_groups.size(); ++k) {
    for (std::uint32_t l : groups_[comp_groups[k]].links) remaining_[l] += rate[k] * groups_[comp_groups[k]].count;
  }
  for (std::uint32_t l : comp_links) {
    if (remaining_[l] > capacity_[l] * (1.0 + 1e-9) + 1e-9) {
      throw Error(ErrorCode::runtime, "fair-share allocation exceeds link capacity");
    }
  }

  for (std::uint32_t k = 0; k < comp_groups.size(); ++k) {
    auto& g = groups_[comp_groups[k]];
    if (g.rate == rate[k] && !g.touched) continue;
    g.served = g.served_at(now_);
    g.updated = now_;
    g.rate = rate[k];
    g.touched = false;
    ++g.version;
    schedule_group(comp_groups[k]);
  }
}

void Network::schedule_group(std::uint32_t gi) {
  auto& g = groups_[gi];
  if (g.count == 0 || g.members.empty() || g.rate <= 0) return;
  const double remaining = g.members.top().first - g.served_at(now_);
  due_.push({now_ + ceil_us(remaining / g.rate), gi, g.version});
}

std::optional<std::int64_t> Network::next_flow_due() {
  while (!due_.empty()) {
    const auto& d = due_.top();
    if (d.version == groups_[d.group].version && groups_[d.group].count > 0) return d.time;
    due_.pop();
  }
  return std::nullopt;
}

double Network::create_work_rate() const {
  if (gfs_.contention <= 0) return 1.0;
  const double k = static_cast<double>(in_service_.size()) / gfs_.contention;
  return 1.0 / (1.0 + k * k);
}

std::optional<std::int64_t> Network::next_create_due() const {
  if (in_service_.empty()) return std::nullopt;
  const double remaining = in_service_.top().first - create_level_;
  return create_updated_ + ceil_us(remaining / create_work_rate());
}

void Network::start_create_service(const CreateJob& job) {
  const double work = gfs_.create_latency_s * 1e6;
  in_service_.push({create_level_ + work, job.id});
  serving_.emplace(job.id, job);
}

std::optional<SimTime> Network::next_event_time() {
  if (rates_dirty_) recompute_rates();
  std::optional<std::int64_t> best;
  auto take = [&](std::optional<std::int64_t> v) {
    if (v && (!best || *v < *best)) best = v;
  };
  if (!instants_.empty()) take(instants_.top().time);
  take(next_flow_due());
  take(next_create_due());
  if (!best) return std::nullopt;
  return SimTime{std::max(*best, now_)};
}

std::vector<Event> Network::advance_to(SimTime t) {
  if (t.us < now_) throw Error(ErrorCode::invalid_argument, "cannot advance into the past");
  std::vector<Event> out;
  while (true) {
    auto next = next_event_time();
    if (!next || next->us > t.us) break;
    const std::int64_t e = next->us;
    advance_create_level(e);
    now_ = e;
    std::vector<Event> batch;

    while (!instants_.empty() && instants_.top().time <= e) {
      const Instant in = instants_.top();
      instants_.pop();
      switch (in.type) {
        case EventType::timer: {
          auto it = timer_tags_.find(in.id);
          batch.push_back(Event{SimTime{e}, EventId{in.id}, EventType::timer, NodeId{}, NodeId{}, 0,
                                it->second});
          timer_tags_.erase(it);
          break;
        }
        case EventType::flow_start:
          activate_flow(in.id, e, batch);
          break;
        case EventType::create_start: {
          auto node = pending_creates_.extract(in.id);
          CreateJob job = std::move(node.mapped());
          record(Event{SimTime{e}, EventId{in.id}, EventType::create_start, job.node,
                       topology_->gfs_node(), 0, 0});
          if (gfs_.same_dir_serialize) {
            auto& q = dir_queues_[job.dir];
            q.push_back(job);
            if (q.size() == 1) start_create_service(q.front());
          } else {
            start_create_service(job);
          }
          break;
        }
        default:
          break;
      }
    }

    // Flow completions.
    while (!due_.empty() && due_.top().time <= e) {
      const Due d = due_.top();
      due_.pop();
      auto& g = groups_[d.group];
      if (d.version != g.version || g.count == 0) continue;
      const double served = g.served_at(e);
      const double tol = g.rate * 0.5 + 1e-9 * std::max(1.0, served);
      bool changed = false;
      while (!g.members.empty() && g.members.top().first <= served + tol) {
        const std::uint64_t id = g.members.top().second;
        g.members.pop();
        auto node = flows_.extract(id);
        const FlowRec& f = node.mapped();
        batch.push_back(Event{SimTime{e}, EventId{id}, EventType::flow_end, f.src, f.dst, f.bytes, 0});
        --g.count;
        --active_flows_;
        changed = true;
      }
      if (!changed) {
        ++g.version;
        const double remaining = g.members.top().first - served;
        due_.push({e + std::max<std::int64_t>(1, ceil_us(remaining / g.rate)), d.group, g.version});
        continue;
      }
      g.served = served;
      g.updated = e;
      if (g.count == 0) {
        for (std::uint32_t l : g.links) {
          auto& lg = link_groups_[l];
          lg.erase(std::find(lg.begin(), lg.end(), d.group));
          dirty_links_.push_back(l);
        }
        g.rate = 0;
        ++g.version;
        rates_dirty_ = true;
      } else {
        mark_dirty(d.group);
      }
    }

    // Create completions (zero-latency creates started above finish here too).
    while (!in_service_.empty() && in_service_.top().first <= create_level_ + 1e-6) {
      const std::uint64_t id = in_service_.top().second;
      in_service_.pop();
      auto node = serving_.extract(id);
      const CreateJob& job = node.mapped();
      batch.push_back(Event{SimTime{e}, EventId{id}, EventType::create_end, job.node,
                            topology_->gfs_node(), 0, 0});
      if (gfs_.same_dir_serialize) {
        auto it = dir_queues_.find(job.dir);
        it->second.pop_front();
        if (it->second.empty()) {
          dir_queues_.erase(it);
        } else {
          start_create_service(it->second.front());
        }
      }
    }

    std::sort(batch.begin(), batch.end(), [](const Event& a, const Event& b) { return a.id < b.id; });
    for (const auto& ev : batch) {
      if (ev.type != EventType::timer) record(ev);
      out.push_back(ev);
    }
  }
  now_ = t.us;
  advance_create_level(now_);
  return out;
}

double Network::current_rate_mbps(FlowId flow) {
  if (rates_dirty_) recompute_rates();
  auto it = flows_.find(flow.value);
  if (it == flows_.end() || !it->second.active) return 0.0;
  return groups_[it->second.group].rate * 1e6 / static_cast<double>(MiB);
}

std::uint64_t Network::flows_submitted(LinkClass cls) const {
  return flows_by_class_[static_cast<std::size_t>(cls)];
}

void Network::write_log_csv(std::ostream& out) const { write_events_csv(out, log_); }

void write_events_csv(std::ostream& out, const std::vector<Event>& events) {
  out << "time_us,event_type,flow_id,src,dst,bytes\n";
  for (const auto& e : events) {
    out << e.time.us << ',' << to_string(e.type) << ',' << e.id.value << ',' << e.src.index << ','
        << e.dst.index << ',' << e.bytes << '\n';
  }
}

}  // namespace cio::simnet
