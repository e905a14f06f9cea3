#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cio/cluster.hpp"
#include "cio/common.hpp"

namespace cio::simnet {

using cluster::LinkClass;
using cluster::NodeId;

struct EventId {
  std::uint64_t value = 0;
  friend constexpr auto operator<=>(EventId, EventId) = default;
};
using FlowId = EventId;

enum class EventType { flow_start, flow_end, create_start, create_end, timer };
const char* to_string(EventType type);

/// One completed (or, in the log, started) simulator event.
struct Event {
  SimTime time;
  EventId id;
  EventType type = EventType::timer;
  NodeId src;
  NodeId dst;
  std::uint64_t bytes = 0;
  std::uint64_t tag = 0;
};

struct LinkInstance {
  LinkClass cls = LinkClass::torus;
  double capacity_mbps = 0;
};

/// GFS contention parameters. Creations are served processor-sharing with a
/// per-create service demand of `create_latency_s`; with `contention` > 0
/// every in-service create is slowed by 1 + (k / contention)^2 where k is the
/// number of creates in service, which reproduces metadata lock thrashing.
struct GfsModel {
  double aggregate_mbps = 2400.0;
  double create_latency_s = 0.0;
  bool same_dir_serialize = false;
  double contention = 0.0;

  static GfsModel from_profile(const cluster::CalibrationProfile& p);
};

/// Max-min fair rates. `paths[i]` lists the links crossed by flow group i and
/// `weights[i]` the number of identical flows in it; the result is the
/// per-flow rate of every group, in the units of `capacity`. Links are
/// saturated in order of their fair share and their groups frozen.
std::vector<double> max_min_rates(std::span<const double> capacity,
                                  std::span<const std::vector<std::uint32_t>> paths,
                                  std::span<const double> weights);

/// Unweighted convenience form: one entry per flow.
std::vector<double> fair_share_rates(std::span<const double> capacity_mbps,
                                     std::span<const std::vector<std::uint32_t>> flow_links);

/// Flow-level network simulator over a topology. Rates are piecewise
/// constant and recomputed only when the set of active flows changes.
class Network {
 public:
  explicit Network(const cluster::Topology& topology);
  Network(const cluster::Topology& topology, GfsModel gfs);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  FlowId submit_flow(NodeId src, NodeId dst, std::uint64_t bytes, SimTime at);
  EventId submit_gfs_create(NodeId node, const std::string& directory, SimTime at);
  EventId schedule_timer(SimTime at, std::uint64_t tag = 0);

  /// Fires every event with completion time <= t in (time, id) order.
  std::vector<Event> advance_to(SimTime t);
  std::optional<SimTime> next_event_time();
  SimTime now() const { return SimTime{now_}; }
  bool idle() const;

  std::vector<std::uint32_t> route(NodeId src, NodeId dst) const;
  const LinkInstance& link(std::uint32_t id) const { return links_[id]; }
  std::size_t link_count() const { return links_.size(); }
  const GfsModel& gfs() const { return gfs_; }
  const cluster::Topology& topology() const { return *topology_; }

  /// Current per-flow rate (MB/s) of an active flow, 0 otherwise.
  double current_rate_mbps(FlowId flow);
  std::size_t active_flow_count() const { return active_flows_; }

  std::uint64_t flows_submitted(LinkClass cls) const;
  std::uint64_t gfs_creates_submitted() const { return creates_submitted_; }

  void enable_log(bool on) { logging_ = on; }
  const std::vector<Event>& log() const { return log_; }
  /// `time_us,event_type,flow_id,src,dst,bytes`
  void write_log_csv(std::ostream& out) const;

 private:
  struct Group {
    std::vector<std::uint32_t> links;
    double rate = 0;      // bytes per microsecond, per flow
    double served = 0;    // bytes delivered to each member, as of `updated`
    std::int64_t updated = 0;
    std::uint32_t count = 0;
    std::uint64_t version = 0;
    std::uint32_t stamp = 0;  // component search mark
    bool touched = false;     // membership changed since the last rate update
    // (finish level, flow id), min-heap
    std::priority_queue<std::pair<double, std::uint64_t>, std::vector<std::pair<double, std::uint64_t>>,
                        std::greater<>>
        members;

    double served_at(std::int64_t t) const { return served + rate * static_cast<double>(t - updated); }
  };
  struct FlowRec {
    NodeId src, dst;
    std::uint64_t bytes = 0;
    std::uint32_t group = 0;
    bool active = false;
  };
  struct Instant {
    std::int64_t time;
    std::uint64_t id;
    EventType type;
    friend bool operator>(const Instant& a, const Instant& b) {
      return a.time != b.time ? a.time > b.time : a.id > b.id;
    }
  };
  struct CreateJob {
    std::uint64_t id;
    NodeId node;
    std::string dir;
  };
  struct Due {
    std::int64_t time;
    std::uint32_t group;
    std::uint64_t version;
    friend bool operator>(const Due& a, const Due& b) {
      return a.time != b.time ? a.time > b.time : a.group > b.group;
    }
  };

  std::uint32_t group_for(const std::vector<std::uint32_t>& path);
  void activate_flow(std::uint64_t id, std::int64_t t, std::vector<Event>& out);
  void advance_create_level(std::int64_t t);
  void mark_dirty(std::uint32_t g);
  void recompute_rates();
  void schedule_group(std::uint32_t g);
  std::optional<std::int64_t> next_flow_due();
  std::optional<std::int64_t> next_create_due() const;
  double create_work_rate() const;
  void start_create_service(const CreateJob& job);
  void record(const Event& e);

  const cluster::Topology* topology_;
  GfsModel gfs_;
  std::vector<LinkInstance> links_;
  std::vector<double> capacity_;  // bytes per microsecond, by link id
  std::unordered_map<std::uint64_t, std::uint64_t> timer_tags_;
  std::int64_t now_ = 0;
  std::uint64_t next_id_ = 1;

  std::priority_queue<Instant, std::vector<Instant>, std::greater<>> instants_;
  std::unordered_map<std::uint64_t, FlowRec> flows_;
  std::unordered_map<std::uint64_t, std::uint32_t> group_index_;
  std::vector<Group> groups_;
  std::vector<std::vector<std::uint32_t>> link_groups_;  // groups with flows, per link
  std::vector<std::uint32_t> dirty_links_;
  std::vector<std::uint32_t> link_stamp_;
  std::uint32_t stamp_ = 0;
  // Scratch space for recompute_rates, indexed by link id.
  std::vector<double> remaining_, weight_;
  std::priority_queue<Due, std::vector<Due>, std::greater<>> due_;
  std::size_t active_flows_ = 0;
  bool rates_dirty_ = false;

  // GFS create service.
  std::unordered_map<std::uint64_t, CreateJob> pending_creates_;  // not yet started
  std::unordered_map<std::string, std::deque<CreateJob>> dir_queues_;
  std::priority_queue<std::pair<double, std::uint64_t>, std::vector<std::pair<double, std::uint64_t>>,
                      std::greater<>>
      in_service_;
  std::unordered_map<std::uint64_t, CreateJob> serving_;
  double create_level_ = 0;
  std::int64_t create_updated_ = 0;

  std::uint64_t flows_by_class_[4] = {0, 0, 0, 0};
  std::uint64_t creates_submitted_ = 0;
  bool logging_ = false;
  std::vector<Event> log_;
};

void write_events_csv(std::ostream& out, const std::vector<Event>& events);

}  // namespace cio::simnet

template <>
struct std::hash<cio::simnet::EventId> {
  std::size_t operator()(cio::simnet::EventId e) const noexcept { return e.value; }
};
