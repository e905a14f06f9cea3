#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "cio/harness.hpp"

namespace cio::harness {

namespace pt = boost::property_tree;

const char* to_string(Mode m) { return m == Mode::cio ? "cio" : "gfs-direct"; }

Mode mode_from_string(const std::string& s) {
  if (s == "cio") return Mode::cio;
  if (s == "gfs-direct" || s == "gfs") return Mode::gfs_direct;
  throw Error(ErrorCode::config, "unknown mode '" + s + "' (expected cio or gfs-direct)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0;
  const auto t = trim(text);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) {
    throw Error(ErrorCode::config, key + ": '" + text + "' is not a number");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto t = trim(text);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) {
    throw Error(ErrorCode::config, key + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw Error(ErrorCode::config, key + ": '" + text + "' is not a boolean");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Key handlers per section. Each returns false for unknown keys.
using Setter = bool (*)(ScenarioConfig&, const std::string&, const std::string&);

bool set_topology(ScenarioConfig& c, const std::string& k, const std::string& v) {
  auto& t = c.topology;
  auto& p = t.profile;
  const std::string key = "topology." + k;
  if (k == "nodes") t.compute_nodes = static_cast<std::uint32_t>(parse_uint(key, v));
  else if (k == "pset_size") t.pset_size = static_cast<std::uint32_t>(parse_uint(key, v));
  else if (k == "ifs_per_pset") t.ifs_per_pset = static_cast<std::uint32_t>(parse_uint(key, v));
  else if (k == "cores_per_node") t.cores_per_node = static_cast<std::uint32_t>(parse_uint(key, v));
  else if (k == "torus_mbps") p.torus_mbps = parse_double(key, v);
  else if (k == "tree_mbps") p.tree_mbps = parse_double(key, v);
  else if (k == "gfs_mbps") p.gfs_mbps = parse_double(key, v);
  else if (k == "lfs_mbps") p.lfs_mbps = parse_double(key, v);
  else if (k == "create_latency_s") p.create_latency_s = parse_double(key, v);
  else if (k == "create_contention") p.create_contention = parse_double(key, v);
  else if (k == "same_dir_serialize") p.same_dir_serialize = parse_bool(key, v);
  else if (k == "lfs_capacity") p.lfs_capacity = parse_size(v);
  else if (k == "ifs_capacity") p.ifs_capacity = parse_size(v);
  else return false;
  return true;
}

bool set_mode(ScenarioConfig& c, const std::string& k, const std::string& v) {
  if (k == "mode") c.mode = mode_from_string(trim(v));
  else if (k == "dispatch_rate") c.dispatch_rate = parse_double("mode.dispatch_rate", v);
  else if (k == "seed") c.seed = parse_uint("mode.seed", v);
  else return false;
  return true;
}

bool set_placement(ScenarioConfig& c, const std::string& k, const std::string& v) {
  auto& p = c.placement;
  if (k == "lfs_max_bytes") p.lfs_max_bytes = parse_size(v);
  else if (k == "read_many_threshold") p.read_many_threshold = parse_uint("placement." + k, v);
  else if (k == "broadcast_to_lfs") p.broadcast_to_lfs = parse_bool("placement." + k, v);
  else return false;
  return true;
}

bool set_collector(ScenarioConfig& c, const std::string& k, const std::string& v) {
  auto& p = c.collector;
  if (k == "max_delay_s") p.max_delay_s = parse_double("collector." + k, v);
  else if (k == "max_data") p.max_data = parse_size(v);
  else if (k == "min_free_space") p.min_free_space = parse_size(v);
  else if (k == "gfs_block_size") p.gfs_block_size = parse_size(v);
  else return false;
  return true;
}

bool set_workload_key(WorkloadSource& w, const std::string& k, const std::string& v) {
  const std::string key = "workload." + k;
  auto& s = w.synthetic;
  auto& d = w.dock;
  if (k == "source") {
    const auto t = trim(v);
    if (t == "synthetic") w.kind = WorkloadSource::Kind::synthetic;
    else if (t == "dock") w.kind = WorkloadSource::Kind::dock;
    else if (t == "file") w.kind = WorkloadSource::Kind::file;
    else throw Error(ErrorCode::config, key + ": unknown source '" + t + "'");
  } else if (k == "path") {
    w.path = trim(v);
  } else if (k == "tasks") {
    s.n_tasks = parse_uint(key, v);
    w.dock_tasks = s.n_tasks;
  } else if (k == "compute_s") {
    s.compute_seconds = parse_double(key, v);
  } else if (k == "output_size") {
    s.output_size = parse_size(v);
    d.output_size = s.output_size;
  } else if (k == "output_size_max") {
    s.output_size_max = parse_size(v);
  } else if (k == "shared_input_size") {
    s.shared_input_size = parse_size(v);
    d.shared_input_size = s.shared_input_size;
  } else if (k == "per_task_input_size") {
    s.per_task_input_size = parse_size(v);
    d.per_task_input_size = s.per_task_input_size;
  } else if (k == "seed") {
    s.seed = parse_uint(key, v);
  } else if (k == "stage1_s") {
    d.stage1_seconds = parse_double(key, v);
  } else if (k == "stage2_shards") {
    if (trim(v) == "auto") {
      w.dock_auto_shards = true;
    } else {
      w.dock_auto_shards = false;
      d.stage2_shards = static_cast<std::uint32_t>(parse_uint(key, v));
    }
  } else if (k == "stage2_s_per_mb") {
    d.stage2_seconds_per_mb = parse_double(key, v);
  } else if (k == "select_fraction") {
    d.select_fraction = parse_double(key, v);
  } else if (k == "stage3_s") {
    d.stage3_seconds = parse_double(key, v);
  } else {
    return false;
  }
  return true;
}

bool set_workload(ScenarioConfig& c, const std::string& k, const std::string& v) {
  return set_workload_key(c.workload, k, v);
}

bool set_output(ScenarioConfig& c, const std::string& k, const std::string& v) {
  if (k == "dir") c.output_dir = trim(v);
  else if (k == "flow_log") c.flow_log = parse_bool("output.flow_log", v);
  else if (k == "materialize") c.materialize = parse_bool("output.materialize", v);
  else return false;
  return true;
}

const std::map<std::string, Setter>& sections() {
  static const std::map<std::string, Setter> s{
      {"topology", set_topology},   {"mode", set_mode},         {"placement", set_placement},
      {"collector", set_collector}, {"workload", set_workload}, {"output", set_output},
  };
  return s;
}

}  // namespace

std::uint64_t parse_size(const std::string& text) {
  const auto t = trim(text);
  std::size_t i = 0;
  while (i < t.size() && (std::isdigit(static_cast<unsigned char>(t[i])) || t[i] == '.')) ++i;
  if (i == 0) throw Error(ErrorCode::config, "size '" + text + "' has no number");
  const double n = parse_double("size", t.substr(0, i));
  std::string unit = trim(t.substr(i));
  for (auto& ch : unit) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  double mult = 1;
  if (unit.empty() || unit == "B") mult = 1;
  else if (unit == "K" || unit == "KB" || unit == "KIB") mult = static_cast<double>(KiB);
  else if (unit == "M" || unit == "MB" || unit == "MIB") mult = static_cast<double>(MiB);
  else if (unit == "G" || unit == "GB" || unit == "GIB") mult = static_cast<double>(GiB);
  else throw Error(ErrorCode::config, "size '" + text + "' has an unknown unit");
  const double bytes = n * mult;
  if (bytes != std::floor(bytes)) throw Error(ErrorCode::config, "size '" + text + "' is not a whole number of bytes");
  return static_cast<std::uint64_t>(bytes);
}

void ScenarioConfig::validate() const {
  (void)cluster::build_topology(topology);
  if (mode == Mode::cio && topology.ifs_per_pset == 0) {
    throw Error(ErrorCode::config, "mode cio requires ifs_per_pset >= 1");
  }
  if (!(dispatch_rate > 0) || !std::isfinite(dispatch_rate)) {
    throw Error(ErrorCode::config, "dispatch_rate must be positive");
  }
  placement.validate();
  collector.validate();
  if (workload.kind == WorkloadSource::Kind::file && workload.path.empty()) {
    throw Error(ErrorCode::config, "workload source 'file' needs a path");
  }
  if (workload.synthetic.compute_seconds < 0 || workload.dock.stage1_seconds < 0 || workload.dock.stage3_seconds < 0 ||
      workload.dock.stage2_seconds_per_mb < 0) {
    throw Error(ErrorCode::config, "workload compute times must be non-negative");
  }
  if (workload.dock.select_fraction < 0 || workload.dock.select_fraction > 1) {
    throw Error(ErrorCode::config, "workload select_fraction must be in [0, 1]");
  }
}

ScenarioConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::config, std::string("config syntax: ") + e.what());
  }
  ScenarioConfig c;
  bool seed_given = false;
  std::string profile;
  if (auto topo = tree.get_child_optional("topology")) {
    if (auto p = topo->get_optional<std::string>("profile")) profile = trim(*p);
  }
  c.topology.profile = cluster::profile_by_name(profile.empty() ? "bgp-2008" : profile);
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw Error(ErrorCode::config, "key '" + section + "' is outside any section");
    auto it = sections().find(section);
    if (it == sections().end()) throw Error(ErrorCode::config, "unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (section == "topology" && key == "profile") continue;
      if (section == "workload" && key == "seed") seed_given = true;
      if (!it->second(c, key, value.data())) {
        throw Error(ErrorCode::config, "unknown key '" + key + "' in [" + section + "]");
      }
    }
  }
  if (!seed_given) c.workload.synthetic.seed = c.seed;
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open config '" + path.string() + "'");
  auto c = parse_config(in);
  if (c.workload.kind == WorkloadSource::Kind::file && std::filesystem::path(c.workload.path).is_relative()) {
    c.workload.path = (path.parent_path() / c.workload.path).lexically_normal().string();
  }
  return c;
}

void write_config(std::ostream& out, const ScenarioConfig& c) {
  const auto& t = c.topology;
  const auto& p = t.profile;
  out << "[topology]\n"
      << "nodes = " << t.compute_nodes << "\n"
      << "pset_size = " << t.pset_size << "\n"
      << "ifs_per_pset = " << t.ifs_per_pset << "\n"
      << "cores_per_node = " << t.cores_per_node << "\n"
      << "profile = " << p.name << "\n"
      << "torus_mbps = " << fmt(p.torus_mbps) << "\n"
      << "tree_mbps = " << fmt(p.tree_mbps) << "\n"
      << "gfs_mbps = " << fmt(p.gfs_mbps) << "\n"
      << "lfs_mbps = " << fmt(p.lfs_mbps) << "\n"
      << "create_latency_s = " << fmt(p.create_latency_s) << "\n"
      << "create_contention = " << fmt(p.create_contention) << "\n"
      << "same_dir_serialize = " << (p.same_dir_serialize ? "true" : "false") << "\n"
      << "lfs_capacity = " << p.lfs_capacity << "\n"
      << "ifs_capacity = " << p.ifs_capacity << "\n\n";
  out << "[mode]\n"
      << "mode = " << to_string(c.mode) << "\n"
      << "dispatch_rate = " << fmt(c.dispatch_rate) << "\n"
      << "seed = " << c.seed << "\n\n";
  out << "[placement]\n"
      << "lfs_max_bytes = " << c.placement.lfs_max_bytes << "\n"
      << "read_many_threshold = " << c.placement.read_many_threshold << "\n"
      << "broadcast_to_lfs = " << (c.placement.broadcast_to_lfs ? "true" : "false") << "\n\n";
  out << "[collector]\n"
      << "max_delay_s = " << fmt(c.collector.max_delay_s) << "\n"
      << "max_data = " << c.collector.max_data << "\n"
      << "min_free_space = " << c.collector.min_free_space << "\n"
      << "gfs_block_size = " << c.collector.gfs_block_size << "\n\n";
  const auto& w = c.workload;
  out << "[workload]\n";
  switch (w.kind) {
    case WorkloadSource::Kind::file: out << "source = file\npath = " << w.path << "\n"; break;
    case WorkloadSource::Kind::synthetic:
      out << "source = synthetic\n"
          << "tasks = " << w.synthetic.n_tasks << "\n"
          << "compute_s = " << fmt(w.synthetic.compute_seconds) << "\n"
          << "output_size = " << w.synthetic.output_size << "\n"
          << "output_size_max = " << w.synthetic.output_size_max << "\n"
          << "shared_input_size = " << w.synthetic.shared_input_size << "\n"
          << "per_task_input_size = " << w.synthetic.per_task_input_size << "\n"
          << "seed = " << w.synthetic.seed << "\n";
      break;
    case WorkloadSource::Kind::dock:
      out << "source = dock\n"
          << "tasks = " << w.dock_tasks << "\n"
          << "output_size = " << w.dock.output_size << "\n"
          << "shared_input_size = " << w.dock.shared_input_size << "\n"
          << "per_task_input_size = " << w.dock.per_task_input_size << "\n"
          << "stage1_s = " << fmt(w.dock.stage1_seconds) << "\n"
          << "stage2_shards = " << (w.dock_auto_shards ? std::string("auto") : std::to_string(w.dock.stage2_shards))
          << "\n"
          << "stage2_s_per_mb = " << fmt(w.dock.stage2_seconds_per_mb) << "\n"
          << "select_fraction = " << fmt(w.dock.select_fraction) << "\n"
          << "stage3_s = " << fmt(w.dock.stage3_seconds) << "\n";
      break;
  }
  out << "\n[output]\n"
      << "dir = " << c.output_dir << "\n"
      << "flow_log = " << (c.flow_log ? "true" : "false") << "\n"
      << "materialize = " << (c.materialize ? "true" : "false") << "\n";
}

void apply_workload_overrides(WorkloadSource& src, WorkloadSource::Kind kind, const std::string& spec) {
  src.kind = kind;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::config, "workload override '" + item + "' is not key=value");
    const auto k = trim(item.substr(0, eq));
    if (k == "source" || !set_workload_key(src, k, item.substr(eq + 1))) {
      throw Error(ErrorCode::config, "unknown workload key '" + k + "'");
    }
  }
}

workload::Workload build_workload(const ScenarioConfig& c, const cluster::Topology& topology) {
  const auto& src = c.workload;
  switch (src.kind) {
    case WorkloadSource::Kind::file: return workload::load_workload(src.path);
    case WorkloadSource::Kind::synthetic: return workload::generate_synthetic(src.synthetic);
    case WorkloadSource::Kind::dock: {
      auto p = src.dock;
      if (src.dock_auto_shards) {
        p.stage2_shards = c.mode == Mode::cio ? static_cast<std::uint32_t>(topology.ifs_servers().size()) : 1;
      }
      return workload::dock_like_workflow(src.dock_tasks, p);
    }
  }
  throw Error(ErrorCode::config, "unknown workload source");
}

}  // namespace cio::harness
