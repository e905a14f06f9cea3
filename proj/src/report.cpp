#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cio/harness.hpp"

namespace cio::harness {

namespace {

std::string g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + p.string() + "'");
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p, const std::string& header) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::io, "cannot read '" + p.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw Error(ErrorCode::corrupt, p.string() + ": unexpected header");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    rows.push_back(std::move(cols));
  }
  return rows;
}

std::int64_t to_i64(const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw Error(ErrorCode::corrupt, "bad integer '" + s + "'");
  return v;
}

}  // namespace

double aggregate_throughput(std::uint64_t bytes, std::int64_t elapsed_us) {
  if (elapsed_us <= 0) return 0;
  return bytes_to_mb(bytes) / (static_cast<double>(elapsed_us) / 1e6);
}

double efficiency(const RunReport& r) {
  if (r.makespan_us <= 0) {
    if (r.tasks.empty()) throw Error(ErrorCode::invalid_argument, "efficiency of an empty run");
    return r.ideal_makespan_us == 0 ? 1.0 : 0.0;
  }
  return static_cast<double>(r.ideal_makespan_us) / static_cast<double>(r.makespan_us);
}

double aggregate_throughput(const RunReport& r) { return aggregate_throughput(r.payload_bytes, r.makespan_us); }

double per_node_throughput(const RunReport& r) {
  return r.executors == 0 ? 0.0 : aggregate_throughput(r) / r.executors;
}

std::vector<StageTime> stage_breakdown(const RunReport& r) {
  std::map<std::uint32_t, StageTime> by;
  std::int64_t start = INT64_MAX;
  for (const auto& t : r.tasks) {
    auto [it, fresh] = by.try_emplace(t.stage, StageTime{t.stage, t.start_us, t.end_us, 0});
    if (!fresh) {
      it->second.first_start_us = std::min(it->second.first_start_us, t.start_us);
      it->second.last_end_us = std::max(it->second.last_end_us, t.end_us);
    }
    start = std::min(start, t.start_us);
  }
  std::vector<StageTime> out;
  for (auto& [s, st] : by) out.push_back(st);
  // Each stage owns the time from its own start up to the next stage's
  // start; the last stage runs to the end of the makespan (final drain).
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::int64_t begin = i == 0 ? start : out[i].first_start_us;
    const std::int64_t end = i + 1 < out.size() ? out[i + 1].first_start_us : start + r.makespan_us;
    out[i].elapsed_us = end - begin;
  }
  return out;
}

Metrics metrics_of(const RunReport& r) {
  Metrics m;
  m.makespan_us = r.makespan_us;
  m.ideal_makespan_us = r.ideal_makespan_us;
  m.efficiency = r.tasks.empty() ? 0.0 : efficiency(r);
  m.payload_bytes = r.payload_bytes;
  m.aggregate_mbps = aggregate_throughput(r);
  m.per_node_mbps = per_node_throughput(r);
  m.executors = r.executors;
  m.tasks = r.tasks.size();
  m.flushes = r.flushes.size();
  return m;
}

void write_tasks_csv(std::ostream& out, const std::vector<TaskRecord>& tasks) {
  out << "task_id,node,start_us,end_us,stage\n";
  for (const auto& t : tasks) {
    out << t.id << ',' << t.node << ',' << t.start_us << ',' << t.end_us << ',' << t.stage << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const RunReport& r) {
  const auto m = metrics_of(r);
  out << "metric,value\n"
      << "mode," << to_string(r.mode) << '\n'
      << "makespan_us," << m.makespan_us << '\n'
      << "ideal_makespan_us," << m.ideal_makespan_us << '\n'
      << "efficiency," << g9(m.efficiency) << '\n'
      << "payload_bytes," << m.payload_bytes << '\n'
      << "aggregate_MBps," << g9(m.aggregate_mbps) << '\n'
      << "per_node_MBps," << g9(m.per_node_mbps) << '\n'
      << "executors," << m.executors << '\n'
      << "tasks," << m.tasks << '\n'
      << "flushes," << m.flushes << '\n'
      << "gfs_creates," << r.gfs_creates << '\n';
  for (const auto& [cls, bytes] : r.bytes_by_link) out << "bytes_" << cluster::to_string(cls) << ',' << bytes << '\n';
  for (const auto& s : stage_breakdown(r)) out << "stage" << s.stage << "_us," << s.elapsed_us << '\n';
}

void emit_csv(const RunReport& r, const ScenarioConfig& c, const workload::Workload& w,
              const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create '" + dir.string() + "': " + ec.message());
  {
    auto out = open_out(dir / "tasks.csv");
    write_tasks_csv(out, r.tasks);
  }
  {
    auto out = open_out(dir / "flows.csv");
    simnet::write_events_csv(out, r.flow_log);
  }
  {
    auto out = open_out(dir / "flushes.csv");
    collect::write_flush_csv(out, r.flushes);
  }
  {
    auto out = open_out(dir / "distribution.csv");
    distribute::write_report_csv(out, r.distribution);
  }
  {
    auto out = open_out(dir / "metrics.csv");
    write_metrics_csv(out, r);
  }
  {
    auto out = open_out(dir / "workload.txt");
    workload::write_workload(out, w);
  }
  {
    auto out = open_out(dir / "config.ini");
    write_config(out, c);
  }
}

std::string emit_summary(const RunReport& r) {
  const auto m = metrics_of(r);
  std::ostringstream s;
  s << "mode            " << to_string(r.mode) << '\n'
    << "tasks           " << m.tasks << " on " << m.executors << " executors (" << r.cores << " cores)\n"
    << "makespan        " << g9(static_cast<double>(m.makespan_us) / 1e6) << " s\n"
    << "ideal makespan  " << g9(static_cast<double>(m.ideal_makespan_us) / 1e6) << " s\n"
    << "efficiency      " << g9(m.efficiency) << '\n'
    << "output          " << g9(bytes_to_mb(m.payload_bytes)) << " MB\n"
    << "aggregate       " << g9(m.aggregate_mbps) << " MB/s\n"
    << "per node        " << g9(m.per_node_mbps) << " MB/s\n"
    << "GFS creates     " << r.gfs_creates << '\n'
    << "flushes         " << m.flushes << '\n';
  if (!r.distribution.rows.empty()) {
    s << "distribution    " << g9(static_cast<double>(r.distribution.elapsed_us) / 1e6) << " s, "
      << r.distribution.rows.size() << " objects\n";
  }
  const auto stages = stage_breakdown(r);
  if (stages.size() > 1) {
    for (const auto& st : stages) {
      s << "stage " << st.stage << "         " << g9(static_cast<double>(st.elapsed_us) / 1e6) << " s\n";
    }
  }
  return s.str();
}

Metrics read_metrics_csv(const std::filesystem::path& file) {
  Metrics m;
  for (const auto& row : read_csv(file, "metric,value")) {
    if (row.size() != 2) throw Error(ErrorCode::corrupt, file.string() + ": malformed row");
    const auto& k = row[0];
    const auto& v = row[1];
    if (k == "makespan_us") m.makespan_us = to_i64(v);
    else if (k == "ideal_makespan_us") m.ideal_makespan_us = to_i64(v);
    else if (k == "efficiency") m.efficiency = std::stod(v);
    else if (k == "payload_bytes") m.payload_bytes = static_cast<std::uint64_t>(to_i64(v));
    else if (k == "aggregate_MBps") m.aggregate_mbps = std::stod(v);
    else if (k == "per_node_MBps") m.per_node_mbps = std::stod(v);
    else if (k == "executors") m.executors = static_cast<std::uint32_t>(to_i64(v));
    else if (k == "tasks") m.tasks = static_cast<std::uint64_t>(to_i64(v));
    else if (k == "flushes") m.flushes = static_cast<std::uint64_t>(to_i64(v));
  }
  return m;
}

Metrics recompute_metrics(const std::filesystem::path& dir) {
  const auto config = load_config(dir / "config.ini");
  const auto topo = cluster::build_topology(config.topology);
  const auto w = workload::load_workload((dir / "workload.txt").string());

  std::int64_t start = INT64_MAX, end = INT64_MIN;
  const auto tasks = read_csv(dir / "tasks.csv", "task_id,node,start_us,end_us,stage");
  for (const auto& row : tasks) {
    if (row.size() != 5) throw Error(ErrorCode::corrupt, "tasks.csv: malformed row");
    start = std::min(start, to_i64(row[2]));
    end = std::max(end, to_i64(row[3]));
  }
  const auto flushes = read_csv(dir / "flushes.csv", "time_us,ifs_node,reason,members,bytes,archive_name");
  for (const auto& row : flushes) {
    if (row.size() != 6) throw Error(ErrorCode::corrupt, "flushes.csv: malformed row");
    end = std::max(end, to_i64(row[0]));
  }
  RunReport r;
  r.makespan_us = tasks.empty() ? 0 : end - start;
  r.ideal_makespan_us = ideal_makespan_us(w, topo, config.dispatch_rate);
  r.payload_bytes = w.total_output_bytes();
  r.executors = static_cast<std::uint32_t>(topo.executors().size());
  r.tasks.resize(tasks.size());
  r.flushes.resize(flushes.size());
  return metrics_of(r);
}

}  // namespace cio::harness
