#include "cio/workload.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace cio::workload {

std::map<std::string, std::uint64_t> Workload::objects() const {
  auto out = manifest;
  for (const auto& t : tasks) {
    for (const auto& o : t.outputs) out[o.name] = o.size;
  }
  return out;
}

std::uint64_t Workload::total_output_bytes() const {
  std::uint64_t sum = 0;
  for (const auto& t : tasks) {
    for (const auto& o : t.outputs) sum += o.size;
  }
  return sum;
}

std::vector<std::string> validate(const Workload& w) {
  std::vector<std::string> errors;
  std::unordered_map<std::uint64_t, std::size_t> ids;
  std::unordered_map<std::string, std::size_t> writer;
  for (std::size_t i = 0; i < w.tasks.size(); ++i) {
    const auto& t = w.tasks[i];
    if (!ids.emplace(t.id, i).second) errors.push_back("duplicate task id " + std::to_string(t.id));
    if (!(t.compute_seconds >= 0)) errors.push_back("task " + std::to_string(t.id) + ": negative compute time");
    for (const auto& o : t.outputs) {
      auto [it, fresh] = writer.emplace(o.name, i);
      if (!fresh) {
        errors.push_back("duplicate writer for '" + o.name + "': tasks " + std::to_string(w.tasks[it->second].id) +
                         " and " + std::to_string(t.id));
      } else if (w.manifest.count(o.name)) {
        errors.push_back("task " + std::to_string(t.id) + " writes '" + o.name + "' which is already on GFS");
      }
    }
  }
  for (const auto& t : w.tasks) {
    for (const auto& in : t.inputs) {
      if (!writer.count(in) && !w.manifest.count(in)) {
        errors.push_back("task " + std::to_string(t.id) + " reads '" + in + "' which nobody writes");
      }
    }
  }

  // Kahn's algorithm over writer -> reader edges.
  const std::size_t n = w.tasks.size();
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indeg(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::set<std::size_t> preds;
    for (const auto& in : w.tasks[i].inputs) {
      auto it = writer.find(in);
      if (it != writer.end()) preds.insert(it->second);
    }
    for (std::size_t p : preds) {
      succ[p].push_back(i);
      ++indeg[i];
    }
  }
  std::vector<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) queue.push_back(i);
  }
  std::size_t seen = 0;
  while (seen < queue.size()) {
    for (std::size_t s : succ[queue[seen++]]) {
      if (--indeg[s] == 0) queue.push_back(s);
    }
  }
  if (queue.size() != n) {
    std::string msg = "dataflow cycle among tasks";
    for (std::size_t i = 0; i < n; ++i) {
      if (indeg[i] > 0) msg += " " + std::to_string(w.tasks[i].id);
    }
    errors.push_back(msg);
  }
  return errors;
}

void validate_or_throw(const Workload& w) {
  const auto errors = validate(w);
  if (errors.empty()) return;
  std::string msg = "invalid workload:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw Error(ErrorCode::invalid_argument, msg);
}

DataflowIndex::DataflowIndex(const Workload& w) {
  for (std::size_t i = 0; i < w.tasks.size(); ++i) {
    by_id_.emplace(w.tasks[i].id, i);
    for (const auto& o : w.tasks[i].outputs) writer_.emplace(o.name, i);
    for (const auto& in : w.tasks[i].inputs) {
      auto& r = readers_[in];
      if (r.empty() || r.back() != i) r.push_back(i);
    }
  }
}

std::optional<std::size_t> DataflowIndex::writer_of(const std::string& object) const {
  auto it = writer_.find(object);
  if (it == writer_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::size_t>& DataflowIndex::readers_of(const std::string& object) const {
  auto it = readers_.find(object);
  return it == readers_.end() ? none_ : it->second;
}

std::optional<std::size_t> DataflowIndex::index_of(std::uint64_t task_id) const {
  auto it = by_id_.find(task_id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

bool dataflow_ready(const TaskSpec& task, const std::set<std::uint64_t>& completed, const Workload& w,
                    const DataflowIndex& index) {
  for (const auto& in : task.inputs) {
    auto wi = index.writer_of(in);
    if (wi && !completed.count(w.tasks[*wi].id)) return false;
  }
  return true;
}

bool dataflow_ready(const TaskSpec& task, const std::set<std::uint64_t>& completed, const Workload& w) {
  return dataflow_ready(task, completed, w, DataflowIndex(w));
}

Workload generate_synthetic(const SyntheticParams& p) {
  if (p.output_size == 0) throw Error(ErrorCode::invalid_argument, "synthetic output size must be positive");
  if (!(p.compute_seconds >= 0)) throw Error(ErrorCode::invalid_argument, "negative compute time");
  Workload w;
  std::mt19937_64 rng(p.seed);
  const bool vary = p.output_size_max > p.output_size;
  std::uniform_int_distribution<std::uint64_t> size_dist(p.output_size, std::max(p.output_size, p.output_size_max));
  if (p.shared_input_size > 0) w.manifest["in/shared"] = p.shared_input_size;
  w.tasks.reserve(p.n_tasks);
  for (std::uint64_t i = 0; i < p.n_tasks; ++i) {
    TaskSpec t;
    t.id = i;
    t.compute_seconds = p.compute_seconds;
    if (p.shared_input_size > 0) t.inputs.push_back("in/shared");
    if (p.per_task_input_size > 0) {
      const std::string name = "in/t" + std::to_string(i);
      w.manifest[name] = p.per_task_input_size;
      t.inputs.push_back(name);
    }
    t.outputs.push_back({"out/t" + std::to_string(i), vary ? size_dist(rng) : p.output_size});
    w.tasks.push_back(std::move(t));
  }
  return w;
}

Workload dock_like_workflow(std::uint64_t n, const DockParams& p) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "DOCK workflow needs at least one stage-1 task");
  Workload w;
  w.manifest["dock/receptors"] = p.shared_input_size;
  const auto scan_seconds = [&](std::uint64_t bytes) { return p.stage2_seconds_per_mb * bytes_to_mb(bytes); };
  const auto selected = [&](std::uint64_t bytes) {
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(static_cast<double>(bytes) * p.select_fraction));
  };

  std::uint64_t id = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    TaskSpec t;
    t.id = id++;
    t.stage = 1;
    t.compute_seconds = p.stage1_seconds;
    const std::string ligand = "dock/ligand" + std::to_string(i);
    w.manifest[ligand] = p.per_task_input_size;
    t.inputs = {"dock/receptors", ligand};
    t.outputs.push_back({"dock/out/c" + std::to_string(i), p.output_size});
    w.tasks.push_back(std::move(t));
  }

  const std::uint32_t shards = std::max<std::uint32_t>(1, p.stage2_shards);
  std::vector<std::string> partials;
  std::uint64_t partial_bytes = 0;
  for (std::uint32_t s = 0; s < shards; ++s) {
    TaskSpec t;
    t.id = id++;
    t.stage = 2;
    std::uint64_t scanned = 0;
    for (std::uint64_t i = s; i < n; i += shards) {
      t.inputs.push_back(w.tasks[i].outputs[0].name);
      scanned += p.output_size;
    }
    if (t.inputs.empty()) continue;
    t.compute_seconds = scan_seconds(scanned);
    const std::string name = shards == 1 ? "dock/selected" : "dock/partial" + std::to_string(s);
    t.outputs.push_back({name, selected(scanned)});
    partials.push_back(name);
    partial_bytes += t.outputs[0].size;
    w.tasks.push_back(std::move(t));
  }
  if (shards > 1) {
    TaskSpec merge;
    merge.id = id++;
    merge.stage = 2;
    merge.inputs = partials;
    merge.compute_seconds = scan_seconds(partial_bytes);
    merge.outputs.push_back({"dock/selected", partial_bytes});
    w.tasks.push_back(std::move(merge));
  }

  TaskSpec archive;
  archive.id = id++;
  archive.stage = 3;
  archive.compute_seconds = p.stage3_seconds;
  archive.inputs = {"dock/selected"};
  archive.outputs.push_back({"dock/results", w.tasks.back().outputs[0].size});
  w.tasks.push_back(std::move(archive));
  return w;
}

namespace {

std::string substitute_node(std::string s, std::uint32_t node) {
  const std::string key = "{node}";
  for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos)) {
    const std::string v = std::to_string(node);
    s.replace(pos, key.size(), v);
    pos += v.size();
  }
  return s;
}

}  // namespace

std::vector<TaskSpec> run_on_all(const TaskSpec& tmpl, const cluster::Topology& topology, std::uint64_t first_id) {
  std::vector<TaskSpec> out;
  for (const auto node : topology.executors()) {
    TaskSpec t = tmpl;
    t.id = first_id++;
    t.pinned_node = node.index;
    for (auto& in : t.inputs) in = substitute_node(in, node.index);
    for (auto& o : t.outputs) o.name = substitute_node(o.name, node.index);
    out.push_back(std::move(t));
  }
  return out;
}

// ------------------------------------------------------------ text format

namespace {

void check_name(const std::string& name) {
  if (name.empty() || name.find_first_of(" \t\n,:=") != std::string::npos) {
    throw Error(ErrorCode::invalid_argument, "object name '" + name + "' cannot be serialized");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& s, int line) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::invalid_argument, "line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_workload(std::ostream& out, const Workload& w) {
  out << "# cio workload\n[manifest]\n";
  for (const auto& [name, size] : w.manifest) {
    check_name(name);
    out << name << ' ' << size << '\n';
  }
  out << "[tasks]\n";
  for (const auto& t : w.tasks) {
    out << "task " << t.id << " stage=" << t.stage << " compute=" << format_double(t.compute_seconds) << " in=";
    for (std::size_t i = 0; i < t.inputs.size(); ++i) {
      check_name(t.inputs[i]);
      out << (i ? "," : "") << t.inputs[i];
    }
    out << " out=";
    for (std::size_t i = 0; i < t.outputs.size(); ++i) {
      check_name(t.outputs[i].name);
      out << (i ? "," : "") << t.outputs[i].name << ':' << t.outputs[i].size;
    }
    if (t.pinned_node) out << " node=" << *t.pinned_node;
    out << '\n';
  }
}

Workload read_workload(std::istream& in) {
  Workload w;
  std::string line;
  enum { none, manifest, tasks } section = none;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line == "[manifest]") {
      section = manifest;
      continue;
    }
    if (line == "[tasks]") {
      section = tasks;
      continue;
    }
    std::istringstream ls(line);
    const auto bad = [&](const std::string& why) {
      return Error(ErrorCode::invalid_argument, "line " + std::to_string(lineno) + ": " + why);
    };
    if (section == manifest) {
      std::string name, size;
      if (!(ls >> name >> size)) throw bad("expected '<name> <size>'");
      w.manifest[name] = parse_number<std::uint64_t>(size, lineno);
    } else if (section == tasks) {
      std::string word, id;
      if (!(ls >> word >> id) || word != "task") throw bad("expected 'task <id> ...'");
      TaskSpec t;
      t.id = parse_number<std::uint64_t>(id, lineno);
      std::string field;
      while (ls >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw bad("expected key=value, got '" + field + "'");
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "stage") {
          t.stage = parse_number<std::uint32_t>(value, lineno);
        } else if (key == "compute") {
          t.compute_seconds = parse_number<double>(value, lineno);
        } else if (key == "in") {
          t.inputs = split(value, ',');
        } else if (key == "out") {
          for (const auto& item : split(value, ',')) {
            const auto colon = item.rfind(':');
            if (colon == std::string::npos) throw bad("output '" + item + "' lacks a size");
            t.outputs.push_back({item.substr(0, colon), parse_number<std::uint64_t>(item.substr(colon + 1), lineno)});
          }
        } else if (key == "node") {
          t.pinned_node = parse_number<std::uint32_t>(value, lineno);
        } else {
          throw bad("unknown task field '" + key + "'");
        }
      }
      w.tasks.push_back(std::move(t));
    } else {
      throw bad("content outside [manifest] or [tasks]");
    }
  }
  return w;
}

Workload load_workload(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open workload " + path);
  return read_workload(in);
}

void save_workload(const std::string& path, const Workload& w) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write workload " + path);
  write_workload(out, w);
}

}  // namespace cio::workload
