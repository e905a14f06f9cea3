// Command-line front end: simulate, emulate, report, archive and bench.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cio/archive.hpp"
#include "cio/harness.hpp"

namespace fs = std::filesystem;
using namespace cio;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct RunArgs {
  std::string config;
  std::string workload_file;
  std::string synthetic;
  std::string dock;
  std::string out;
  std::string mode;
  std::uint64_t seed = 0;
  std::uint32_t nodes = 0;
  std::uint32_t cores = 0;
  double dispatch_rate = 0;
  bool flow_log = false;
  bool quiet = false;
  unsigned workers = 4;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("config", a.config, "Scenario configuration (INI)")->required()->check(CLI::ExistingFile);
  auto* wl = cmd->add_option("--workload", a.workload_file, "Workload file, overrides [workload]");
  auto* syn = cmd->add_option("--synthetic", a.synthetic, "Synthetic workload, e.g. tasks=1024,output_size=1MB");
  auto* dock = cmd->add_option("--dock", a.dock, "DOCK-like workflow, e.g. tasks=15351");
  wl->excludes(syn)->excludes(dock);
  syn->excludes(dock);
  cmd->add_option("--out", a.out, "Run directory (default: [output] dir)");
  cmd->add_option("--mode", a.mode, "cio or gfs-direct");
  cmd->add_option("--seed", a.seed, "Seed");
  cmd->add_option("--nodes", a.nodes, "Compute nodes");
  cmd->add_option("--cores", a.cores, "Cores per node");
  cmd->add_option("--dispatch-rate", a.dispatch_rate, "Task starts per second");
  cmd->add_flag("--flow-log", a.flow_log, "Write every flow to flows.csv");
  cmd->add_flag("-q,--quiet", a.quiet, "No summary");
}

harness::ScenarioConfig resolve(const RunArgs& a) {
  auto c = harness::load_config(a.config);
  if (!a.mode.empty()) c.mode = harness::mode_from_string(a.mode);
  if (a.seed) {
    c.seed = a.seed;
    c.workload.synthetic.seed = a.seed;
  }
  if (a.nodes) c.topology.compute_nodes = a.nodes;
  if (a.cores) c.topology.cores_per_node = a.cores;
  if (a.dispatch_rate > 0) c.dispatch_rate = a.dispatch_rate;
  if (a.flow_log) c.flow_log = true;
  if (!a.workload_file.empty()) {
    c.workload.kind = harness::WorkloadSource::Kind::file;
    c.workload.path = a.workload_file;
  }
  if (!a.synthetic.empty()) {
    harness::apply_workload_overrides(c.workload, harness::WorkloadSource::Kind::synthetic, a.synthetic);
  }
  if (!a.dock.empty()) harness::apply_workload_overrides(c.workload, harness::WorkloadSource::Kind::dock, a.dock);
  if (!a.out.empty()) c.output_dir = a.out;
  if (c.output_dir.empty()) c.output_dir = "runs/" + fs::path(a.config).stem().string();
  c.validate();
  return c;
}

int run(const RunArgs& a, bool emulate) {
  const auto c = resolve(a);
  const auto topo = cluster::build_topology(c.topology);
  const auto w = harness::build_workload(c, topo);
  const auto r = emulate ? harness::emulate_scenario(c, w, a.workers) : harness::run_scenario(c, w);
  harness::emit_csv(r, c, w, c.output_dir);
  if (!a.quiet) std::cout << harness::emit_summary(r) << "run directory   " << c.output_dir << '\n';
  return 0;
}

int report(const std::string& dir) {
  const auto recorded = harness::read_metrics_csv(fs::path(dir) / "metrics.csv");
  const auto again = harness::recompute_metrics(dir);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-6 * std::max({1.0, std::abs(a), std::abs(b)}); };
  const bool ok = recorded.makespan_us == again.makespan_us && recorded.ideal_makespan_us == again.ideal_makespan_us &&
                  close(recorded.efficiency, again.efficiency) && close(recorded.aggregate_mbps, again.aggregate_mbps) &&
                  close(recorded.per_node_mbps, again.per_node_mbps) && recorded.tasks == again.tasks;
  std::printf("makespan        %.6f s\n", static_cast<double>(again.makespan_us) / 1e6);
  std::printf("ideal makespan  %.6f s\n", static_cast<double>(again.ideal_makespan_us) / 1e6);
  std::printf("efficiency      %.6g\n", again.efficiency);
  std::printf("aggregate       %.6g MB/s\n", again.aggregate_mbps);
  std::printf("per node        %.6g MB/s\n", again.per_node_mbps);
  std::printf("tasks           %llu\n", static_cast<unsigned long long>(again.tasks));
  std::printf("flushes         %llu\n", static_cast<unsigned long long>(again.flushes));
  std::printf("metrics.csv     %s\n", ok ? "consistent" : "MISMATCH");
  return ok ? 0 : kRuntimeError;
}

// Member name for a packed file: relative to `base` when given, else as typed.
std::vector<std::pair<std::string, fs::path>> collect_files(const std::vector<std::string>& inputs,
                                                            const std::string& base) {
  std::vector<std::pair<std::string, fs::path>> files;
  auto name_of = [&](const fs::path& p) {
    return (base.empty() ? p.lexically_normal() : p.lexically_relative(base)).generic_string();
  };
  for (const auto& in : inputs) {
    const fs::path p = base.empty() || fs::path(in).is_absolute() ? fs::path(in) : fs::path(base) / in;
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.emplace_back(name_of(e.path()), e.path());
      }
    } else if (fs::is_regular_file(p)) {
      files.emplace_back(name_of(p), p);
    } else {
      throw Error(ErrorCode::not_found, "no such file '" + p.string() + "'");
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

archive::Bytes slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read '" + p.string() + "'");
  return archive::Bytes(std::istreambuf_iterator<char>(in), {});
}

void pack(archive::Writer& w, const std::vector<std::string>& inputs, const std::string& base) {
  for (const auto& [name, path] : collect_files(inputs, base)) w.append_member(name, slurp(path));
  w.finalize();
}

int archive_list(const std::string& file, bool long_form) {
  archive::FileSource src(file);
  const auto r = archive::open_archive(src);
  for (const auto& e : r.entries()) {
    if (long_form) {
      std::printf("%12llu  %08x  %s\n", static_cast<unsigned long long>(e.size), e.crc32, e.path.c_str());
    } else {
      std::printf("%s\n", e.path.c_str());
    }
  }
  return 0;
}

int archive_extract(const std::string& file, const std::vector<std::string>& members, const std::string& dir) {
  archive::FileSource src(file);
  const auto r = archive::open_archive(src);
  const auto names = members.empty() ? r.list_members() : members;
  for (const auto& m : names) {
    const auto bytes = r.extract_member(m);
    const fs::path out = fs::path(dir) / m;
    fs::create_directories(out.parent_path());
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorCode::io, "cannot write '" + out.string() + "'");
  }
  return 0;
}

int archive_verify(const std::string& file) {
  archive::FileSource src(file);
  const auto r = archive::open_archive(src);
  int bad = 0;
  for (const auto& s : r.verify()) {
    if (!s.ok) {
      ++bad;
      std::printf("BAD  %s (expected %08x, got %08x)\n", s.path.c_str(), s.expected_crc32, s.actual_crc32);
    }
  }
  std::printf("%zu members, %d bad\n", r.entries().size(), bad);
  return bad ? kRuntimeError : 0;
}

std::vector<std::uint32_t> parse_widths(const std::string& s) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collective IO simulator and archive tool"};
  app.require_subcommand(1);

  RunArgs sim_args, emu_args;
  auto* sim = app.add_subcommand("simulate", "Run a scenario on the simulated cluster");
  add_run_options(sim, sim_args);
  auto* emu = app.add_subcommand("emulate", "Run a scenario against directory-backed stores");
  add_run_options(emu, emu_args);
  emu->add_option("--workers", emu_args.workers, "Worker threads")->check(CLI::PositiveNumber);

  std::string run_dir;
  auto* rep = app.add_subcommand("report", "Recompute metrics of a run directory from its CSVs");
  rep->add_option("run_dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* arc = app.add_subcommand("archive", "Create and inspect archives");
  arc->require_subcommand(1);
  std::string arc_file, arc_base, arc_dir = ".";
  std::vector<std::string> arc_inputs;
  bool arc_long = false;
  auto* a_pack = arc->add_subcommand("pack", "Pack files and directories into a new archive");
  a_pack->add_option("archive", arc_file)->required();
  a_pack->add_option("inputs", arc_inputs)->required();
  a_pack->add_option("-C,--base", arc_base, "Name members relative to this directory");
  auto* a_append = arc->add_subcommand("append", "Append files to an existing archive");
  a_append->add_option("archive", arc_file)->required()->check(CLI::ExistingFile);
  a_append->add_option("inputs", arc_inputs)->required();
  a_append->add_option("-C,--base", arc_base, "Name members relative to this directory");
  auto* a_list = arc->add_subcommand("list", "List members");
  a_list->add_option("archive", arc_file)->required()->check(CLI::ExistingFile);
  a_list->add_flag("-l,--long", arc_long, "Show sizes and checksums");
  auto* a_extract = arc->add_subcommand("extract", "Extract members (all by default)");
  a_extract->add_option("archive", arc_file)->required()->check(CLI::ExistingFile);
  a_extract->add_option("members", arc_inputs);
  a_extract->add_option("-o,--output", arc_dir, "Destination directory");
  auto* a_verify = arc->add_subcommand("verify", "Check every member checksum");
  a_verify->add_option("archive", arc_file)->required()->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "Micro-benchmarks on the simulated network");
  bench->require_subcommand(1);
  std::uint32_t b_nodes = 4096, b_readers = 6;
  std::string b_size = "100MB", b_widths = "1,2,4,8,16,32", b_chunk = "1MB", b_profile = "bgp-2008";
  auto* b_dist = bench->add_subcommand("distribution", "Naive GFS reads vs spanning-tree broadcast");
  b_dist->add_option("--nodes", b_nodes, "Compute nodes");
  b_dist->add_option("--size", b_size, "Object size");
  b_dist->add_option("--profile", b_profile, "Calibration profile");
  auto* b_stripe = bench->add_subcommand("stripe", "Striped-read throughput by stripe width");
  b_stripe->add_option("--widths", b_widths, "Comma-separated widths");
  b_stripe->add_option("--readers", b_readers, "Reader nodes");
  b_stripe->add_option("--size", b_size, "Object size");
  b_stripe->add_option("--chunk", b_chunk, "Chunk size");
  b_stripe->add_option("--profile", b_profile, "Calibration profile");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*sim) return run(sim_args, false);
    if (*emu) return run(emu_args, true);
    if (*rep) return report(run_dir);
    if (*a_pack) {
      auto w = archive::create_archive(fs::path(arc_file));
      pack(w, arc_inputs, arc_base);
      return 0;
    }
    if (*a_append) {
      auto w = archive::append_to_existing(fs::path(arc_file));
      pack(w, arc_inputs, arc_base);
      return 0;
    }
    if (*a_list) return archive_list(arc_file, arc_long);
    if (*a_extract) return archive_extract(arc_file, arc_inputs, arc_dir);
    if (*a_verify) return archive_verify(arc_file);
    if (*b_dist) {
      const auto b = harness::distribution_benchmark(b_nodes, harness::parse_size(b_size),
                                                     cluster::profile_by_name(b_profile));
      std::printf("nodes,bytes,naive_us,tree_us,naive_MBps,tree_MBps,tree_gfs_reads\n");
      std::printf("%u,%llu,%lld,%lld,%.6g,%.6g,%llu\n", b.nodes, static_cast<unsigned long long>(b.bytes),
                  static_cast<long long>(b.naive_us), static_cast<long long>(b.tree_us), b.naive_mbps, b.tree_mbps,
                  static_cast<unsigned long long>(b.tree_gfs_reads));
      return 0;
    }
    if (*b_stripe) {
      const auto profile = cluster::profile_by_name(b_profile);
      std::printf("width,readers,elapsed_us,aggregate_MBps\n");
      for (auto width : parse_widths(b_widths)) {
        const auto b = harness::stripe_benchmark(width, b_readers, harness::parse_size(b_size),
                                                 harness::parse_size(b_chunk), profile);
        std::printf("%u,%u,%lld,%.6g\n", b.width, b.readers, static_cast<long long>(b.elapsed_us), b.aggregate_mbps);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "cio: " << e.what() << '\n';
    return e.code() == ErrorCode::config ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "cio: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
