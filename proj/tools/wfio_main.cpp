// wfio: correlate low-level I/O traces with workflow tasks.
//
// Subcommands:
//   simulate  generate a synthetic run (traces, SWMS log, pod files, truth)
//   check     audit trace directories for identity violations
//   report    associate traces with tasks and emit the analysis report

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wfio/report.hpp"
#include "wfio/simulator.hpp"
#include "wfio/version.hpp"

namespace {

std::vector<std::int64_t> parse_pid_list(const std::string& text) {
  std::vector<std::int64_t> pids;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    std::string item = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!item.empty()) {
      try {
        pids.push_back(std::stoll(item));
      } catch (const std::exception&) {
        throw wfio::InputError("bad pid '" + item + "' in --pids");
      }
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return pids;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    std::string item = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  double drop_prob = -1;
};

int run_simulate(const SimulateArgs& args) {
  wfio::SimConfig config = wfio::SimConfig::load(args.config_path);
  if (args.seed >= 0) config.loss.seed = static_cast<std::uint64_t>(args.seed);
  if (args.drop_prob >= 0) config.loss.set_all_probabilities(args.drop_prob);

  wfio::SimResult result = wfio::generate_run(config, args.out_dir);
  wfio::DropLedger ledger = wfio::inject_loss(result.run_dir, config.loss);

  std::printf("run directory: %s\n", result.run_dir.string().c_str());
  std::printf("nodes: %d  tasks: %d\n", result.node_count, result.task_count);
  std::printf("io events: %lld  fork events: %lld  dropped records: %zu\n",
              static_cast<long long>(result.io_events),
              static_cast<long long>(result.fork_events), ledger.rows.size());
  return 0;
}

struct ReportArgs {
  std::vector<std::string> trace_dirs;
  std::string nextflow_log, airflow_log, pod_meta, k8s_events;
  std::vector<std::string> dir_prefixes;
  std::string pids;
  bool pid_subtree = false;
  std::string out_dir;
  std::string format = "json";
  bool raw = false;
  std::string markers;
  int buckets = 10;
};

int run_report(const ReportArgs& args) {
  wfio::RunInputs inputs;
  for (const auto& d : args.trace_dirs) inputs.node_dirs.emplace_back(d);
  inputs.nextflow_log = args.nextflow_log;
  inputs.airflow_log = args.airflow_log;
  inputs.pod_meta = args.pod_meta;
  inputs.k8s_events = args.k8s_events;
  inputs.filters.dir_prefixes = args.dir_prefixes;
  if (!args.pids.empty()) inputs.filters.pids = parse_pid_list(args.pids);
  inputs.filters.pid_subtree = args.pid_subtree;

  if (!args.raw && args.nextflow_log.empty() && args.airflow_log.empty()) {
    throw wfio::InputError("no SWMS log given; pass --nextflow-log/--airflow-log or --raw");
  }
  if (args.format != "json" && args.format != "compact") {
    throw wfio::InputError("unknown --format '" + args.format + "' (json|compact)");
  }

  wfio::ReportOptions options;
  options.raw = args.raw;
  options.bulkiness_buckets = args.buckets;
  options.compact = args.format == "compact";

  wfio::MarkerRule rule = wfio::MarkerRule::nextflow_defaults();
  if (!args.markers.empty()) rule.patterns = split_commas(args.markers);

  wfio::PipelineResult result = wfio::run_pipeline(inputs, options, rule);
  if (args.out_dir.empty()) {
    std::fputs(wfio::render_report_json(result.report, options.compact).c_str(), stdout);
  } else {
    wfio::write_report_files(result.report, args.out_dir);
    std::fprintf(stderr, "wrote report to %s\n", args.out_dir.c_str());
  }
  return 0;
}

int run_check(const std::vector<std::string>& dirs) {
  bool parse_failures = false;
  std::size_t violations = 0;
  for (const auto& dir : dirs) {
    wfio::NodeTrace trace;
    trace.node_id = std::filesystem::path(dir).lexically_normal().filename().string();
    try {
      trace.io_events =
          wfio::parse_io_trace_file(std::filesystem::path(dir) / wfio::kIoTraceFileName);
    } catch (const wfio::InputError& e) {
      std::fprintf(stderr, "%s\n", e.what());
      parse_failures = true;
      continue;
    }
    for (const auto& v : wfio::event_identity_check(trace)) {
      std::printf("node=%s kind=%s event=%zu handle=%llu inode=%llu: %s\n",
                  trace.node_id.c_str(), std::string(violation_kind_name(v.kind)).c_str(),
                  v.event_index, static_cast<unsigned long long>(v.handle_uid),
                  static_cast<unsigned long long>(v.inode_uid), v.detail.c_str());
      ++violations;
    }
  }
  if (parse_failures) return 1;
  if (violations > 0) {
    std::fprintf(stderr, "%zu identity violations\n", violations);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"correlates low-level I/O traces with scientific workflow tasks"};
  app.set_version_flag("--version", std::string(wfio::kToolVersion));
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic workflow run");
  simulate->add_option("--config", sim.config_path, "simulation config (JSON)")->required();
  simulate->add_option("--out", sim.out_dir, "output run directory")->required();
  simulate->add_option("--seed", sim.seed, "loss-injection seed (overrides config)");
  simulate->add_option("--drop-prob", sim.drop_prob,
                       "drop probability applied to every record kind");

  ReportArgs rep;
  CLI::App* report = app.add_subcommand("report", "associate traces with tasks and analyze");
  report->add_option("--trace-dir", rep.trace_dirs, "node trace directory (repeatable)")
      ->required();
  report->add_option("--nextflow-log", rep.nextflow_log, "Nextflow execution log");
  report->add_option("--airflow-log", rep.airflow_log, "Airflow scheduler log");
  report->add_option("--pod-meta", rep.pod_meta, "pod metadata file (TSV)");
  report->add_option("--k8s-events", rep.k8s_events, "kubectl events capture");
  report->add_option("--dir-prefix", rep.dir_prefixes, "directory allowlist (repeatable)");
  report->add_option("--pids", rep.pids, "comma-separated pid filter");
  report->add_flag("--pid-subtree", rep.pid_subtree, "include fork-descendants of --pids");
  report->add_option("--out", rep.out_dir, "output directory (default: JSON on stdout)");
  report->add_option("--format", rep.format, "json|compact");
  report->add_flag("--raw", rep.raw, "per-node statistics only, no association");
  report->add_option("--markers", rep.markers, "comma-separated marker file patterns");
  report->add_option("--bulkiness-buckets", rep.buckets, "histogram bucket count");

  std::vector<std::string> check_dirs;
  CLI::App* check = app.add_subcommand("check", "audit traces for identity violations");
  check->add_option("dirs", check_dirs, "node trace directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (report->parsed()) return run_report(rep);
    if (check->parsed()) return run_check(check_dirs);
  } catch (const wfio::InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
  return 0;
}
