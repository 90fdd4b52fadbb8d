#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>

#include "wfio/errors.hpp"
#include "wfio/trace_model.hpp"

namespace wfio {

/// Ingest-side record filters mirroring what the tracers can do at capture
/// time. The 15-column trace format carries no uid/gid, so the user/group
/// settings can only be honored by a live tracer; they are carried here so a
/// run description is complete, but ingest ignores them.
struct FilterSettings {
  std::vector<std::string> dir_prefixes;  // allowlist; empty keeps everything
  std::string fs_tag;  // mount-point prefix of the traced filesystem
  std::vector<std::int64_t> pids;
  bool pid_subtree = false;
  std::vector<std::uint32_t> uids;
  std::vector<std::uint32_t> gids;

  bool active() const { return !dir_prefixes.empty() || !fs_tag.empty() || !pids.empty(); }
};

struct RunInputs {
  std::vector<std::filesystem::path> node_dirs;
  std::filesystem::path nextflow_log;
  std::filesystem::path airflow_log;
  std::filesystem::path pod_meta;
  std::filesystem::path k8s_events;
  FilterSettings filters;
};

struct RunData {
  std::vector<NodeTrace> nodes;  // sorted by node_id
  std::vector<TaskRecord> tasks;
  std::vector<PodMeta> pods;
  std::vector<std::string> started_pods;

  const NodeTrace* find_node(std::string_view node_id) const;
};

// Fixed file names inside a node's trace directory.
inline constexpr std::string_view kIoTraceFileName = "io-trace.csv";
inline constexpr std::string_view kForkTraceFileName = "fork-trace.csv";
inline constexpr std::string_view kLossWarningFileName = "tracer-warnings.log";

/// Parses one physical line of the 15-column I/O trace. Comment ('#') and
/// blank lines yield nullopt. Malformed lines throw ParseError naming the
/// file, line and offending field.
std::optional<IoEvent> parse_io_trace_line(std::string_view line,
                                           std::string_view file = "<line>",
                                           std::size_t line_no = 0);

/// Inverse of parse_io_trace_line: fields joined by ", ", flags as 0x%08x.
/// A line with an empty path ends in a bare comma.
std::string format_io_trace_line(const IoEvent& e);
std::string format_fork_trace_line(const ForkEvent& e);

std::vector<IoEvent> parse_io_trace(std::istream& in, std::string_view file = "<stream>");
std::vector<IoEvent> parse_io_trace_file(const std::filesystem::path& path);

/// Fork records, returned time-sorted (stable).
std::vector<ForkEvent> parse_fork_trace(std::istream& in, std::string_view file = "<stream>");
std::vector<ForkEvent> parse_fork_trace_file(const std::filesystem::path& path);

/// Extracts one TaskRecord per "Task completed > TaskHandler[...]" line.
std::vector<TaskRecord> parse_nextflow_log(std::istream& in, std::string_view file = "<stream>");

/// Extracts one TaskRecord per "Sending TaskInstanceKey(...)" line. Airflow
/// logs carry no numeric task id, so records are numbered sequentially from
/// first_task_id. These records are associable only through pod labels.
std::vector<TaskRecord> parse_airflow_log(std::istream& in, std::string_view file = "<stream>",
                                          std::int64_t first_task_id = 1);

/// Tab-separated pod metadata: node_id, pod_name, cgroupid, then key=value
/// label pairs. Rows without a taskName label are kept but are not workflow
/// pods.
std::vector<PodMeta> parse_pod_meta(std::istream& in, std::string_view file = "<stream>");

/// Pod names from "Started pod/<name>" lines of a `kubectl get events
/// --watch` capture; everything else is ignored.
std::vector<std::string> parse_k8s_started_pods(std::istream& in);

/// Applies the capture-time filter semantics to an already parsed stream:
/// an Open or Delete outside the allowed prefixes is dropped, and every
/// later event of a dropped handle goes with it. The pid filter checks the
/// calling pid per event; with pid_subtree it also admits fork-descendants
/// of the listed pids. Events whose Open was never in the stream at all are
/// kept (they stay visible as orphans).
std::vector<IoEvent> filter_io_events(std::vector<IoEvent> events,
                                      std::span<const ForkEvent> forks,
                                      const FilterSettings& filters);

/// Loads all node directories (concurrently when there are several), the
/// SWMS log(s) and the optional pod files, applying filters at ingest.
/// Node traces come back sorted by node_id.
RunData load_run(const RunInputs& inputs);

}  // namespace wfio
