#pragma once

#include "wfio/ingest.hpp"
#include "wfio/process_graph.hpp"

namespace wfio {

/// File names private to the SWMS inside a task work dir, e.g. the task
/// wrapper script or the exit-code file. '*' and '?' glob within the file
/// name; patterns never match directories.
struct MarkerRule {
  std::vector<std::string> patterns;

  static MarkerRule nextflow_defaults();
  bool matches_filename(std::string_view name) const;
};

/// Collapses every maximal run of non-alphanumeric characters to a single
/// underscore and strips leading/trailing underscores. This is the encoding
/// workflow managers apply to task names when labeling pods, so it makes log
/// names and pod labels comparable. Idempotent.
std::string normalize_task_name(std::string_view name);

struct MarkerAccess {
  std::size_t event_index = 0;
  std::int64_t pid = 0;
  Timestamp time;
  std::int64_t task_id = 0;
};

/// Every Open whose path sits directly inside a task's work_dir and whose
/// file name matches the rule. Tasks with an empty work_dir are skipped;
/// two tasks sharing a work_dir is an input error.
std::vector<MarkerAccess> detect_marker_accesses(const NodeTrace& trace,
                                                 std::span<const TaskRecord> tasks,
                                                 const MarkerRule& rule);

/// Work-dir marker association: a marker access binds the accessor's
/// cgroupid to the task; with no usable cgroup (value 0 or unknown) the
/// accessor's process subtree is bound instead. Every event whose pid or
/// cgroup is bound gets the task; the rest are orphans.
Attribution associate_nextflow(const RunData& run,
                               const std::map<std::string, ProcessGraph>& graphs,
                               const MarkerRule& rule = MarkerRule::nextflow_defaults());

/// Pod-label association: each workflow pod's taskName label is matched to a
/// task record by normalized-name equality and the pod's cgroupid is bound
/// to that task.
Attribution associate_kubernetes(const RunData& run,
                                 const std::map<std::string, ProcessGraph>& graphs);

/// Union of two attributions over the same run. Agreement merges silently;
/// disagreement is reported and the work-dir-marker side wins. Call with the
/// marker-based attribution as primary.
Attribution merge_attributions(Attribution primary, const Attribution& secondary);

}  // namespace wfio
