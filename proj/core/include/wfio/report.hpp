#pragma once

#include "wfio/analysis.hpp"

namespace wfio {

struct ReportOptions {
  int bulkiness_buckets = 10;
  bool raw = false;      // per-node statistics only, no association
  bool compact = false;  // single-line JSON instead of pretty-printed
};

struct NodeSummary {
  std::string node_id;
  std::int64_t io_events = 0;
  std::int64_t fork_events = 0;
  std::int64_t attributed = 0;
  std::int64_t unattributed = 0;
  std::int64_t identity_violations = 0;
  bool loss_warnings = false;
};

struct TaskEntry {
  TaskRecord task;
  std::optional<Method> method;
  std::map<std::string, std::uint64_t> cgroups;  // node -> bound cgroupid
  std::optional<std::pair<Timestamp, Timestamp>> runtime;
  TaskIoProfile profile;  // empty when nothing was attributed

  bool observed() const { return runtime.has_value(); }
};

/// Everything one report run produces. The JSON document and the CSV side
/// tables are projections of this structure; nothing is computed twice.
struct ReportDocument {
  int schema_version = 1;
  std::string tool_name;
  std::string tool_version;
  RunInputs inputs;
  std::vector<std::string> marker_patterns;
  int bulkiness_buckets = 10;
  bool associated = false;

  std::vector<NodeSummary> nodes;
  std::vector<TaskEntry> tasks;
  std::vector<LineageEdge> lineage;
  std::vector<std::int64_t> bulkiness;
  LossReport loss;
  std::vector<AttributionConflict> conflicts;
  std::vector<std::string> unmatched_pods;
  std::size_t started_pods = 0;
};

struct PipelineResult {
  RunData data;
  std::optional<Attribution> attribution;
  std::vector<TaskIoProfile> profiles;
  ReportDocument report;
};

/// Ingest -> process graph -> association (work-dir markers, merged with pod
/// labels when pod metadata is present) -> analysis. With options.raw or no
/// SWMS log the association and analysis stages are skipped.
PipelineResult run_pipeline(const RunInputs& inputs, const ReportOptions& options,
                            const MarkerRule& rule = MarkerRule::nextflow_defaults());

std::string render_report_json(const ReportDocument& doc, bool compact = false);
std::string render_bulkiness_csv(const ReportDocument& doc);
std::string render_timelines_csv(const ReportDocument& doc);
std::string render_lineage_csv(const ReportDocument& doc);

/// Writes report.json, bulkiness.csv, timelines.csv and lineage.csv.
void write_report_files(const ReportDocument& doc, const std::filesystem::path& out_dir);

}  // namespace wfio
