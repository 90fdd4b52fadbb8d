#include "wfio/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "wfio/version.hpp"

namespace wfio {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string fixed9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

ordered_json json_timestamp(Timestamp t) { return t.seconds(); }

ordered_json json_task(const TaskEntry& entry) {
  ordered_json j;
  j["task_id"] = entry.task.task_id;
  j["name"] = entry.task.name;
  j["source"] = entry.task.source == TaskSource::Nextflow ? "nextflow" : "airflow";
  j["status"] = entry.task.status;
  j["exit_code"] = entry.task.exit_code;
  j["work_dir"] = entry.task.work_dir;
  j["method"] = entry.method ? ordered_json(method_name(*entry.method)) : ordered_json(nullptr);
  ordered_json cgroups = ordered_json::object();
  for (const auto& [node, cg] : entry.cgroups) cgroups[node] = cg;
  j["cgroups"] = std::move(cgroups);
  if (entry.runtime) {
    j["runtime"] = {{"t0", json_timestamp(entry.runtime->first)},
                    {"t1", json_timestamp(entry.runtime->second)},
                    {"seconds", delta_seconds(entry.runtime->second, entry.runtime->first)}};
  } else {
    j["runtime"] = nullptr;
  }
  ordered_json files = ordered_json::array();
  for (const FileIoRow& row : entry.profile.files) {
    ordered_json f;
    f["node"] = row.node_id;
    f["inode_uid"] = row.inode_uid;
    f["path"] = row.path;
    f["bytes_read"] = row.bytes_read;
    f["bytes_written"] = row.bytes_written;
    f["ops"] = {{"open", row.opens},
                {"read", row.reads},
                {"write", row.writes},
                {"close", row.closes},
                {"delete", row.deletes}};
    f["first_access"] =
        row.first_access ? ordered_json(json_timestamp(*row.first_access)) : ordered_json(nullptr);
    f["last_access"] =
        row.last_access ? ordered_json(json_timestamp(*row.last_access)) : ordered_json(nullptr);
    f["span_fraction"] =
        row.span_fraction ? ordered_json(*row.span_fraction) : ordered_json(nullptr);
    files.push_back(std::move(f));
  }
  j["files"] = std::move(files);
  return j;
}

}  // namespace

PipelineResult run_pipeline(const RunInputs& inputs, const ReportOptions& options,
                            const MarkerRule& rule) {
  PipelineResult result;
  result.data = load_run(inputs);

  const bool associate = !options.raw && !result.data.tasks.empty();
  if (associate) {
    auto graphs = build_graphs(result.data.nodes);
    Attribution attr = associate_nextflow(result.data, graphs, rule);
    if (!result.data.pods.empty()) {
      attr = merge_attributions(std::move(attr), associate_kubernetes(result.data, graphs));
    }
    result.attribution = std::move(attr);
    result.profiles = build_profiles(result.data, *result.attribution);
  }

  ReportDocument& doc = result.report;
  doc.tool_name = std::string(kToolName);
  doc.tool_version = std::string(kToolVersion);
  doc.inputs = inputs;
  doc.marker_patterns = rule.patterns;
  doc.bulkiness_buckets = options.bulkiness_buckets;
  doc.associated = associate;
  doc.started_pods = result.data.started_pods.size();

  for (const NodeTrace& node : result.data.nodes) {
    NodeSummary s;
    s.node_id = node.node_id;
    s.io_events = static_cast<std::int64_t>(node.io_events.size());
    s.fork_events = static_cast<std::int64_t>(node.fork_events.size());
    s.identity_violations = static_cast<std::int64_t>(event_identity_check(node).size());
    s.loss_warnings = node.loss_warnings;
    if (result.attribution) {
      if (auto it = result.attribution->event_task.find(node.node_id);
          it != result.attribution->event_task.end()) {
        for (std::int64_t t : it->second) {
          ++(t == Attribution::kUnbound ? s.unattributed : s.attributed);
        }
      }
    }
    doc.nodes.push_back(std::move(s));
  }

  if (associate) {
    const Attribution& attr = *result.attribution;
    std::map<std::int64_t, const TaskIoProfile*> by_task;
    for (const TaskIoProfile& p : result.profiles) by_task.emplace(p.task_id, &p);

    std::vector<TaskRecord> sorted_tasks = result.data.tasks;
    std::sort(sorted_tasks.begin(), sorted_tasks.end(),
              [](const TaskRecord& a, const TaskRecord& b) { return a.task_id < b.task_id; });
    for (const TaskRecord& task : sorted_tasks) {
      TaskEntry entry;
      entry.task = task;
      for (const auto& [node, slot] : attr.cgroup_bindings) {
        for (const auto& [cg, binding] : slot) {
          if (binding.task_id != task.task_id) continue;
          entry.cgroups.emplace(node, cg);
          if (!entry.method || static_cast<int>(binding.method) < static_cast<int>(*entry.method)) {
            entry.method = binding.method;
          }
        }
      }
      for (const auto& [node, bindings] : attr.pid_bindings) {
        for (const PidBinding& b : bindings) {
          if (b.task_id == task.task_id && !entry.method) entry.method = b.method;
        }
      }
      if (auto it = by_task.find(task.task_id); it != by_task.end()) {
        entry.profile = *it->second;
        entry.runtime = std::make_pair(it->second->t0, it->second->t1);
      } else {
        entry.profile.task_id = task.task_id;
      }
      doc.tasks.push_back(std::move(entry));
    }

    doc.lineage = cross_task_lineage(result.profiles);
    doc.bulkiness = bulkiness_histogram(result.profiles, options.bulkiness_buckets);
    doc.loss = loss_report(result.data, &attr);
    doc.conflicts = attr.conflicts;
    doc.unmatched_pods = attr.unmatched_pods;
  } else {
    doc.bulkiness.assign(static_cast<std::size_t>(options.bulkiness_buckets), 0);
    doc.loss = loss_report(result.data, nullptr);
  }
  return result;
}

std::string render_report_json(const ReportDocument& doc, bool compact) {
  ordered_json j;
  j["schema_version"] = doc.schema_version;
  j["tool"] = {{"name", doc.tool_name}, {"version", doc.tool_version}};

  ordered_json inputs;
  ordered_json dirs = ordered_json::array();
  for (const auto& d : doc.inputs.node_dirs) dirs.push_back(d.string());
  inputs["trace_dirs"] = std::move(dirs);
  inputs["nextflow_log"] = doc.inputs.nextflow_log.string();
  inputs["airflow_log"] = doc.inputs.airflow_log.string();
  inputs["pod_meta"] = doc.inputs.pod_meta.string();
  inputs["k8s_events"] = doc.inputs.k8s_events.string();
  inputs["k8s_started_pods"] = doc.started_pods;
  j["inputs"] = std::move(inputs);

  ordered_json filters;
  filters["dir_prefixes"] = doc.inputs.filters.dir_prefixes;
  filters["fs_tag"] = doc.inputs.filters.fs_tag;
  filters["pids"] = doc.inputs.filters.pids;
  filters["pid_subtree"] = doc.inputs.filters.pid_subtree;
  filters["markers"] = doc.marker_patterns;
  j["filters"] = std::move(filters);
  j["associated"] = doc.associated;

  ordered_json nodes = ordered_json::array();
  for (const NodeSummary& n : doc.nodes) {
    nodes.push_back({{"node_id", n.node_id},
                     {"io_events", n.io_events},
                     {"fork_events", n.fork_events},
                     {"attributed", n.attributed},
                     {"unattributed", n.unattributed},
                     {"identity_violations", n.identity_violations},
                     {"loss_warnings", n.loss_warnings}});
  }
  j["nodes"] = std::move(nodes);

  ordered_json tasks = ordered_json::array();
  for (const TaskEntry& entry : doc.tasks) tasks.push_back(json_task(entry));
  j["tasks"] = std::move(tasks);

  ordered_json lineage = ordered_json::array();
  for (const LineageEdge& e : doc.lineage) {
    lineage.push_back({{"path", e.path},
                       {"inode_uid", e.inode_uid},
                       {"producer_task", e.producer_task},
                       {"producer_node", e.producer_node},
                       {"consumer_task", e.consumer_task},
                       {"consumer_node", e.consumer_node}});
  }
  j["lineage"] = std::move(lineage);

  j["bulkiness"] = {{"buckets", doc.bulkiness_buckets}, {"counts", doc.bulkiness}};

  ordered_json loss;
  loss["orphan_events"] = doc.loss.orphan_events;
  loss["orphan_handles"] = doc.loss.orphan_handles;
  loss["unattributed"] = doc.loss.unattributed;
  ordered_json per_node = ordered_json::array();
  for (const NodeLossStats& n : doc.loss.per_node) {
    per_node.push_back({{"node_id", n.node_id},
                        {"events", n.events},
                        {"orphan_events", n.orphan_events},
                        {"orphan_handles", n.orphan_handles},
                        {"unattributed", n.unattributed},
                        {"classification", orphan_class_name(n.classification)}});
  }
  loss["per_node"] = std::move(per_node);
  j["loss"] = std::move(loss);

  ordered_json conflicts = ordered_json::array();
  for (const AttributionConflict& c : doc.conflicts) {
    conflicts.push_back({{"node_id", c.node_id},
                         {"subject", c.subject},
                         {"kept_task", c.kept_task},
                         {"dropped_task", c.dropped_task},
                         {"detail", c.detail}});
  }
  j["conflicts"] = std::move(conflicts);
  j["unmatched_pods"] = doc.unmatched_pods;

  return compact ? j.dump() : j.dump(2) + "\n";
}

std::string render_bulkiness_csv(const ReportDocument& doc) {
  std::string out = "bucket_low,bucket_high,count\n";
  const auto n = static_cast<double>(doc.bulkiness_buckets);
  for (std::size_t i = 0; i < doc.bulkiness.size(); ++i) {
    out += fixed9(static_cast<double>(i) / n) + "," +
           fixed9(static_cast<double>(i + 1) / n) + "," + std::to_string(doc.bulkiness[i]) + "\n";
  }
  return out;
}

std::string render_timelines_csv(const ReportDocument& doc) {
  std::string out = "task_id,node,path,inode_uid,t_rel,kind,offset,size\n";
  for (const TaskEntry& entry : doc.tasks) {
    for (const FileIoRow& row : entry.profile.files) {
      for (const TimelineRow& t : row.timeline) {
        out += std::to_string(entry.task.task_id) + "," + csv_escape(row.node_id) + "," +
               csv_escape(row.path) + "," + std::to_string(row.inode_uid) + "," +
               fixed9(t.t_rel) + "," + op_letter(t.kind) + "," + std::to_string(t.offset) + "," +
               std::to_string(t.size) + "\n";
      }
    }
  }
  return out;
}

std::string render_lineage_csv(const ReportDocument& doc) {
  std::string out = "path,inode_uid,producer_task,producer_node,consumer_task,consumer_node\n";
  for (const LineageEdge& e : doc.lineage) {
    out += csv_escape(e.path) + "," + std::to_string(e.inode_uid) + "," +
           std::to_string(e.producer_task) + "," + csv_escape(e.producer_node) + "," +
           std::to_string(e.consumer_task) + "," + csv_escape(e.consumer_node) + "\n";
  }
  return out;
}

void write_report_files(const ReportDocument& doc, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream out(out_dir / name, std::ios::binary);
    if (!out) throw InputError("cannot write " + (out_dir / name).string());
    out << content;
  };
  write("report.json", render_report_json(doc, false));
  write("bulkiness.csv", render_bulkiness_csv(doc));
  write("timelines.csv", render_timelines_csv(doc));
  write("lineage.csv", render_lineage_csv(doc));
}

}  // namespace wfio
