#include "wfio/association.hpp"

#include <algorithm>
#include <unordered_map>

namespace wfio {

namespace {

bool is_word_char(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Iterative glob with '*' backtracking and '?'.
bool glob_match(std::string_view pat, std::string_view s) {
  std::size_t p = 0, i = 0;
  std::size_t star = std::string_view::npos, mark = 0;
  while (i < s.size()) {
    if (p < pat.size() && (pat[p] == '?' || pat[p] == s[i])) {
      ++p;
      ++i;
    } else if (p < pat.size() && pat[p] == '*') {
      star = p++;
      mark = i;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      i = ++mark;
    } else {
      return false;
    }
  }
  while (p < pat.size() && pat[p] == '*') ++p;
  return p == pat.size();
}

std::string_view strip_trailing_slashes(std::string_view s) {
  while (s.size() > 1 && s.back() == '/') s.remove_suffix(1);
  return s;
}

void bind_cgroup(Attribution& a, const std::string& node_id, std::uint64_t cgroupid,
                 std::int64_t task_id, Method method, Timestamp at) {
  auto& slot = a.cgroup_bindings[node_id];
  auto [it, inserted] = slot.try_emplace(cgroupid, CgroupBinding{task_id, method, at});
  if (!inserted && it->second.task_id != task_id) {
    a.conflicts.push_back({node_id, "cgroup " + std::to_string(cgroupid), it->second.task_id,
                           task_id,
                           "cgroup already bound by " + std::string(method_name(it->second.method)) +
                               "; earlier binding kept"});
  }
}

void bind_pid(Attribution& a, const std::string& node_id, PidBinding binding) {
  auto& slot = a.pid_bindings[node_id];
  for (const PidBinding& existing : slot) {
    if (existing.pid != binding.pid) continue;
    const bool overlap =
        existing.valid_from < binding.valid_to && binding.valid_from < existing.valid_to;
    if (!overlap) continue;
    if (existing.task_id != binding.task_id) {
      a.conflicts.push_back({node_id, "pid " + std::to_string(binding.pid), existing.task_id,
                             binding.task_id, "pid already bound; earlier binding kept"});
    }
    return;
  }
  slot.push_back(binding);
}

// Fills event_task for every node from the binding tables: cgroup bindings
// first (resolved per event through the fork graph), pid bindings second.
void label_events(const RunData& run, const std::map<std::string, ProcessGraph>& graphs,
                  Attribution& a) {
  for (const NodeTrace& node : run.nodes) {
    auto& labels = a.event_task[node.node_id];
    labels.assign(node.io_events.size(), Attribution::kUnbound);

    const auto* cgroup_slot = [&]() -> const std::map<std::uint64_t, CgroupBinding>* {
      auto it = a.cgroup_bindings.find(node.node_id);
      return it == a.cgroup_bindings.end() ? nullptr : &it->second;
    }();
    std::unordered_map<std::int64_t, std::vector<const PidBinding*>> by_pid;
    if (auto it = a.pid_bindings.find(node.node_id); it != a.pid_bindings.end()) {
      for (const PidBinding& b : it->second) by_pid[b.pid].push_back(&b);
    }
    const ProcessGraph* graph = nullptr;
    if (auto it = graphs.find(node.node_id); it != graphs.end()) graph = &it->second;

    for (std::size_t i = 0; i < node.io_events.size(); ++i) {
      const IoEvent& e = node.io_events[i];
      if (cgroup_slot && graph) {
        if (auto cg = graph->cgroup_of(e.pid, e.time_start); cg && *cg != 0) {
          if (auto it = cgroup_slot->find(*cg); it != cgroup_slot->end()) {
            labels[i] = it->second.task_id;
            continue;
          }
        }
      }
      if (auto it = by_pid.find(e.pid); it != by_pid.end()) {
        for (const PidBinding* b : it->second) {
          if (b->covers(e.pid, e.time_start)) {
            labels[i] = b->task_id;
            break;
          }
        }
      }
    }
  }
}

}  // namespace

MarkerRule MarkerRule::nextflow_defaults() {
  return {{".command.sh", ".command.run", ".command.begin", ".exitcode"}};
}

bool MarkerRule::matches_filename(std::string_view name) const {
  for (const std::string& pat : patterns) {
    if (pat.find_first_of("*?") == std::string::npos ? pat == name : glob_match(pat, name)) {
      return true;
    }
  }
  return false;
}

std::string normalize_task_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  bool pending_sep = false;
  for (char c : name) {
    if (is_word_char(c)) {
      if (pending_sep && !out.empty()) out += '_';
      pending_sep = false;
      out += c;
    } else {
      pending_sep = true;
    }
  }
  return out;
}

std::vector<MarkerAccess> detect_marker_accesses(const NodeTrace& trace,
                                                 std::span<const TaskRecord> tasks,
                                                 const MarkerRule& rule) {
  std::unordered_map<std::string_view, std::int64_t> by_work_dir;
  for (const TaskRecord& t : tasks) {
    if (t.work_dir.empty()) continue;
    std::string_view wd = strip_trailing_slashes(t.work_dir);
    auto [it, inserted] = by_work_dir.emplace(wd, t.task_id);
    if (!inserted) {
      throw InputError("tasks " + std::to_string(it->second) + " and " +
                       std::to_string(t.task_id) + " share work dir '" + std::string(wd) + "'");
    }
  }

  std::vector<MarkerAccess> hits;
  for (std::size_t i = 0; i < trace.io_events.size(); ++i) {
    const IoEvent& e = trace.io_events[i];
    if (e.kind != OpKind::Open || e.path.empty()) continue;
    auto slash = e.path.rfind('/');
    if (slash == std::string::npos) continue;
    std::string_view dir(e.path.data(), slash == 0 ? 1 : slash);
    std::string_view name(e.path.data() + slash + 1, e.path.size() - slash - 1);
    auto it = by_work_dir.find(dir);
    if (it == by_work_dir.end() || !rule.matches_filename(name)) continue;
    hits.push_back({i, e.pid, e.time_start, it->second});
  }
  return hits;
}

Attribution associate_nextflow(const RunData& run,
                               const std::map<std::string, ProcessGraph>& graphs,
                               const MarkerRule& rule) {
  Attribution a;
  for (const NodeTrace& node : run.nodes) {
    auto git = graphs.find(node.node_id);
    if (git == graphs.end()) continue;
    const ProcessGraph& graph = git->second;

    // Marker accesses come out in event order, which is time order, so the
    // first binding of a cgroup wins and later disagreements are reported.
    for (const MarkerAccess& m : detect_marker_accesses(node, run.tasks, rule)) {
      auto cg = graph.cgroup_of(m.pid, m.time);
      if (cg && *cg != 0) {
        bind_cgroup(a, node.node_id, *cg, m.task_id, Method::WorkDirMarker, m.time);
        continue;
      }
      // Container-less task: the accessor and everything it ever forks carry
      // the task. Each pid is bound for its own incarnation.
      for (std::int64_t pid : graph.descendants(m.pid, Timestamp::max())) {
        PidBinding b;
        b.pid = pid;
        b.task_id = m.task_id;
        b.method = Method::ProcessSubtree;
        b.valid_from = graph.birth_of(pid, Timestamp::max()).value_or(Timestamp::min());
        bind_pid(a, node.node_id, b);
      }
    }
  }
  label_events(run, graphs, a);
  return a;
}

Attribution associate_kubernetes(const RunData& run,
                                 const std::map<std::string, ProcessGraph>& graphs) {
  Attribution a;
  std::map<std::string, std::vector<std::int64_t>> by_name;
  for (const TaskRecord& t : run.tasks) by_name[normalize_task_name(t.name)].push_back(t.task_id);

  for (const PodMeta& pod : run.pods) {
    if (!pod.workflow_pod()) continue;
    std::string norm = normalize_task_name(pod.labels.at("taskName"));
    auto it = by_name.find(norm);
    if (it == by_name.end()) {
      a.unmatched_pods.push_back(pod.pod_name);
      continue;
    }
    if (it->second.size() > 1) {
      a.conflicts.push_back({pod.node_id, "taskName " + norm, -1, -1,
                             "label matches " + std::to_string(it->second.size()) +
                                 " tasks; pod " + pod.pod_name + " skipped"});
      continue;
    }
    bind_cgroup(a, pod.node_id, pod.cgroupid, it->second.front(), Method::PodLabel, Timestamp{});
  }
  label_events(run, graphs, a);
  return a;
}

Attribution merge_attributions(Attribution primary, const Attribution& secondary) {
  for (const auto& [node_id, slot] : secondary.cgroup_bindings) {
    auto& dst = primary.cgroup_bindings[node_id];
    for (const auto& [cgroupid, binding] : slot) {
      auto [it, inserted] = dst.try_emplace(cgroupid, binding);
      if (inserted || it->second.task_id == binding.task_id) continue;
      const bool keep_existing = it->second.method == Method::WorkDirMarker ||
                                 binding.method != Method::WorkDirMarker;
      primary.conflicts.push_back(
          {node_id, "cgroup " + std::to_string(cgroupid),
           keep_existing ? it->second.task_id : binding.task_id,
           keep_existing ? binding.task_id : it->second.task_id,
           "attributions disagree; work-dir marker binding kept"});
      if (!keep_existing) it->second = binding;
    }
  }
  for (const auto& [node_id, bindings] : secondary.pid_bindings) {
    for (const PidBinding& b : bindings) bind_pid(primary, node_id, b);
  }

  // Event labels: the primary (marker-based) result wins where both sides
  // disagree, mirroring the binding precedence above.
  std::int64_t disagreements = 0;
  for (const auto& [node_id, labels] : secondary.event_task) {
    auto [it, inserted] = primary.event_task.try_emplace(node_id, labels);
    if (inserted) continue;
    auto& dst = it->second;
    for (std::size_t i = 0; i < dst.size() && i < labels.size(); ++i) {
      if (dst[i] == Attribution::kUnbound) {
        dst[i] = labels[i];
      } else if (labels[i] != Attribution::kUnbound && labels[i] != dst[i]) {
        ++disagreements;
      }
    }
  }
  if (disagreements > 0) {
    primary.conflicts.push_back({"", "events", -1, -1,
                                 std::to_string(disagreements) +
                                     " events labeled differently; work-dir marker result kept"});
  }

  primary.conflicts.insert(primary.conflicts.end(), secondary.conflicts.begin(),
                           secondary.conflicts.end());
  primary.unmatched_pods.insert(primary.unmatched_pods.end(), secondary.unmatched_pods.begin(),
                                secondary.unmatched_pods.end());
  return primary;
}

}  // namespace wfio
