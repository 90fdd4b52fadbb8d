#include "wfio/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace wfio {

namespace {

double rel_position(Timestamp at, Timestamp t0, Timestamp t1) {
  const std::int64_t denom = t1.nanos - t0.nanos;
  if (denom <= 0) return 0.0;
  return static_cast<double>(at.nanos - t0.nanos) / static_cast<double>(denom);
}

struct ProfileAccumulator {
  Timestamp t0 = Timestamp::max();
  Timestamp t1 = Timestamp::min();
  std::map<std::pair<std::string, std::uint64_t>, FileIoRow> rows;
};

void finalize(TaskIoProfile& p, ProfileAccumulator&& acc) {
  p.t0 = acc.t0;
  p.t1 = acc.t1;
  p.files.reserve(acc.rows.size());
  for (auto& [key, row] : acc.rows) p.files.push_back(std::move(row));
  for (FileIoRow& row : p.files) {
    if (row.first_access && row.last_access) {
      const std::int64_t denom = p.t1.nanos - p.t0.nanos;
      row.span_fraction =
          denom <= 0 ? 0.0
                     : static_cast<double>(row.last_access->nanos - row.first_access->nanos) /
                           static_cast<double>(denom);
    }
    for (TimelineRow& t : row.timeline) t.t_rel = rel_position(t.at, p.t0, p.t1);
  }
}

std::vector<TaskIoProfile> build_profiles_impl(const RunData& run, const Attribution& attr,
                                               std::optional<std::int64_t> only_task) {
  std::map<std::int64_t, ProfileAccumulator> accs;

  for (const NodeTrace& node : run.nodes) {
    auto lit = attr.event_task.find(node.node_id);
    if (lit == attr.event_task.end()) continue;
    const auto& labels = lit->second;

    // Paths are only carried by opens and deletes; resolve them up front so
    // reads and writes can name their file.
    std::unordered_map<std::uint64_t, const std::string*> inode_path;
    for (const IoEvent& e : node.io_events) {
      if (!e.path.empty()) inode_path.try_emplace(e.inode_uid, &e.path);
    }

    for (std::size_t i = 0; i < node.io_events.size() && i < labels.size(); ++i) {
      const std::int64_t task = labels[i];
      if (task == Attribution::kUnbound) continue;
      if (only_task && task != *only_task) continue;
      const IoEvent& e = node.io_events[i];

      ProfileAccumulator& acc = accs[task];
      acc.t0 = std::min(acc.t0, e.time_start);
      acc.t1 = std::max(acc.t1, e.time_end);

      auto [rit, inserted] = acc.rows.try_emplace({node.node_id, e.inode_uid});
      FileIoRow& row = rit->second;
      if (inserted) {
        row.node_id = node.node_id;
        row.inode_uid = e.inode_uid;
        if (auto pit = inode_path.find(e.inode_uid); pit != inode_path.end()) {
          row.path = *pit->second;
        }
      }

      auto touch_access = [&](std::optional<Timestamp>& first_kind) {
        if (!row.first_access || e.time_start < *row.first_access) row.first_access = e.time_start;
        if (!row.last_access || e.time_start > *row.last_access) row.last_access = e.time_start;
        if (!first_kind || e.time_start < *first_kind) first_kind = e.time_start;
        row.timeline.push_back({0.0, e.kind, e.offset, e.size, e.time_start});
      };

      switch (e.kind) {
        case OpKind::Open: ++row.opens; break;
        case OpKind::Read:
          ++row.reads;
          row.bytes_read += e.result;
          touch_access(row.first_read);
          break;
        case OpKind::Write:
          ++row.writes;
          row.bytes_written += e.result;
          touch_access(row.first_write);
          break;
        case OpKind::Close: ++row.closes; break;
        case OpKind::Delete: ++row.deletes; break;
      }
    }
  }

  std::vector<TaskIoProfile> profiles;
  profiles.reserve(accs.size());
  for (auto& [task_id, acc] : accs) {
    TaskIoProfile p;
    p.task_id = task_id;
    finalize(p, std::move(acc));
    profiles.push_back(std::move(p));
  }
  return profiles;
}

const FileIoRow* find_row(const TaskIoProfile& p, std::string_view node_id,
                          std::uint64_t inode_uid) {
  for (const FileIoRow& row : p.files) {
    if (row.node_id == node_id && row.inode_uid == inode_uid) return &row;
  }
  return nullptr;
}

const FileIoRow* find_row_by_path(const TaskIoProfile& p, std::string_view path) {
  for (const FileIoRow& row : p.files) {
    if (row.path == path) return &row;
  }
  return nullptr;
}

TaskIoProfile profile_one(const RunData& run, const Attribution& attr, std::int64_t task_id) {
  auto profiles = build_profiles_impl(run, attr, task_id);
  if (profiles.empty()) {
    throw NoObservedIoError("task " + std::to_string(task_id) + " has no attributed events");
  }
  return std::move(profiles.front());
}

double span_of_row(const FileIoRow* row, std::int64_t task_id) {
  if (!row || (row->reads == 0 && row->writes == 0) || !row->span_fraction) {
    throw InputError("task " + std::to_string(task_id) + " never read or wrote that file");
  }
  return *row->span_fraction;
}

}  // namespace

std::string_view orphan_class_name(OrphanClass c) {
  switch (c) {
    case OrphanClass::None: return "none";
    case OrphanClass::DroppedRecord: return "DroppedRecord";
    case OrphanClass::PreExistingHandle: return "PreExistingHandle";
  }
  return "?";
}

std::pair<Timestamp, Timestamp> task_runtime(const RunData& run, const Attribution& attr,
                                             std::int64_t task_id) {
  Timestamp t0 = Timestamp::max(), t1 = Timestamp::min();
  bool seen = false;
  for (const NodeTrace& node : run.nodes) {
    auto lit = attr.event_task.find(node.node_id);
    if (lit == attr.event_task.end()) continue;
    const auto& labels = lit->second;
    for (std::size_t i = 0; i < node.io_events.size() && i < labels.size(); ++i) {
      if (labels[i] != task_id) continue;
      seen = true;
      t0 = std::min(t0, node.io_events[i].time_start);
      t1 = std::max(t1, node.io_events[i].time_end);
    }
  }
  if (!seen) {
    throw NoObservedIoError("task " + std::to_string(task_id) + " has no attributed events");
  }
  return {t0, t1};
}

std::vector<TaskIoProfile> build_profiles(const RunData& run, const Attribution& attr) {
  return build_profiles_impl(run, attr, std::nullopt);
}

double span_fraction(const RunData& run, const Attribution& attr, std::int64_t task_id,
                     std::string_view node_id, std::uint64_t inode_uid) {
  TaskIoProfile p = profile_one(run, attr, task_id);
  return span_of_row(find_row(p, node_id, inode_uid), task_id);
}

double span_fraction_by_path(const RunData& run, const Attribution& attr, std::int64_t task_id,
                             std::string_view path) {
  TaskIoProfile p = profile_one(run, attr, task_id);
  return span_of_row(find_row_by_path(p, path), task_id);
}

std::vector<TimelineRow> access_timeline(const RunData& run, const Attribution& attr,
                                         std::int64_t task_id, std::string_view path) {
  TaskIoProfile p = profile_one(run, attr, task_id);
  const FileIoRow* row = find_row_by_path(p, path);
  if (!row) throw InputError("task " + std::to_string(task_id) + " never touched '" + std::string(path) + "'");
  return row->timeline;
}

std::vector<std::int64_t> bulkiness_histogram(std::span<const TaskIoProfile> profiles,
                                              int bucket_count) {
  if (bucket_count < 1) throw InputError("bucket_count must be >= 1");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bucket_count), 0);
  for (const TaskIoProfile& p : profiles) {
    for (const FileIoRow& row : p.files) {
      if (!row.span_fraction) continue;
      auto bucket = static_cast<std::int64_t>(std::floor(*row.span_fraction * bucket_count));
      bucket = std::clamp<std::int64_t>(bucket, 0, bucket_count - 1);
      ++counts[static_cast<std::size_t>(bucket)];
    }
  }
  return counts;
}

std::vector<LineageEdge> cross_task_lineage(std::span<const TaskIoProfile> profiles) {
  struct Ref {
    std::int64_t task;
    const FileIoRow* row;
  };
  std::map<std::pair<std::string_view, std::uint64_t>, std::vector<Ref>> by_inode;
  std::map<std::string_view, std::vector<Ref>> by_path;
  for (const TaskIoProfile& p : profiles) {
    for (const FileIoRow& row : p.files) {
      by_inode[{row.node_id, row.inode_uid}].push_back({p.task_id, &row});
      if (!row.path.empty()) by_path[row.path].push_back({p.task_id, &row});
    }
  }

  auto writes_before_read = [](const Ref& w, const Ref& r) {
    return w.task != r.task && w.row->first_write && r.row->first_read &&
           *w.row->first_write < *r.row->first_read;
  };

  std::set<std::tuple<std::int64_t, std::int64_t, std::string, std::string, std::string>> seen;
  std::vector<LineageEdge> edges;
  auto emit = [&](const Ref& w, const Ref& r) {
    std::string path = !w.row->path.empty() ? w.row->path : r.row->path;
    if (!seen.emplace(w.task, r.task, path, w.row->node_id, r.row->node_id).second) return;
    edges.push_back({path, w.row->inode_uid, w.row->node_id, r.row->node_id, w.task, r.task});
  };

  for (const auto& [key, refs] : by_inode) {
    for (const Ref& w : refs) {
      if (w.row->writes == 0) continue;
      for (const Ref& r : refs) {
        if (r.row->reads > 0 && writes_before_read(w, r)) emit(w, r);
      }
    }
  }
  // Across nodes only the path identifies a file (inode uids are per-node).
  for (const auto& [path, refs] : by_path) {
    for (const Ref& w : refs) {
      if (w.row->writes == 0) continue;
      for (const Ref& r : refs) {
        if (r.row->node_id == w.row->node_id) continue;
        if (r.row->reads > 0 && writes_before_read(w, r)) emit(w, r);
      }
    }
  }

  std::sort(edges.begin(), edges.end(), [](const LineageEdge& a, const LineageEdge& b) {
    return std::tie(a.producer_task, a.consumer_task, a.path, a.producer_node, a.consumer_node) <
           std::tie(b.producer_task, b.consumer_task, b.path, b.producer_node, b.consumer_node);
  });
  return edges;
}

LossReport loss_report(const RunData& run, const Attribution* attr) {
  LossReport report;
  for (const NodeTrace& node : run.nodes) {
    NodeLossStats stats;
    stats.node_id = node.node_id;
    stats.events = static_cast<std::int64_t>(node.io_events.size());

    std::unordered_set<std::uint64_t> opened;
    std::unordered_set<std::uint64_t> orphan_handles;
    for (const IoEvent& e : node.io_events) {
      switch (e.kind) {
        case OpKind::Open: opened.insert(e.handle_uid); break;
        case OpKind::Read:
        case OpKind::Write:
        case OpKind::Close:
          if (!opened.contains(e.handle_uid)) {
            ++stats.orphan_events;
            orphan_handles.insert(e.handle_uid);
          }
          break;
        case OpKind::Delete: break;
      }
    }
    stats.orphan_handles = static_cast<std::int64_t>(orphan_handles.size());

    if (attr) {
      if (auto it = attr->event_task.find(node.node_id); it != attr->event_task.end()) {
        for (std::int64_t t : it->second) {
          if (t == Attribution::kUnbound) ++stats.unattributed;
        }
      }
    }
    if (stats.orphan_events > 0) {
      stats.classification =
          node.loss_warnings ? OrphanClass::DroppedRecord : OrphanClass::PreExistingHandle;
    }

    report.orphan_events += stats.orphan_events;
    report.orphan_handles += stats.orphan_handles;
    report.unattributed += stats.unattributed;
    report.per_node.push_back(std::move(stats));
  }
  return report;
}

}  // namespace wfio
