#pragma once

#include "wfio/association.hpp"

namespace wfio {

struct NoObservedIoError : InputError {
  using InputError::InputError;
};

struct TimelineRow {
  double t_rel = 0;  // (time_start - t0) / (t1 - t0) of the owning task
  OpKind kind = OpKind::Read;
  std::int64_t offset = 0;
  std::int64_t size = 0;
  Timestamp at;
};

/// Per-file metrics of one task. An "access" is a read or a write; opens,
/// closes and deletes are counted but do not move the access span. bytes_read
/// and bytes_written sum the result column (bytes actually moved), not the
/// requested size.
struct FileIoRow {
  std::string node_id;
  std::uint64_t inode_uid = 0;
  std::string path;  // from opens/deletes on that node; may be unknown
  std::int64_t bytes_read = 0;
  std::int64_t bytes_written = 0;
  std::int64_t opens = 0, reads = 0, writes = 0, closes = 0, deletes = 0;
  std::optional<Timestamp> first_access, last_access;
  std::optional<Timestamp> first_read, first_write;
  std::optional<double> span_fraction;  // unset when the task never read/wrote the file
  std::vector<TimelineRow> timeline;    // reads/writes in time order
};

struct TaskIoProfile {
  std::int64_t task_id = 0;
  Timestamp t0, t1;  // window over the task's attributed events
  std::vector<FileIoRow> files;  // sorted by (node_id, inode_uid)
};

struct LineageEdge {
  std::string path;
  std::uint64_t inode_uid = 0;  // producer-side inode
  std::string producer_node, consumer_node;
  std::int64_t producer_task = 0, consumer_task = 0;
};

enum class OrphanClass { None, DroppedRecord, PreExistingHandle };

std::string_view orphan_class_name(OrphanClass c);

struct NodeLossStats {
  std::string node_id;
  std::int64_t events = 0;
  std::int64_t orphan_events = 0;   // reads/writes/closes with no prior open
  std::int64_t orphan_handles = 0;  // distinct handles among those
  std::int64_t unattributed = 0;
  OrphanClass classification = OrphanClass::None;
};

struct LossReport {
  std::vector<NodeLossStats> per_node;
  std::int64_t orphan_events = 0;
  std::int64_t orphan_handles = 0;
  std::int64_t unattributed = 0;
};

/// [min time_start, max time_end] over the task's attributed events.
/// Throws NoObservedIoError when nothing is attributed to the task.
std::pair<Timestamp, Timestamp> task_runtime(const RunData& run, const Attribution& attr,
                                             std::int64_t task_id);

std::vector<TaskIoProfile> build_profiles(const RunData& run, const Attribution& attr);

/// (last access - first access) / task runtime for one file; 0 when the
/// runtime window is empty. Throws when the task never read/wrote the file.
double span_fraction(const RunData& run, const Attribution& attr, std::int64_t task_id,
                     std::string_view node_id, std::uint64_t inode_uid);
double span_fraction_by_path(const RunData& run, const Attribution& attr, std::int64_t task_id,
                             std::string_view path);

/// One row per attributed read/write of the file, time-ordered, with times
/// rescaled to the task runtime. Plot-ready.
std::vector<TimelineRow> access_timeline(const RunData& run, const Attribution& attr,
                                         std::int64_t task_id, std::string_view path);

/// Span fractions of all (task, file) rows that have one, bucketed into
/// equal-width bins over [0, 1]; the value 1.0 lands in the last bin.
std::vector<std::int64_t> bulkiness_histogram(std::span<const TaskIoProfile> profiles,
                                              int bucket_count);

/// Producer -> consumer edges: task A wrote the file before task B first
/// read it. File identity is the inode on one node and the path across
/// nodes.
std::vector<LineageEdge> cross_task_lineage(std::span<const TaskIoProfile> profiles);

/// Orphaned handle references (dropped or pre-monitoring opens) and
/// unattributed events, per node and total. Pass attr = nullptr when no
/// association was run.
LossReport loss_report(const RunData& run, const Attribution* attr = nullptr);

}  // namespace wfio
