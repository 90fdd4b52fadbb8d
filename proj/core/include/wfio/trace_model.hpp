#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wfio {

/// A seconds value from a trace file: epoch wall clock or a cumulative CPU
/// counter. Stored as integer nanoseconds plus the fractional digit count of
/// the on-disk text, so a parsed value serializes back byte-identically.
/// Comparison and equality look at the nanosecond value only.
struct Timestamp {
  std::int64_t nanos = 0;
  std::uint8_t frac_digits = 3;

  static std::optional<Timestamp> parse(std::string_view text);
  static Timestamp from_millis(std::int64_t ms) { return {ms * 1'000'000, 3}; }
  static Timestamp from_seconds(double sec, int frac_digits = 3);
  static constexpr Timestamp min() { return {std::numeric_limits<std::int64_t>::min(), 3}; }
  static constexpr Timestamp max() { return {std::numeric_limits<std::int64_t>::max(), 3}; }

  double seconds() const { return static_cast<double>(nanos) * 1e-9; }
  std::int64_t millis() const { return nanos / 1'000'000; }
  /// Decimal text with exactly frac_digits fractional digits (truncating).
  std::string str() const;

  friend bool operator==(const Timestamp& a, const Timestamp& b) { return a.nanos == b.nanos; }
  friend std::strong_ordering operator<=>(const Timestamp& a, const Timestamp& b) {
    return a.nanos <=> b.nanos;
  }
};

/// a - b in seconds, computed on the integer nanosecond grid.
inline double delta_seconds(Timestamp a, Timestamp b) {
  return static_cast<double>(a.nanos - b.nanos) * 1e-9;
}

enum class OpKind : char { Open = 'O', Read = 'R', Write = 'W', Close = 'C', Delete = 'D' };

std::optional<OpKind> op_kind_from_letter(char c);
inline char op_letter(OpKind k) { return static_cast<char>(k); }

/// One record of the 15-column I/O trace. Reads, writes and closes reference
/// the file through handle_uid and carry an empty path; opens and deletes
/// name the file. handle_uid and inode_uid are tracer-assigned run-unique
/// ids, not kernel handles or raw filesystem inode numbers.
struct IoEvent {
  Timestamp time_start;
  Timestamp time_end;
  std::int64_t pid = 0;
  Timestamp utime_start, utime_end;  // cumulative user CPU seconds, opaque
  Timestamp stime_start, stime_end;  // cumulative kernel CPU seconds, opaque
  std::uint64_t inode_uid = 0;
  OpKind kind = OpKind::Open;
  std::int64_t result = 0;  // bytes moved for Read/Write, status otherwise
  std::uint64_t handle_uid = 0;  // 0 when not applicable (Delete)
  std::int64_t offset = 0;
  std::int64_t size = 0;
  std::uint32_t flags = 0;
  std::string path;  // only Open and Delete carry one

  friend bool operator==(const IoEvent&, const IoEvent&) = default;
};

/// One process creation as logged by the fork tracer.
struct ForkEvent {
  Timestamp time;
  std::int64_t parent_pid = 0;
  std::int64_t pid = 0;
  std::uint64_t cgroupid = 0;

  friend bool operator==(const ForkEvent&, const ForkEvent&) = default;
};

/// All trace records of one host. Pids and cgroupids are only meaningful
/// within a node, so records of different nodes are never merged.
struct NodeTrace {
  std::string node_id;
  std::vector<IoEvent> io_events;      // file order, which is capture order
  std::vector<ForkEvent> fork_events;  // time-sorted
  bool loss_warnings = false;  // a tracer warning sentinel was found next to the trace
};

enum class TaskSource { Nextflow, Airflow };

/// One physical task as reported by the workflow manager's log.
struct TaskRecord {
  std::int64_t task_id = 0;
  std::string name;
  std::string status;
  int exit_code = 0;
  std::string work_dir;  // empty for Airflow records
  TaskSource source = TaskSource::Nextflow;
};

/// One pod as collected from the node-side metadata query.
struct PodMeta {
  std::string node_id;
  std::string pod_name;
  std::uint64_t cgroupid = 0;
  std::map<std::string, std::string> labels;

  bool workflow_pod() const { return labels.contains("taskName"); }
};

enum class Method { WorkDirMarker, PodLabel, ProcessSubtree };

std::string_view method_name(Method m);

struct CgroupBinding {
  std::int64_t task_id = 0;
  Method method = Method::WorkDirMarker;
  Timestamp bound_at;

  friend bool operator==(const CgroupBinding&, const CgroupBinding&) = default;
};

/// Pid-level binding used where no container cgroup exists. The validity
/// interval is the pid incarnation, so a later reuse of the pid value does
/// not inherit the task.
struct PidBinding {
  std::int64_t pid = 0;
  std::int64_t task_id = 0;
  Method method = Method::ProcessSubtree;
  Timestamp valid_from = Timestamp::min();
  Timestamp valid_to = Timestamp::max();

  bool covers(std::int64_t p, Timestamp at) const {
    return p == pid && valid_from <= at && at < valid_to;
  }

  friend bool operator==(const PidBinding&, const PidBinding&) = default;
};

struct AttributionConflict {
  std::string node_id;
  std::string subject;  // "cgroup 131863", "pid 7", "taskName X", "events"
  std::int64_t kept_task = -1;
  std::int64_t dropped_task = -1;
  std::string detail;
};

/// The event -> task mapping produced by the association pass. event_task
/// vectors run parallel to NodeTrace::io_events; kUnbound marks an orphan.
struct Attribution {
  static constexpr std::int64_t kUnbound = -1;

  std::map<std::string, std::map<std::uint64_t, CgroupBinding>> cgroup_bindings;
  std::map<std::string, std::vector<PidBinding>> pid_bindings;
  std::map<std::string, std::vector<std::int64_t>> event_task;
  std::vector<AttributionConflict> conflicts;
  std::vector<std::string> unmatched_pods;

  std::int64_t orphan_count() const;
  std::int64_t attributed_count() const;
  std::int64_t task_of(const std::string& node_id, std::size_t event_index) const;
};

enum class ViolationKind { DuplicateOpen, OrphanReference, InodePathConflict };

std::string_view violation_kind_name(ViolationKind k);

struct IdentityViolation {
  ViolationKind kind;
  std::size_t event_index = 0;
  std::uint64_t handle_uid = 0;
  std::uint64_t inode_uid = 0;
  std::string detail;
};

/// Audits the identity rules of one node trace: every handle_uid has exactly
/// one Open, every Read/Write/Close follows an Open of its handle, and an
/// inode_uid never names two paths without a Delete in between. Findings are
/// data, not failures.
std::vector<IdentityViolation> event_identity_check(const NodeTrace& trace);

}  // namespace wfio
