#pragma once

#include <map>
#include <span>
#include <unordered_map>

#include "wfio/trace_model.hpp"

namespace wfio {

/// Per-node forest of fork events. Immutable once built. Pid reuse is
/// resolved by "latest birth record not later than the query time"; parents
/// that never appear as children are implicit roots without a birth record
/// (and therefore without a cgroupid).
class ProcessGraph {
 public:
  /// forks must be time-sorted.
  static ProcessGraph build(std::span<const ForkEvent> forks);

  std::optional<std::uint64_t> cgroup_of(std::int64_t pid, Timestamp at) const;

  /// Transitive fork-children born no later than `at`, including pid itself.
  /// Returned sorted.
  std::vector<std::int64_t> descendants(std::int64_t pid, Timestamp at) const;

  /// Birth time of the incarnation of pid live at `at`, if any.
  std::optional<Timestamp> birth_of(std::int64_t pid, Timestamp at) const;

  bool known(std::int64_t pid) const { return births_.contains(pid); }
  std::size_t size() const { return record_count_; }

 private:
  struct Birth {
    Timestamp time;
    std::uint64_t cgroupid;
  };

  const Birth* latest_birth(std::int64_t pid, Timestamp at) const;

  std::unordered_map<std::int64_t, std::vector<Birth>> births_;
  std::unordered_map<std::int64_t, std::vector<std::pair<Timestamp, std::int64_t>>> children_;
  std::size_t record_count_ = 0;
};

/// One graph per node trace, keyed by node_id.
std::map<std::string, ProcessGraph> build_graphs(std::span<const NodeTrace> nodes);

}  // namespace wfio
