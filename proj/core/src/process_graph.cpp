#include "wfio/process_graph.hpp"

#include <algorithm>
#include <unordered_set>

namespace wfio {

ProcessGraph ProcessGraph::build(std::span<const ForkEvent> forks) {
  ProcessGraph g;
  g.record_count_ = forks.size();
  for (const ForkEvent& f : forks) {
    g.births_[f.pid].push_back({f.time, f.cgroupid});
    g.children_[f.parent_pid].emplace_back(f.time, f.pid);
  }
  // Input is time-sorted, but per-pid vectors must hold that order on their
  // own for the binary searches below.
  for (auto& [pid, births] : g.births_) {
    std::stable_sort(births.begin(), births.end(),
                     [](const Birth& a, const Birth& b) { return a.time < b.time; });
  }
  for (auto& [pid, kids] : g.children_) {
    std::stable_sort(kids.begin(), kids.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return g;
}

const ProcessGraph::Birth* ProcessGraph::latest_birth(std::int64_t pid, Timestamp at) const {
  auto it = births_.find(pid);
  if (it == births_.end()) return nullptr;
  const auto& v = it->second;
  auto pos = std::upper_bound(v.begin(), v.end(), at,
                              [](Timestamp t, const Birth& b) { return t < b.time; });
  if (pos == v.begin()) return nullptr;
  return &*std::prev(pos);
}

std::optional<std::uint64_t> ProcessGraph::cgroup_of(std::int64_t pid, Timestamp at) const {
  const Birth* b = latest_birth(pid, at);
  if (!b) return std::nullopt;
  return b->cgroupid;
}

std::optional<Timestamp> ProcessGraph::birth_of(std::int64_t pid, Timestamp at) const {
  const Birth* b = latest_birth(pid, at);
  if (!b) return std::nullopt;
  return b->time;
}

std::vector<std::int64_t> ProcessGraph::descendants(std::int64_t pid, Timestamp at) const {
  std::vector<std::int64_t> out;
  std::unordered_set<std::int64_t> visited;
  std::vector<std::int64_t> stack{pid};
  visited.insert(pid);
  while (!stack.empty()) {
    std::int64_t cur = stack.back();
    stack.pop_back();
    out.push_back(cur);
    auto it = children_.find(cur);
    if (it == children_.end()) continue;
    for (const auto& [birth, child] : it->second) {
      if (birth > at) break;  // time-sorted
      if (visited.insert(child).second) stack.push_back(child);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, ProcessGraph> build_graphs(std::span<const NodeTrace> nodes) {
  std::map<std::string, ProcessGraph> graphs;
  for (const NodeTrace& node : nodes) {
    graphs.emplace(node.node_id, ProcessGraph::build(node.fork_events));
  }
  return graphs;
}

}  // namespace wfio
