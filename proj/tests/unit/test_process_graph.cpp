#include <doctest.h>

#include <random>

#include "wfio/process_graph.hpp"

using namespace wfio;

namespace {

ForkEvent fork_at(std::int64_t ms, std::int64_t parent, std::int64_t pid, std::uint64_t cg) {
  return {Timestamp::from_millis(ms), parent, pid, cg};
}

}  // namespace

TEST_CASE("a single fork record yields an implicit root and one child") {
  auto g = ProcessGraph::build(std::vector<ForkEvent>{
      fork_at(1714067937409, 1168419, 1169224, 131863)});
  CHECK(g.size() == 1);
  CHECK(g.known(1169224));
  CHECK_FALSE(g.known(1168419));  // parent never observed as a child

  // The child is in its cgroup from birth on; the implicit root has none.
  CHECK(g.cgroup_of(1169224, Timestamp::from_millis(1714067937744)) == 131863);
  CHECK_FALSE(g.cgroup_of(1168419, Timestamp::max()).has_value());

  auto d = g.descendants(1168419, Timestamp::from_millis(1714067938000));
  CHECK(d == std::vector<std::int64_t>{1168419, 1169224});
}

TEST_CASE("empty graph resolves nothing") {
  auto g = ProcessGraph::build({});
  CHECK(g.size() == 0);
  CHECK_FALSE(g.cgroup_of(42, Timestamp::max()).has_value());
  CHECK(g.descendants(42, Timestamp::max()) == std::vector<std::int64_t>{42});
}

TEST_CASE("cgroup_of ignores births after the query time") {
  auto g = ProcessGraph::build(std::vector<ForkEvent>{fork_at(5000, 1, 7, 99)});
  CHECK_FALSE(g.cgroup_of(7, Timestamp::from_millis(4999)).has_value());
  CHECK(g.cgroup_of(7, Timestamp::from_millis(5000)) == 99);
}

TEST_CASE("pid reuse resolves to the latest birth not later than the query") {
  auto g = ProcessGraph::build(std::vector<ForkEvent>{
      fork_at(1000, 1, 5, 10),
      fork_at(9000, 2, 5, 20),
  });
  CHECK(g.cgroup_of(5, Timestamp::from_millis(5000)) == 10);
  CHECK(g.cgroup_of(5, Timestamp::from_millis(12000)) == 20);
  CHECK(g.cgroup_of(5, Timestamp::from_millis(9000)) == 20);
  CHECK(g.birth_of(5, Timestamp::from_millis(5000)) == Timestamp::from_millis(1000));
  CHECK(g.birth_of(5, Timestamp::max()) == Timestamp::from_millis(9000));
}

TEST_CASE("descendants of a chain honor the query time") {
  auto g = ProcessGraph::build(std::vector<ForkEvent>{
      fork_at(1000, 10, 20, 0),
      fork_at(2000, 20, 30, 0),
  });
  CHECK(g.descendants(10, Timestamp::max()) == std::vector<std::int64_t>{10, 20, 30});
  // Before the grandchild's birth only the first two are in the subtree.
  CHECK(g.descendants(10, Timestamp::from_millis(1500)) == std::vector<std::int64_t>{10, 20});
  CHECK(g.descendants(30, Timestamp::max()) == std::vector<std::int64_t>{30});
}

TEST_CASE("descendants are monotone in the query time") {
  std::mt19937_64 rng(11);
  std::vector<ForkEvent> forks;
  std::vector<std::int64_t> pids{1};
  for (int i = 0; i < 200; ++i) {
    std::int64_t parent = pids[rng() % pids.size()];
    std::int64_t child = 100 + i;
    forks.push_back(fork_at(1000 + i * 10, parent, child, 0));
    pids.push_back(child);
  }
  auto g = ProcessGraph::build(forks);
  for (std::int64_t t1 : {1200, 1800, 2400}) {
    auto early = g.descendants(1, Timestamp::from_millis(t1));
    auto late = g.descendants(1, Timestamp::from_millis(t1 + 500));
    CHECK(std::includes(late.begin(), late.end(), early.begin(), early.end()));
  }
}

TEST_CASE("queries are repeatable") {
  auto g = ProcessGraph::build(std::vector<ForkEvent>{fork_at(1000, 1, 2, 3)});
  auto at = Timestamp::from_millis(2000);
  CHECK(g.cgroup_of(2, at) == g.cgroup_of(2, at));
  CHECK(g.descendants(1, at) == g.descendants(1, at));
}

TEST_CASE("graphs are built per node and never cross node boundaries") {
  NodeTrace a, b;
  a.node_id = "a";
  a.fork_events = {fork_at(1000, 1, 2, 77)};
  b.node_id = "b";
  std::vector<NodeTrace> nodes{a, b};
  auto graphs = build_graphs(nodes);
  REQUIRE(graphs.size() == 2);
  CHECK(graphs.at("a").cgroup_of(2, Timestamp::max()) == 77);
  CHECK_FALSE(graphs.at("b").cgroup_of(2, Timestamp::max()).has_value());
}
