#include <doctest.h>

#include <random>

#include "golden_lines.hpp"
#include "wfio/association.hpp"

using namespace wfio;

TEST_CASE("normalize_task_name") {
  CHECK(normalize_task_name(golden::kTaskName) == golden::kPodLabel);
  CHECK(normalize_task_name("ABC") == "ABC");
  CHECK(normalize_task_name("a  (b)") == "a_b");
  CHECK(normalize_task_name("") == "");
  CHECK(normalize_task_name("___") == "");
  CHECK(normalize_task_name("(x)") == "x");
}

TEST_CASE("normalize_task_name is idempotent on random input") {
  std::mt19937_64 rng(23);
  const char alphabet[] = "abzAZ09 _:()-./%";
  for (int i = 0; i < 200; ++i) {
    std::string s;
    for (int k = 0; k < static_cast<int>(rng() % 40); ++k) {
      s += alphabet[rng() % (sizeof alphabet - 1)];
    }
    std::string once = normalize_task_name(s);
    CHECK(normalize_task_name(once) == once);
  }
}

TEST_CASE("marker rule matching") {
  MarkerRule rule = MarkerRule::nextflow_defaults();
  CHECK(rule.matches_filename(".command.sh"));
  CHECK(rule.matches_filename(".exitcode"));
  CHECK_FALSE(rule.matches_filename("WT_REP2_1_val_1.fq.gz"));
  CHECK_FALSE(rule.matches_filename("command.sh"));

  MarkerRule globs{{".command.*", "?exit"}};
  CHECK(globs.matches_filename(".command.run"));
  CHECK(globs.matches_filename(".command.sh"));
  CHECK(globs.matches_filename("Xexit"));
  CHECK_FALSE(globs.matches_filename("exit"));
}

namespace {

IoEvent open_of(const std::string& path, std::int64_t pid, std::int64_t ms,
                std::uint64_t handle) {
  IoEvent e;
  e.time_start = e.time_end = Timestamp::from_millis(ms);
  e.pid = pid;
  e.kind = OpKind::Open;
  e.handle_uid = handle;
  e.inode_uid = handle;
  e.path = path;
  e.flags = 0x8000;
  return e;
}

IoEvent rw_of(OpKind kind, std::int64_t pid, std::int64_t ms, std::uint64_t handle,
              std::int64_t bytes) {
  IoEvent e;
  e.time_start = e.time_end = Timestamp::from_millis(ms);
  e.pid = pid;
  e.kind = kind;
  e.handle_uid = handle;
  e.inode_uid = handle;
  e.result = bytes;
  e.size = bytes;
  return e;
}

TaskRecord task_of(std::int64_t id, const std::string& name, const std::string& work_dir) {
  TaskRecord t;
  t.task_id = id;
  t.name = name;
  t.status = "COMPLETED";
  t.work_dir = work_dir;
  return t;
}

}  // namespace

TEST_CASE("detect_marker_accesses") {
  NodeTrace trace;
  trace.node_id = "n1";
  std::vector<TaskRecord> tasks{task_of(6, golden::kTaskName, golden::kWorkDir)};

  SUBCASE("a marker open inside the work dir is a hit") {
    trace.io_events = {open_of(std::string(golden::kWorkDir) + "/.command.sh", 1169224,
                               1714067937500, 1)};
    auto hits = detect_marker_accesses(trace, tasks, MarkerRule::nextflow_defaults());
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].task_id == 6);
    CHECK(hits[0].pid == 1169224);
    CHECK(hits[0].event_index == 0);
  }
  SUBCASE("a data file in the work dir is not a marker") {
    trace.io_events = {*parse_io_trace_line(golden::kIoOpenLine)};
    CHECK(detect_marker_accesses(trace, tasks, MarkerRule::nextflow_defaults()).empty());
  }
  SUBCASE("marker names outside any work dir do not hit") {
    trace.io_events = {open_of("/tmp/.command.sh", 1, 1000, 1)};
    CHECK(detect_marker_accesses(trace, tasks, MarkerRule::nextflow_defaults()).empty());
  }
  SUBCASE("markers in subdirectories of the work dir do not hit") {
    trace.io_events = {open_of(std::string(golden::kWorkDir) + "/sub/.command.sh", 1, 1000, 1)};
    CHECK(detect_marker_accesses(trace, tasks, MarkerRule::nextflow_defaults()).empty());
  }
  SUBCASE("two tasks sharing a work dir is an input error") {
    tasks.push_back(task_of(7, "OTHER", golden::kWorkDir));
    CHECK_THROWS_AS(detect_marker_accesses(trace, tasks, MarkerRule::nextflow_defaults()),
                    InputError);
  }
}

namespace {

// A containerized fixture built from the golden excerpts: fork record puts
// pid 1169224 into cgroup 131863, a constructed marker open binds the cgroup
// to task 6, and the golden open+read lines are the task's data accesses.
RunData golden_run() {
  RunData run;
  NodeTrace trace;
  trace.node_id = "n1";
  trace.fork_events = {{*Timestamp::parse("1714067937.409"), 1168419, 1169224, 131863}};
  trace.io_events = {open_of(std::string(golden::kWorkDir) + "/.command.sh", 1169224,
                             1714067937500, 35624),
                     *parse_io_trace_line(golden::kIoOpenLine),
                     *parse_io_trace_line(golden::kIoReadLine)};
  run.nodes.push_back(std::move(trace));
  run.tasks = {task_of(6, golden::kTaskName, golden::kWorkDir)};
  return run;
}

}  // namespace

TEST_CASE("associate_nextflow binds the golden cgroup via the work-dir marker") {
  RunData run = golden_run();
  auto graphs = build_graphs(run.nodes);
  Attribution attr = associate_nextflow(run, graphs);

  REQUIRE(attr.cgroup_bindings.count("n1") == 1);
  const auto& slot = attr.cgroup_bindings.at("n1");
  REQUIRE(slot.count(131863) == 1);
  CHECK(slot.at(131863).task_id == 6);
  CHECK(slot.at(131863).method == Method::WorkDirMarker);

  CHECK(attr.event_task.at("n1") == std::vector<std::int64_t>{6, 6, 6});
  CHECK(attr.orphan_count() == 0);
  CHECK(attr.conflicts.empty());
}

TEST_CASE("a run without marker accesses leaves every event unbound") {
  RunData run = golden_run();
  run.nodes[0].io_events.erase(run.nodes[0].io_events.begin());  // drop the marker open
  auto graphs = build_graphs(run.nodes);
  Attribution attr = associate_nextflow(run, graphs);
  CHECK(attr.cgroup_bindings.empty());
  CHECK(attr.orphan_count() == 2);
  CHECK(attr.attributed_count() == 0);
}

TEST_CASE("container-less tasks fall back to the process subtree") {
  RunData run;
  NodeTrace trace;
  trace.node_id = "n1";
  // wrapper 50 forks worker 51; no container, so cgroupid is 0
  trace.fork_events = {{Timestamp::from_millis(1000), 7, 50, 0},
                       {Timestamp::from_millis(1200), 50, 51, 0}};
  trace.io_events = {
      open_of("/work/t1/.command.sh", 50, 1100, 1),
      open_of("/data/in.bin", 51, 1300, 2),
      rw_of(OpKind::Read, 51, 1400, 2, 512),   // the child does the reads
      rw_of(OpKind::Read, 99, 1500, 2, 512),   // unrelated process stays orphaned
  };
  run.nodes.push_back(std::move(trace));
  run.tasks = {task_of(1, "T1", "/work/t1")};

  auto graphs = build_graphs(run.nodes);
  Attribution attr = associate_nextflow(run, graphs);

  REQUIRE(attr.pid_bindings.count("n1") == 1);
  CHECK(attr.pid_bindings.at("n1").size() == 2);  // 50 and 51
  for (const PidBinding& b : attr.pid_bindings.at("n1")) {
    CHECK(b.method == Method::ProcessSubtree);
    CHECK(b.task_id == 1);
  }
  CHECK(attr.event_task.at("n1") ==
        std::vector<std::int64_t>{1, 1, 1, Attribution::kUnbound});
}

TEST_CASE("conflicting marker bindings keep the first by time") {
  RunData run;
  NodeTrace trace;
  trace.node_id = "n1";
  trace.fork_events = {{Timestamp::from_millis(900), 1, 10, 500}};
  trace.io_events = {
      open_of("/work/a/.command.sh", 10, 1000, 1),
      open_of("/work/b/.command.sh", 10, 2000, 2),  // same cgroup, other task
  };
  run.nodes.push_back(std::move(trace));
  run.tasks = {task_of(1, "A", "/work/a"), task_of(2, "B", "/work/b")};

  auto graphs = build_graphs(run.nodes);
  Attribution attr = associate_nextflow(run, graphs);
  CHECK(attr.cgroup_bindings.at("n1").at(500).task_id == 1);
  REQUIRE(attr.conflicts.size() == 1);
  CHECK(attr.conflicts[0].kept_task == 1);
  CHECK(attr.conflicts[0].dropped_task == 2);
}

TEST_CASE("associate_kubernetes matches the golden pod label to task 6") {
  RunData run = golden_run();
  PodMeta pod;
  pod.node_id = "n1";
  pod.pod_name = golden::kPodName;
  pod.cgroupid = 131863;
  pod.labels["taskName"] = golden::kPodLabel;
  run.pods = {pod};

  auto graphs = build_graphs(run.nodes);
  Attribution attr = associate_kubernetes(run, graphs);

  REQUIRE(attr.cgroup_bindings.count("n1") == 1);
  CHECK(attr.cgroup_bindings.at("n1").at(131863).task_id == 6);
  CHECK(attr.cgroup_bindings.at("n1").at(131863).method == Method::PodLabel);
  CHECK(attr.event_task.at("n1") == std::vector<std::int64_t>{6, 6, 6});
  CHECK(attr.unmatched_pods.empty());
}

TEST_CASE("pods without a taskName label are ignored") {
  RunData run = golden_run();
  PodMeta pod;
  pod.node_id = "n1";
  pod.pod_name = "coredns-xyz";
  pod.cgroupid = 4242;
  run.pods = {pod};
  auto graphs = build_graphs(run.nodes);
  Attribution attr = associate_kubernetes(run, graphs);
  CHECK(attr.cgroup_bindings.empty());
  CHECK(attr.unmatched_pods.empty());
}

TEST_CASE("pods whose label matches no task are recorded as unmatched") {
  RunData run = golden_run();
  PodMeta pod;
  pod.node_id = "n1";
  pod.pod_name = "nf-dead";
  pod.cgroupid = 777;
  pod.labels["taskName"] = "NO_SUCH_TASK";
  run.pods = {pod};
  auto graphs = build_graphs(run.nodes);
  Attribution attr = associate_kubernetes(run, graphs);
  CHECK(attr.unmatched_pods == std::vector<std::string>{"nf-dead"});
}

TEST_CASE("an ambiguous task name is reported and the pod skipped") {
  RunData run = golden_run();
  run.tasks.push_back(task_of(7, "a b", "/w/1"));
  run.tasks.push_back(task_of(8, "a:b", "/w/2"));  // normalizes identically
  PodMeta pod;
  pod.node_id = "n1";
  pod.pod_name = "nf-ambig";
  pod.cgroupid = 999;
  pod.labels["taskName"] = "a_b";
  run.pods = {pod};
  auto graphs = build_graphs(run.nodes);
  Attribution attr = associate_kubernetes(run, graphs);
  CHECK(attr.cgroup_bindings.empty());
  REQUIRE(attr.conflicts.size() == 1);
  CHECK(attr.conflicts[0].subject == "taskName a_b");
}

TEST_CASE("merge_attributions") {
  RunData run = golden_run();
  auto graphs = build_graphs(run.nodes);
  Attribution nf = associate_nextflow(run, graphs);

  SUBCASE("merging with itself is idempotent") {
    Attribution merged = merge_attributions(nf, nf);
    CHECK(merged.cgroup_bindings == nf.cgroup_bindings);
    CHECK(merged.event_task == nf.event_task);
    CHECK(merged.conflicts.empty());
  }

  SUBCASE("disjoint bindings union") {
    Attribution other;
    other.cgroup_bindings["n2"][555] = {9, Method::PodLabel, Timestamp{}};
    other.event_task["n2"] = {9};
    Attribution merged = merge_attributions(nf, other);
    CHECK(merged.cgroup_bindings.at("n1").at(131863).task_id == 6);
    CHECK(merged.cgroup_bindings.at("n2").at(555).task_id == 9);
    CHECK(merged.event_task.at("n2") == std::vector<std::int64_t>{9});
    CHECK(merged.conflicts.empty());
  }

  SUBCASE("conflicting cgroup binding keeps the marker side and reports") {
    Attribution pods;
    pods.cgroup_bindings["n1"][131863] = {42, Method::PodLabel, Timestamp{}};
    pods.event_task["n1"] = {42, 42, 42};
    Attribution merged = merge_attributions(nf, pods);
    CHECK(merged.cgroup_bindings.at("n1").at(131863).task_id == 6);
    CHECK(merged.cgroup_bindings.at("n1").at(131863).method == Method::WorkDirMarker);
    CHECK(merged.event_task.at("n1") == std::vector<std::int64_t>{6, 6, 6});
    CHECK(merged.conflicts.size() >= 1);
  }

  SUBCASE("secondary labels fill primary orphans") {
    Attribution sparse = nf;
    sparse.event_task["n1"] = {6, Attribution::kUnbound, Attribution::kUnbound};
    Attribution dense;
    dense.event_task["n1"] = {Attribution::kUnbound, 6, 6};
    Attribution merged = merge_attributions(sparse, dense);
    CHECK(merged.event_task.at("n1") == std::vector<std::int64_t>{6, 6, 6});
  }
}
