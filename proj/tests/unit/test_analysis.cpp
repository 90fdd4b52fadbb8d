#include <doctest.h>

#include <random>

#include "wfio/analysis.hpp"

using namespace wfio;

namespace {

IoEvent event_at(std::int64_t start_ms, std::int64_t end_ms, OpKind kind, std::uint64_t inode,
                 std::uint64_t handle, std::int64_t bytes = 0, std::int64_t offset = 0,
                 const std::string& path = "") {
  IoEvent e;
  e.time_start = Timestamp::from_millis(start_ms);
  e.time_end = Timestamp::from_millis(end_ms);
  e.pid = 1;
  e.kind = kind;
  e.inode_uid = inode;
  e.handle_uid = handle;
  e.result = bytes;
  e.size = bytes;
  e.offset = offset;
  e.path = path;
  return e;
}

// One node, one task, everything attributed to task 1.
std::pair<RunData, Attribution> single_task_run(std::vector<IoEvent> events) {
  RunData run;
  NodeTrace trace;
  trace.node_id = "n1";
  trace.io_events = std::move(events);
  run.nodes.push_back(std::move(trace));
  Attribution attr;
  attr.event_task["n1"].assign(run.nodes[0].io_events.size(), 1);
  return {std::move(run), std::move(attr)};
}

}  // namespace

TEST_CASE("task_runtime spans min start to max end of attributed events") {
  auto [run, attr] = single_task_run({
      event_at(100000, 101000, OpKind::Open, 1, 1, 0, 0, "/f"),
      event_at(109000, 110000, OpKind::Read, 1, 1, 64),
  });
  auto [t0, t1] = task_runtime(run, attr, 1);
  CHECK(t0 == Timestamp::from_millis(100000));
  CHECK(t1 == Timestamp::from_millis(110000));
}

TEST_CASE("task_runtime of a single instantaneous event is degenerate") {
  auto [run, attr] = single_task_run({event_at(5000, 5000, OpKind::Open, 1, 1, 0, 0, "/f")});
  auto [t0, t1] = task_runtime(run, attr, 1);
  CHECK(t0 == t1);
}

TEST_CASE("task_runtime without attributed events throws") {
  auto [run, attr] = single_task_run({});
  CHECK_THROWS_AS(task_runtime(run, attr, 1), NoObservedIoError);
  CHECK_THROWS_AS(task_runtime(run, attr, 99), NoObservedIoError);
}

TEST_CASE("span_fraction uses read/write accesses relative to the runtime") {
  // Runtime [100s, 110s]; file accessed at 103s and 105s -> 0.2.
  auto [run, attr] = single_task_run({
      event_at(100000, 100000, OpKind::Open, 7, 1, 0, 0, "/data/f.bin"),
      event_at(103000, 103000, OpKind::Read, 7, 1, 512),
      event_at(105000, 105000, OpKind::Read, 7, 1, 512),
      event_at(110000, 110000, OpKind::Close, 7, 1),
  });
  CHECK(span_fraction(run, attr, 1, "n1", 7) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(span_fraction_by_path(run, attr, 1, "/data/f.bin") == doctest::Approx(0.2));
}

TEST_CASE("a single access has span zero") {
  auto [run, attr] = single_task_run({
      event_at(100000, 100000, OpKind::Open, 7, 1, 0, 0, "/data/f.bin"),
      event_at(103000, 103000, OpKind::Write, 7, 1, 512),
      event_at(110000, 110000, OpKind::Close, 7, 1),
  });
  CHECK(span_fraction(run, attr, 1, "n1", 7) == 0.0);
}

TEST_CASE("a degenerate runtime window yields span zero") {
  auto [run, attr] = single_task_run({event_at(5000, 5000, OpKind::Read, 7, 1, 8)});
  CHECK(span_fraction(run, attr, 1, "n1", 7) == 0.0);
}

TEST_CASE("a file the task only opened has no span") {
  auto [run, attr] = single_task_run({
      event_at(100000, 100000, OpKind::Open, 7, 1, 0, 0, "/data/f.bin"),
      event_at(110000, 110000, OpKind::Close, 7, 1),
  });
  CHECK_THROWS_AS(span_fraction(run, attr, 1, "n1", 7), InputError);
  CHECK_THROWS_AS(span_fraction(run, attr, 1, "n1", 999), InputError);
}

TEST_CASE("span_fraction equals a brute-force oracle on randomized event sets") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 300; ++round) {
    std::vector<IoEvent> events;
    events.push_back(event_at(1000, 1000, OpKind::Open, 1, 1, 0, 0, "/f"));
    const int n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      std::int64_t at = 1000 + static_cast<std::int64_t>(rng() % 100000);
      events.push_back(event_at(at, at, rng() % 2 ? OpKind::Read : OpKind::Write, 1, 1, 8));
    }
    auto [run, attr] = single_task_run(events);

    // Brute force: min/max over raw events, no shared code with the library.
    std::int64_t t0 = INT64_MAX, t1 = INT64_MIN, first = INT64_MAX, last = INT64_MIN;
    for (const IoEvent& e : run.nodes[0].io_events) {
      t0 = std::min(t0, e.time_start.nanos);
      t1 = std::max(t1, e.time_end.nanos);
      if (e.kind == OpKind::Read || e.kind == OpKind::Write) {
        first = std::min(first, e.time_start.nanos);
        last = std::max(last, e.time_start.nanos);
      }
    }
    const double expected =
        t1 == t0 ? 0.0 : static_cast<double>(last - first) / static_cast<double>(t1 - t0);

    const double got = span_fraction(run, attr, 1, "n1", 1);
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("bulkiness_histogram buckets span fractions") {
  auto profile_with = [](double f) {
    TaskIoProfile p;
    FileIoRow row;
    row.span_fraction = f;
    p.files.push_back(row);
    return p;
  };
  std::vector<TaskIoProfile> profiles{profile_with(0.0), profile_with(0.5), profile_with(1.0)};

  auto counts = bulkiness_histogram(profiles, 10);
  REQUIRE(counts.size() == 10);
  CHECK(counts[0] == 1);
  CHECK(counts[5] == 1);
  CHECK(counts[9] == 1);  // 1.0 belongs to the last bucket

  SUBCASE("empty profile set") {
    auto zero = bulkiness_histogram({}, 10);
    for (std::int64_t c : zero) CHECK(c == 0);
  }
  SUBCASE("bad bucket count") {
    CHECK_THROWS_AS(bulkiness_histogram(profiles, 0), InputError);
  }
  SUBCASE("total equals the number of rows with a defined span") {
    TaskIoProfile no_span;
    no_span.files.push_back(FileIoRow{});  // opened only
    profiles.push_back(no_span);
    auto c = bulkiness_histogram(profiles, 7);
    std::int64_t total = 0;
    for (std::int64_t v : c) total += v;
    CHECK(total == 3);
  }
}

TEST_CASE("bulkiness bucket choice matches the floor oracle on random fractions") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    double f = static_cast<double>(rng() % 10001) / 10000.0;
    TaskIoProfile p;
    FileIoRow row;
    row.span_fraction = f;
    p.files.push_back(row);
    std::vector<TaskIoProfile> one{p};
    auto counts = bulkiness_histogram(one, 10);
    int expected = std::min(static_cast<int>(f * 10.0), 9);
    CHECK(counts[static_cast<std::size_t>(expected)] == 1);
  }
}

TEST_CASE("access_timeline lists reads and writes in order with relative times") {
  auto [run, attr] = single_task_run({
      event_at(0, 0, OpKind::Open, 7, 1, 0, 0, "/data/f.bin"),
      event_at(3200, 3200, OpKind::Write, 7, 1, 4096, 0),
      event_at(4200, 4200, OpKind::Write, 7, 1, 4096, 4096),
      event_at(10000, 10000, OpKind::Close, 7, 1),
  });
  auto rows = access_timeline(run, attr, 1, "/data/f.bin");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].t_rel == doctest::Approx(0.32));
  CHECK(rows[0].kind == OpKind::Write);
  CHECK(rows[0].offset == 0);
  CHECK(rows[0].size == 4096);
  CHECK(rows[1].t_rel == doctest::Approx(0.42));
  CHECK(rows[1].offset == 4096);
}

TEST_CASE("access_timeline of an open/close-only file is empty") {
  auto [run, attr] = single_task_run({
      event_at(0, 0, OpKind::Open, 7, 1, 0, 0, "/data/f.bin"),
      event_at(1000, 1000, OpKind::Close, 7, 1),
  });
  CHECK(access_timeline(run, attr, 1, "/data/f.bin").empty());
}

namespace {

// Two tasks touching files on one node; labels assigned per event.
std::pair<RunData, Attribution> two_task_run(std::vector<IoEvent> events,
                                             std::vector<std::int64_t> labels) {
  RunData run;
  NodeTrace trace;
  trace.node_id = "n1";
  trace.io_events = std::move(events);
  run.nodes.push_back(std::move(trace));
  Attribution attr;
  attr.event_task["n1"] = std::move(labels);
  return {std::move(run), std::move(attr)};
}

}  // namespace

TEST_CASE("cross_task_lineage connects writer to later reader") {
  auto [run, attr] = two_task_run(
      {
          event_at(1000, 1000, OpKind::Open, 5, 1, 0, 0, "/shared/x.bin"),
          event_at(2000, 2000, OpKind::Write, 5, 1, 64),
          event_at(3000, 3000, OpKind::Close, 5, 1),
          event_at(4000, 4000, OpKind::Open, 5, 2, 0, 0, "/shared/x.bin"),
          event_at(5000, 5000, OpKind::Read, 5, 2, 64),
      },
      {1, 1, 1, 2, 2});
  auto profiles = build_profiles(run, attr);
  auto edges = cross_task_lineage(profiles);
  REQUIRE(edges.size() == 1);
  CHECK(edges[0].producer_task == 1);
  CHECK(edges[0].consumer_task == 2);
  CHECK(edges[0].path == "/shared/x.bin");
  CHECK(edges[0].producer_node == "n1");
}

TEST_CASE("tasks touching disjoint files produce no lineage") {
  auto [run, attr] = two_task_run(
      {
          event_at(1000, 1000, OpKind::Open, 1, 1, 0, 0, "/a"),
          event_at(2000, 2000, OpKind::Write, 1, 1, 8),
          event_at(3000, 3000, OpKind::Open, 2, 2, 0, 0, "/b"),
          event_at(4000, 4000, OpKind::Read, 2, 2, 8),
      },
      {1, 1, 2, 2});
  CHECK(cross_task_lineage(build_profiles(run, attr)).empty());
}

TEST_CASE("a read that precedes every write produces no edge") {
  auto [run, attr] = two_task_run(
      {
          event_at(1000, 1000, OpKind::Open, 1, 1, 0, 0, "/a"),
          event_at(1500, 1500, OpKind::Read, 1, 2, 8),   // task 2 reads first
          event_at(2000, 2000, OpKind::Write, 1, 1, 8),  // task 1 writes later
      },
      {1, 2, 1});
  // Split the open away from task 2 so the rows stay distinct.
  attr.event_task["n1"] = {1, 2, 1};
  CHECK(cross_task_lineage(build_profiles(run, attr)).empty());
}

TEST_CASE("a chain of two handoffs yields two edges") {
  auto [run, attr] = two_task_run(
      {
          event_at(1000, 1000, OpKind::Open, 1, 1, 0, 0, "/f1"),
          event_at(1100, 1100, OpKind::Write, 1, 1, 8),
          event_at(2000, 2000, OpKind::Open, 1, 2, 0, 0, "/f1"),
          event_at(2100, 2100, OpKind::Read, 1, 2, 8),
          event_at(2200, 2200, OpKind::Open, 7, 3, 0, 0, "/f2"),
          event_at(2300, 2300, OpKind::Write, 7, 3, 8),
          event_at(3000, 3000, OpKind::Open, 7, 4, 0, 0, "/f2"),
          event_at(3100, 3100, OpKind::Read, 7, 4, 8),
      },
      {1, 1, 2, 2, 2, 2, 3, 3});
  auto edges = cross_task_lineage(build_profiles(run, attr));

  // Oracle: pairwise scan over (writer, reader) rows.
  REQUIRE(edges.size() == 2);
  CHECK(edges[0].producer_task == 1);
  CHECK(edges[0].consumer_task == 2);
  CHECK(edges[1].producer_task == 2);
  CHECK(edges[1].consumer_task == 3);
}

TEST_CASE("cross-node lineage matches by path") {
  RunData run;
  NodeTrace a, b;
  a.node_id = "a";
  a.io_events = {event_at(1000, 1000, OpKind::Open, 1, 1, 0, 0, "/ceph/x"),
                 event_at(1100, 1100, OpKind::Write, 1, 1, 8)};
  b.node_id = "b";
  b.io_events = {event_at(2000, 2000, OpKind::Open, 9, 1, 0, 0, "/ceph/x"),
                 event_at(2100, 2100, OpKind::Read, 9, 1, 8)};
  run.nodes = {a, b};
  Attribution attr;
  attr.event_task["a"] = {1, 1};
  attr.event_task["b"] = {2, 2};
  auto edges = cross_task_lineage(build_profiles(run, attr));
  REQUIRE(edges.size() == 1);
  CHECK(edges[0].producer_node == "a");
  CHECK(edges[0].consumer_node == "b");
  CHECK(edges[0].path == "/ceph/x");
}

TEST_CASE("profiles conserve accounted bytes") {
  std::mt19937_64 rng(3);
  std::vector<IoEvent> events;
  events.push_back(event_at(0, 0, OpKind::Open, 1, 1, 0, 0, "/a"));
  events.push_back(event_at(1, 1, OpKind::Open, 2, 2, 0, 0, "/b"));
  std::int64_t total_read = 0;
  for (int i = 0; i < 100; ++i) {
    std::int64_t bytes = static_cast<std::int64_t>(rng() % 10000);
    bool read = rng() % 2;
    if (read) total_read += bytes;
    events.push_back(event_at(10 + i, 10 + i, read ? OpKind::Read : OpKind::Write,
                              1 + rng() % 2, 1 + rng() % 2, bytes));
  }
  auto [run, attr] = single_task_run(events);
  auto profiles = build_profiles(run, attr);
  REQUIRE(profiles.size() == 1);
  std::int64_t sum = 0;
  for (const FileIoRow& row : profiles[0].files) sum += row.bytes_read;
  CHECK(sum == total_read);
}

TEST_CASE("loss_report") {
  SUBCASE("clean trace reports nothing") {
    auto [run, attr] = single_task_run({
        event_at(0, 0, OpKind::Open, 1, 1, 0, 0, "/a"),
        event_at(1, 1, OpKind::Read, 1, 1, 8),
        event_at(2, 2, OpKind::Close, 1, 1),
    });
    LossReport report = loss_report(run, &attr);
    CHECK(report.orphan_events == 0);
    CHECK(report.orphan_handles == 0);
    CHECK(report.unattributed == 0);
    REQUIRE(report.per_node.size() == 1);
    CHECK(report.per_node[0].classification == OrphanClass::None);
  }
  SUBCASE("orphan references are counted per event and per handle") {
    auto [run, attr] = single_task_run({
        event_at(1, 1, OpKind::Read, 1, 10, 8),
        event_at(2, 2, OpKind::Read, 1, 10, 8),
        event_at(3, 3, OpKind::Close, 2, 11),
    });
    attr.event_task["n1"] = {1, 1, Attribution::kUnbound};
    LossReport report = loss_report(run, &attr);
    CHECK(report.orphan_events == 3);
    CHECK(report.orphan_handles == 2);
    CHECK(report.unattributed == 1);
  }
  SUBCASE("classification follows the warning sentinel") {
    auto [run, attr] = single_task_run({event_at(1, 1, OpKind::Read, 1, 10, 8)});
    LossReport without = loss_report(run, &attr);
    CHECK(without.per_node[0].classification == OrphanClass::PreExistingHandle);
    run.nodes[0].loss_warnings = true;
    LossReport with = loss_report(run, &attr);
    CHECK(with.per_node[0].classification == OrphanClass::DroppedRecord);
  }
  SUBCASE("without attribution only trace-level counts appear") {
    auto [run, attr] = single_task_run({event_at(1, 1, OpKind::Read, 1, 10, 8)});
    LossReport report = loss_report(run, nullptr);
    CHECK(report.orphan_events == 1);
    CHECK(report.unattributed == 0);
  }
}
