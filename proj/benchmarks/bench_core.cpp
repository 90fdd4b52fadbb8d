#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "wfio/association.hpp"
#include "wfio/ingest.hpp"
#include "wfio/process_graph.hpp"

namespace {

const std::string kOpenLine =
    "1714067937.744, 1714067937.744, 1169224, 27151.124, 27151.124, 27151.124, 27151.124, 5277, "
    "O, 0, 35625, 0, 0, 0x00008000, /data/work/52/f11191010952840e07774a95bcd36e/sample.fq.gz";

const std::string kReadLine =
    "1714067937.745, 1714067937.745, 1169224, 27151.124, 27151.124, 27151.124, 27151.124, 5277, "
    "R, 512, 35625, 1034, 512, 0x00008000,";

void BM_ParseOpenLine(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(wfio::parse_io_trace_line(kOpenLine));
  }
}
BENCHMARK(BM_ParseOpenLine);

void BM_ParseReadLine(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(wfio::parse_io_trace_line(kReadLine));
  }
}
BENCHMARK(BM_ParseReadLine);

void BM_FormatLine(benchmark::State& state) {
  auto event = *wfio::parse_io_trace_line(kOpenLine);
  for (auto _ : state) {
    benchmark::DoNotOptimize(wfio::format_io_trace_line(event));
  }
}
BENCHMARK(BM_FormatLine);

wfio::NodeTrace synthetic_trace(std::size_t events) {
  wfio::NodeTrace trace;
  trace.node_id = "bench";
  auto open = *wfio::parse_io_trace_line(kOpenLine);
  auto read = *wfio::parse_io_trace_line(kReadLine);
  for (std::size_t i = 0; i < events / 2; ++i) {
    auto o = open;
    o.handle_uid = i + 1;
    o.inode_uid = i + 1;
    o.path += std::to_string(i);
    trace.io_events.push_back(std::move(o));
    auto r = read;
    r.handle_uid = i + 1;
    r.inode_uid = i + 1;
    trace.io_events.push_back(std::move(r));
  }
  return trace;
}

void BM_IdentityCheck(benchmark::State& state) {
  auto trace = synthetic_trace(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(wfio::event_identity_check(trace));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IdentityCheck)->Arg(10000)->Arg(100000);

void BM_Descendants(benchmark::State& state) {
  std::vector<wfio::ForkEvent> forks;
  for (std::int64_t i = 1; i <= state.range(0); ++i) {
    forks.push_back({wfio::Timestamp::from_millis(1000 + i), i, i + 1, 7});
  }
  auto graph = wfio::ProcessGraph::build(forks);
  for (auto _ : state) {
    benchmark::DoNotOptimize(graph.descendants(1, wfio::Timestamp::max()));
  }
}
BENCHMARK(BM_Descendants)->Arg(100)->Arg(1000);

void BM_NormalizeTaskName(benchmark::State& state) {
  const std::string name = "NFCORE_RNASEQ:RNASEQ:FASTQ_FASTQC_UMITOOLS_TRIMGALORE:TRIMGALORE (WT_REP2)";
  for (auto _ : state) {
    benchmark::DoNotOptimize(wfio::normalize_task_name(name));
  }
}
BENCHMARK(BM_NormalizeTaskName);

}  // namespace

BENCHMARK_MAIN();
