#pragma once

#include <filesystem>

#include "wfio/ingest.hpp"

namespace wfio {

/// One I/O step of a task script. Read/write/close reference the handle
/// symbol introduced by an earlier open step. A relative file path is
/// resolved against the task's work dir; an absolute path names a shared
/// (cross-task) file.
struct IoStep {
  enum class Op { Open, Read, Write, Close, Delete };
  enum class Pattern { Sequential, Strided, Bulk };

  Op op = Op::Open;
  std::string file;    // open/delete
  std::string handle;  // open defines, read/write/close use
  std::int64_t size = 0;
  std::int64_t count = 1;
  Pattern pattern = Pattern::Sequential;
  std::int64_t stride = 0;  // strided only; defaults to 2 * size
  std::int64_t start_offset = 0;
  std::optional<std::int64_t> at_ms;  // placement after task start; default: next slot
  int proc = 0;                       // which of the task's processes issues it
  std::uint32_t flags = 0x8000;
};

struct SimTask {
  std::string name;
  std::string node;
  bool container = true;
  int processes = 1;
  std::optional<std::int64_t> start_ms;  // relative to the run clock base
  std::vector<std::string> depends_on;
  std::vector<IoStep> io;
};

/// Seeded record-loss model, emulating ring-buffer overruns: each surviving
/// record kind is dropped with its probability; explicit drops name single
/// records for surgical tests.
struct LossModel {
  double p_open = 0, p_read = 0, p_write = 0, p_close = 0, p_delete = 0;
  double p_fork = 0;
  std::uint64_t seed = 0;

  struct ExplicitDrop {
    std::string node;
    bool fork_stream = false;
    std::int64_t seq = 0;  // data-record index within the stream
  };
  std::vector<ExplicitDrop> drops;

  bool active() const {
    return p_open > 0 || p_read > 0 || p_write > 0 || p_close > 0 || p_delete > 0 || p_fork > 0 ||
           !drops.empty();
  }
  void set_all_probabilities(double p) {
    p_open = p_read = p_write = p_close = p_delete = p_fork = p;
  }
};

/// Declarative description of a synthetic workflow run. (config, seed) fully
/// determines the generated bytes. Timing is on a millisecond grid; realism
/// of absolute durations is not a goal, relative placement is.
struct SimConfig {
  std::vector<std::string> nodes;
  std::vector<SimTask> tasks;
  double clock_base = 1714067000.0;
  std::int64_t step_spacing_ms = 1;
  bool markers = true;
  bool collide_pids = false;  // reuse pid values across nodes
  std::string work_dir_root = "/wf/work";
  LossModel loss;

  static SimConfig from_json_text(std::string_view text, std::string_view file = "<config>");
  static SimConfig load(const std::filesystem::path& path);
  void validate() const;  // throws InputError naming the offending task or key
};

struct GroundTruthRow {
  std::int64_t seq = 0;  // io-event index within the node trace at generation
  std::string task;      // task name
  std::int64_t pid = 0;
  std::uint64_t cgroupid = 0;
  bool dropped = false;
};

struct GroundTruth {
  std::map<std::string, std::vector<GroundTruthRow>> by_node;

  void save(const std::filesystem::path& path) const;
  static GroundTruth load(const std::filesystem::path& path);
};

struct SimResult {
  std::filesystem::path run_dir;
  GroundTruth truth;
  std::int64_t io_events = 0;
  std::int64_t fork_events = 0;
  int task_count = 0;
  int node_count = 0;
};

// Layout of a generated run directory.
std::filesystem::path run_node_dir(const std::filesystem::path& run_dir, std::string_view node);
std::filesystem::path run_nextflow_log(const std::filesystem::path& run_dir);
std::filesystem::path run_pod_meta(const std::filesystem::path& run_dir);
std::filesystem::path run_k8s_events(const std::filesystem::path& run_dir);
std::filesystem::path run_ground_truth(const std::filesystem::path& run_dir);
std::filesystem::path run_drop_ledger(const std::filesystem::path& run_dir);

/// Emits one directory per node (io + fork trace), a Nextflow-style log with
/// one completion line per task, pod metadata and start events for
/// containerized tasks, and the ground-truth labels. Never injects loss; use
/// inject_loss on the result.
SimResult generate_run(const SimConfig& config, const std::filesystem::path& out_dir);

struct DropLedgerRow {
  std::string node;
  bool fork_stream = false;
  std::int64_t seq = 0;
  char kind = '?';  // O/R/W/C/D, or F for fork records
};

struct DropLedger {
  std::vector<DropLedgerRow> rows;

  void save(const std::filesystem::path& path) const;
  static DropLedger load(const std::filesystem::path& path);
};

/// Removes records from a generated run per the loss model, rewrites the
/// trace files in place, marks the dropped rows in the ground truth, writes
/// the drop ledger, and leaves a warning sentinel in every affected node
/// directory (the tracer would have warned on stderr). Reproducible from the
/// model's seed; a model that drops nothing leaves the run untouched.
DropLedger inject_loss(const std::filesystem::path& run_dir, const LossModel& model);

}  // namespace wfio
