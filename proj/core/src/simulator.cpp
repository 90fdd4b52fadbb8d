#include "wfio/simulator.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "wfio/association.hpp"

namespace wfio {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex32(std::string_view seed_text, std::uint64_t salt) {
  char buf[33];
  std::uint64_t a = fnv1a(seed_text, 1469598103934665603ull ^ salt);
  std::uint64_t b = fnv1a(seed_text, 0x9e3779b97f4a7c15ull + salt);
  std::snprintf(buf, sizeof buf, "%016" PRIx64 "%016" PRIx64, a, b);
  return buf;
}

// Platform-stable uniform in [0,1); std distributions are not portable.
double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string format_log_clock(std::int64_t epoch_ms) {
  std::time_t secs = epoch_ms / 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char datetime[24];
  std::strftime(datetime, sizeof datetime, "%b-%d %H:%M:%S", &tm);
  char out[32];
  std::snprintf(out, sizeof out, "%s.%03d", datetime, static_cast<int>(epoch_ms % 1000));
  return out;
}

[[noreturn]] void config_error(std::string_view file, const std::string& what) {
  throw InputError(std::string(file) + ": " + what);
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where, std::string_view file) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      config_error(file, "unknown key '" + it.key() + "' in " + where);
    }
  }
}

std::uint32_t parse_step_flags(const json& j, const std::string& where, std::string_view file) {
  if (j.is_number_unsigned() || j.is_number_integer()) return j.get<std::uint32_t>();
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    std::string_view v = s;
    if (v.starts_with("0x") || v.starts_with("0X")) v.remove_prefix(2);
    std::uint32_t out = 0;
    for (char c : v) {
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
      else config_error(file, "bad flags value '" + s + "' in " + where);
      out = out * 16 + static_cast<std::uint32_t>(d);
    }
    return out;
  }
  config_error(file, "bad flags value in " + where);
}

IoStep parse_step(const json& j, const std::string& where, std::string_view file) {
  if (!j.is_object()) config_error(file, where + " must be an object");
  check_keys(j,
             {"op", "file", "handle", "size", "count", "pattern", "stride", "start_offset",
              "at_ms", "proc", "flags"},
             where, file);
  IoStep step;
  if (!j.contains("op") || !j["op"].is_string()) {
    config_error(file, "missing or non-string key 'op' in " + where);
  }
  std::string op = j["op"].get<std::string>();
  if (op == "open") step.op = IoStep::Op::Open;
  else if (op == "read") step.op = IoStep::Op::Read;
  else if (op == "write") step.op = IoStep::Op::Write;
  else if (op == "close") step.op = IoStep::Op::Close;
  else if (op == "delete") step.op = IoStep::Op::Delete;
  else config_error(file, "unknown op '" + op + "' in " + where);

  if (j.contains("file")) step.file = j["file"].get<std::string>();
  if (j.contains("handle")) step.handle = j["handle"].get<std::string>();
  if (j.contains("size")) step.size = j["size"].get<std::int64_t>();
  if (j.contains("count")) step.count = j["count"].get<std::int64_t>();
  if (j.contains("pattern")) {
    std::string p = j["pattern"].get<std::string>();
    if (p == "sequential") step.pattern = IoStep::Pattern::Sequential;
    else if (p == "strided") step.pattern = IoStep::Pattern::Strided;
    else if (p == "bulk") step.pattern = IoStep::Pattern::Bulk;
    else config_error(file, "unknown pattern '" + p + "' in " + where);
  }
  if (j.contains("stride")) step.stride = j["stride"].get<std::int64_t>();
  if (j.contains("start_offset")) step.start_offset = j["start_offset"].get<std::int64_t>();
  if (j.contains("at_ms")) step.at_ms = j["at_ms"].get<std::int64_t>();
  if (j.contains("proc")) step.proc = j["proc"].get<int>();
  if (j.contains("flags")) step.flags = parse_step_flags(j["flags"], where, file);
  return step;
}

LossModel parse_loss(const json& j, std::string_view file) {
  check_keys(j, {"open", "read", "write", "close", "delete", "fork", "seed", "drops"}, "loss",
             file);
  LossModel loss;
  auto p = [&](const char* key, double& out) {
    if (j.contains(key)) out = j[key].get<double>();
  };
  p("open", loss.p_open);
  p("read", loss.p_read);
  p("write", loss.p_write);
  p("close", loss.p_close);
  p("delete", loss.p_delete);
  p("fork", loss.p_fork);
  if (j.contains("seed")) loss.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("drops")) {
    for (const json& d : j["drops"]) {
      check_keys(d, {"node", "stream", "seq"}, "loss.drops entry", file);
      LossModel::ExplicitDrop drop;
      drop.node = d.at("node").get<std::string>();
      drop.fork_stream = d.contains("stream") && d["stream"].get<std::string>() == "fork";
      drop.seq = d.at("seq").get<std::int64_t>();
      loss.drops.push_back(std::move(drop));
    }
  }
  return loss;
}

double prob_for(const LossModel& m, OpKind k) {
  switch (k) {
    case OpKind::Open: return m.p_open;
    case OpKind::Read: return m.p_read;
    case OpKind::Write: return m.p_write;
    case OpKind::Close: return m.p_close;
    case OpKind::Delete: return m.p_delete;
  }
  return 0;
}

// --- generation internals ---------------------------------------------------

struct LayoutEvent {
  std::int64_t rel_ms = 0;
  int proc = 0;
  IoStep::Op op = IoStep::Op::Open;
  int slot = -1;  // task-local handle slot; -1 for delete
  std::string path;
  std::int64_t offset = 0, size = 0, result = 0;
  std::uint32_t flags = 0;
};

struct TaskPlan {
  std::vector<LayoutEvent> events;
  std::int64_t duration_ms = 0;
  std::int64_t start_rel_ms = 0;
  std::string work_dir;
  std::string pod_name;
  std::vector<std::int64_t> pids;  // [0] is the task's first process
  std::uint64_t cgroupid = 0;
};

TaskPlan layout_task(const SimTask& task, const SimConfig& cfg, std::string work_dir) {
  TaskPlan plan;
  plan.work_dir = std::move(work_dir);
  const std::int64_t sp = cfg.step_spacing_ms;
  std::int64_t cursor = 0;
  int next_slot = 0;
  std::unordered_map<std::string, int> open_slots;
  std::unordered_map<int, std::int64_t> slot_pos;

  auto resolve = [&](const std::string& f) {
    return f.starts_with('/') ? f : plan.work_dir + "/" + f;
  };
  auto emit = [&](std::int64_t at, int proc, IoStep::Op op, int slot, std::string path,
                  std::int64_t off, std::int64_t size, std::int64_t result, std::uint32_t flags) {
    plan.events.push_back({at, proc, op, slot, std::move(path), off, size, result, flags});
  };

  if (cfg.markers) {
    int s = next_slot++;
    emit(cursor, 0, IoStep::Op::Open, s, plan.work_dir + "/.command.sh", 0, 0, 0, 0x8000);
    cursor += sp;
    emit(cursor, 0, IoStep::Op::Close, s, "", 0, 0, 0, 0);
    cursor += sp;
  }

  for (const IoStep& step : task.io) {
    const std::int64_t base = step.at_ms.value_or(cursor);
    std::int64_t n_events = 1;
    switch (step.op) {
      case IoStep::Op::Open: {
        int s = next_slot++;
        open_slots[step.handle] = s;
        slot_pos[s] = 0;
        emit(base, step.proc, IoStep::Op::Open, s, resolve(step.file), 0, 0, 0, step.flags);
        break;
      }
      case IoStep::Op::Read:
      case IoStep::Op::Write: {
        int s = open_slots.at(step.handle);
        std::int64_t pos = step.start_offset != 0 ? step.start_offset : slot_pos[s];
        if (step.pattern == IoStep::Pattern::Bulk) {
          const std::int64_t total = step.size * step.count;
          emit(base, step.proc, step.op, s, "", pos, total, total, step.flags);
          pos += total;
        } else {
          const std::int64_t gap = step.pattern == IoStep::Pattern::Strided
                                       ? (step.stride > 0 ? step.stride : 2 * step.size)
                                       : step.size;
          n_events = step.count;
          for (std::int64_t k = 0; k < step.count; ++k) {
            emit(base + k * sp, step.proc, step.op, s, "", pos + k * gap, step.size, step.size,
                 step.flags);
          }
          pos = pos + (step.count - 1) * gap + step.size;
        }
        slot_pos[s] = pos;
        break;
      }
      case IoStep::Op::Close: {
        int s = open_slots.at(step.handle);
        open_slots.erase(step.handle);
        emit(base, step.proc, IoStep::Op::Close, s, "", 0, 0, 0, 0);
        break;
      }
      case IoStep::Op::Delete:
        emit(base, step.proc, IoStep::Op::Delete, -1, resolve(step.file), 0, 0, 0, 0);
        break;
    }
    cursor = std::max(cursor, base + n_events * sp);
  }

  if (cfg.markers) {
    int s = next_slot++;
    emit(cursor, 0, IoStep::Op::Open, s, plan.work_dir + "/.exitcode", 0, 0, 0, 0x8241);
    cursor += sp;
    emit(cursor, 0, IoStep::Op::Close, s, "", 0, 0, 0, 0);
    cursor += sp;
  }
  plan.duration_ms = cursor;

  // Handle discipline over absolute placement: an open must precede every
  // use of its slot, or the generated trace would fail its own identity
  // audit.
  std::unordered_map<int, std::int64_t> open_at;
  for (const LayoutEvent& e : plan.events) {
    if (e.op == IoStep::Op::Open) {
      open_at[e.slot] = e.rel_ms;
    } else if (e.slot >= 0) {
      auto it = open_at.find(e.slot);
      if (it == open_at.end() || e.rel_ms < it->second) {
        throw InputError("task '" + task.name + "': step scheduled before its open (at_ms)");
      }
    }
  }
  return plan;
}

std::vector<std::size_t> topo_order(const SimConfig& cfg) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) index.emplace(cfg.tasks[i].name, i);

  std::vector<int> state(cfg.tasks.size(), 0);  // 0 new, 1 visiting, 2 done
  std::vector<std::size_t> order;
  auto visit = [&](auto&& self, std::size_t i) -> void {
    if (state[i] == 2) return;
    if (state[i] == 1) {
      throw InputError("dependency cycle through task '" + cfg.tasks[i].name + "'");
    }
    state[i] = 1;
    for (const std::string& dep : cfg.tasks[i].depends_on) self(self, index.at(dep));
    state[i] = 2;
    order.push_back(i);
  };
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) visit(visit, i);
  return order;
}

struct Emission {
  std::int64_t time_ms = 0;
  std::size_t task_index = 0;
  std::int64_t pid = 0;
  std::uint64_t cgroupid = 0;
  IoStep::Op op = IoStep::Op::Open;
  int slot = -1;
  std::string path;
  std::int64_t offset = 0, size = 0, result = 0;
  std::uint32_t flags = 0;
};

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
}

}  // namespace

std::filesystem::path run_node_dir(const fs::path& run_dir, std::string_view node) {
  return run_dir / node;
}
std::filesystem::path run_nextflow_log(const fs::path& run_dir) {
  return run_dir / "swms" / "nextflow.log";
}
std::filesystem::path run_pod_meta(const fs::path& run_dir) {
  return run_dir / "k8s" / "pod-meta.tsv";
}
std::filesystem::path run_k8s_events(const fs::path& run_dir) {
  return run_dir / "k8s" / "k8s-events.txt";
}
std::filesystem::path run_ground_truth(const fs::path& run_dir) {
  return run_dir / "ground-truth.csv";
}
std::filesystem::path run_drop_ledger(const fs::path& run_dir) {
  return run_dir / "drop-ledger.csv";
}

SimConfig SimConfig::from_json_text(std::string_view text, std::string_view file) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string(file) + ": " + e.what());
  }
  if (!doc.is_object()) config_error(file, "config must be a JSON object");
  check_keys(doc,
             {"nodes", "tasks", "clock_base", "step_spacing_ms", "markers", "collide_pids",
              "work_dir_root", "seed", "loss"},
             "config", file);

  SimConfig cfg;
  try {
    if (doc.contains("nodes")) {
      for (const json& n : doc["nodes"]) cfg.nodes.push_back(n.get<std::string>());
    }
    if (doc.contains("clock_base")) cfg.clock_base = doc["clock_base"].get<double>();
    if (doc.contains("step_spacing_ms")) cfg.step_spacing_ms = doc["step_spacing_ms"].get<std::int64_t>();
    if (doc.contains("markers")) cfg.markers = doc["markers"].get<bool>();
    if (doc.contains("collide_pids")) cfg.collide_pids = doc["collide_pids"].get<bool>();
    if (doc.contains("work_dir_root")) cfg.work_dir_root = doc["work_dir_root"].get<std::string>();
    if (doc.contains("seed")) cfg.loss.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("loss")) cfg.loss = parse_loss(doc["loss"], file);
    if (doc.contains("seed") && doc.contains("loss") && !doc["loss"].contains("seed")) {
      cfg.loss.seed = doc["seed"].get<std::uint64_t>();
    }

    if (doc.contains("tasks")) {
      std::size_t i = 0;
      for (const json& t : doc["tasks"]) {
        std::string where = "task #" + std::to_string(i++);
        if (!t.is_object()) config_error(file, where + " must be an object");
        check_keys(t, {"name", "node", "container", "processes", "start_ms", "depends_on", "io"},
                   where, file);
        SimTask task;
        if (!t.contains("name")) config_error(file, "missing key 'name' in " + where);
        task.name = t["name"].get<std::string>();
        where = "task '" + task.name + "'";
        if (!t.contains("node")) config_error(file, "missing key 'node' in " + where);
        task.node = t["node"].get<std::string>();
        if (t.contains("container")) task.container = t["container"].get<bool>();
        if (t.contains("processes")) task.processes = t["processes"].get<int>();
        if (t.contains("start_ms")) task.start_ms = t["start_ms"].get<std::int64_t>();
        if (t.contains("depends_on")) {
          for (const json& d : t["depends_on"]) task.depends_on.push_back(d.get<std::string>());
        }
        if (t.contains("io")) {
          std::size_t s = 0;
          for (const json& st : t["io"]) {
            task.io.push_back(parse_step(st, where + " io step #" + std::to_string(s++), file));
          }
        }
        cfg.tasks.push_back(std::move(task));
      }
    }
  } catch (const json::exception& e) {
    config_error(file, e.what());
  }
  cfg.validate();
  return cfg;
}

SimConfig SimConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text, path.string());
}

void SimConfig::validate() const {
  if (step_spacing_ms < 1) throw InputError("step_spacing_ms must be >= 1");
  if (clock_base <= 0) throw InputError("clock_base must be positive");
  if (!work_dir_root.starts_with('/')) throw InputError("work_dir_root must be absolute");

  std::unordered_set<std::string_view> node_set;
  for (const std::string& n : nodes) {
    if (n.empty() || n == "swms" || n == "k8s" || n.find('/') != std::string::npos ||
        n.find('\t') != std::string::npos) {
      throw InputError("invalid node id '" + n + "'");
    }
    if (!node_set.insert(n).second) throw InputError("duplicate node id '" + n + "'");
  }

  std::unordered_set<std::string_view> names;
  std::unordered_set<std::string> norm_names;
  for (const SimTask& t : tasks) {
    if (t.name.empty()) throw InputError("task with empty name");
    if (!names.insert(t.name).second) throw InputError("duplicate task name '" + t.name + "'");
    if (!norm_names.insert(normalize_task_name(t.name)).second) {
      throw InputError("task names collide after normalization: '" + t.name + "'");
    }
    if (!node_set.contains(t.node)) {
      throw InputError("task '" + t.name + "' runs on unknown node '" + t.node + "'");
    }
    if (t.processes < 1) throw InputError("task '" + t.name + "' needs processes >= 1");

    std::unordered_set<std::string> open_handles;
    std::size_t idx = 0;
    for (const IoStep& s : t.io) {
      std::string where = "task '" + t.name + "' io step #" + std::to_string(idx++);
      if (s.count < 1) throw InputError(where + ": count must be >= 1");
      if (s.size < 0) throw InputError(where + ": negative size");
      if (s.proc < 0 || s.proc >= t.processes) throw InputError(where + ": proc out of range");
      switch (s.op) {
        case IoStep::Op::Open:
          if (s.file.empty()) throw InputError(where + ": open needs a file");
          if (s.handle.empty()) throw InputError(where + ": open needs a handle name");
          if (!open_handles.insert(s.handle).second) {
            throw InputError(where + ": handle '" + s.handle + "' is already open");
          }
          break;
        case IoStep::Op::Read:
        case IoStep::Op::Write:
          if (!open_handles.contains(s.handle)) {
            throw InputError(where + ": handle '" + s.handle + "' is not open");
          }
          break;
        case IoStep::Op::Close:
          if (!open_handles.erase(s.handle)) {
            throw InputError(where + ": handle '" + s.handle + "' is not open");
          }
          break;
        case IoStep::Op::Delete:
          if (s.file.empty()) throw InputError(where + ": delete needs a file");
          break;
      }
    }
  }

  std::unordered_set<std::string_view> all_names;
  for (const SimTask& t : tasks) all_names.insert(t.name);
  for (const SimTask& t : tasks) {
    for (const std::string& d : t.depends_on) {
      if (!all_names.contains(d)) {
        throw InputError("task '" + t.name + "' depends on unknown task '" + d + "'");
      }
    }
  }
  topo_order(*this);  // throws on cycles
}

SimResult generate_run(const SimConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    throw InputError("output directory not empty: " + out_dir.string());
  }
  fs::create_directories(out_dir);

  const std::int64_t base_ms = std::llround(cfg.clock_base * 1000.0);
  const std::int64_t sp = cfg.step_spacing_ms;

  // Work dirs and pod names, unique per task.
  std::vector<TaskPlan> plans(cfg.tasks.size());
  std::unordered_set<std::string> used_dirs;
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    std::string digest = hex32(cfg.tasks[i].name, i);
    std::string wd;
    for (std::uint64_t salt = 0;; ++salt) {
      wd = cfg.work_dir_root + "/" + digest.substr(0, 2) + "/" + digest.substr(2);
      if (used_dirs.insert(wd).second) break;
      digest = hex32(cfg.tasks[i].name, i + 1000 + salt);
    }
    plans[i] = layout_task(cfg.tasks[i], cfg, std::move(wd));
    plans[i].pod_name = "nf-" + hex32(cfg.tasks[i].name, i + 7777);
  }

  // Schedule: every task starts at its requested offset but never before its
  // dependencies have finished.
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) index.emplace(cfg.tasks[i].name, i);
  for (std::size_t i : topo_order(cfg)) {
    std::int64_t start = cfg.tasks[i].start_ms.value_or(0);
    for (const std::string& dep : cfg.tasks[i].depends_on) {
      const TaskPlan& d = plans[index.at(dep)];
      start = std::max(start, d.start_rel_ms + d.duration_ms + sp);
    }
    plans[i].start_rel_ms = start;
  }

  // Per-node id allocation. Disjoint ranges per node unless pid collisions
  // are requested; cgroup ranges stay disjoint either way.
  struct NodeGen {
    std::int64_t next_pid = 0;
    std::uint64_t next_cgroup = 0;
    std::int64_t runtime_root = 0;   // implicit parent of container tasks
    std::int64_t executor_root = 0;  // implicit parent of plain tasks
    std::vector<Emission> emissions;
    std::vector<ForkEvent> forks;
  };
  std::map<std::string, NodeGen> gens;
  for (std::size_t i = 0; i < cfg.nodes.size(); ++i) {
    NodeGen g;
    const std::int64_t pid_base = cfg.collide_pids ? 1000 : 1000 + static_cast<std::int64_t>(i) * 1'000'000;
    g.runtime_root = pid_base + 1;
    g.executor_root = pid_base + 2;
    g.next_pid = pid_base + 10;
    g.next_cgroup = 50000 + static_cast<std::uint64_t>(i) * 1'000'000;
    gens.emplace(cfg.nodes[i], std::move(g));
  }

  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    const SimTask& task = cfg.tasks[i];
    TaskPlan& plan = plans[i];
    NodeGen& g = gens.at(task.node);

    plan.cgroupid = task.container ? g.next_cgroup++ : 0;
    const std::int64_t abs_start = base_ms + plan.start_rel_ms;
    const std::int64_t parent = task.container ? g.runtime_root : g.executor_root;
    for (int p = 0; p < task.processes; ++p) {
      const std::int64_t pid = g.next_pid++;
      plan.pids.push_back(pid);
      g.forks.push_back({Timestamp::from_millis(abs_start - sp),
                         p == 0 ? parent : plan.pids[0], pid, plan.cgroupid});
    }
    for (const LayoutEvent& e : plan.events) {
      g.emissions.push_back({abs_start + e.rel_ms, i, plan.pids[static_cast<std::size_t>(e.proc)],
                             plan.cgroupid, e.op, e.slot, e.path, e.offset, e.size, e.result,
                             e.flags});
    }
  }

  SimResult result;
  result.run_dir = out_dir;
  result.task_count = static_cast<int>(cfg.tasks.size());
  result.node_count = static_cast<int>(cfg.nodes.size());

  bool any_container = false;
  for (const SimTask& t : cfg.tasks) any_container |= t.container;

  for (const std::string& node : cfg.nodes) {
    NodeGen& g = gens.at(node);
    std::stable_sort(g.emissions.begin(), g.emissions.end(),
                     [](const Emission& a, const Emission& b) { return a.time_ms < b.time_ms; });
    std::stable_sort(g.forks.begin(), g.forks.end(),
                     [](const ForkEvent& a, const ForkEvent& b) { return a.time < b.time; });

    // Walk in trace order assigning run-unique handle and inode ids, and
    // advancing the per-pid CPU counters.
    std::uint64_t next_handle = 1, next_inode = 1;
    std::map<std::pair<std::size_t, int>, std::pair<std::uint64_t, std::uint64_t>> slot_ids;
    std::unordered_map<std::string, std::uint64_t> path_inode;
    std::unordered_map<std::int64_t, std::int64_t> cpu_ms;

    std::string io_text =
        "# io trace: time_start, time_end, pid, utime_start, utime_end, stime_start, "
        "stime_end, inode, type, result, handle, offset, size, flags, path\n";
    auto& truth_rows = result.truth.by_node[node];

    std::int64_t seq = 0;
    for (const Emission& em : g.emissions) {
      IoEvent e;
      e.time_start = e.time_end = Timestamp::from_millis(em.time_ms);
      e.pid = em.pid;
      auto [cit, fresh] = cpu_ms.try_emplace(em.pid, 100'000);
      if (!fresh) cit->second += 1;
      e.utime_start = e.utime_end = Timestamp::from_millis(cit->second);
      e.stime_start = e.stime_end = e.utime_start;
      e.result = em.result;
      e.offset = em.offset;
      e.size = em.size;
      e.flags = em.flags;

      switch (em.op) {
        case IoStep::Op::Open: {
          e.kind = OpKind::Open;
          e.handle_uid = next_handle++;
          auto [pit, inserted] = path_inode.try_emplace(em.path, next_inode);
          if (inserted) ++next_inode;
          e.inode_uid = pit->second;
          e.path = em.path;
          slot_ids[{em.task_index, em.slot}] = {e.handle_uid, e.inode_uid};
          break;
        }
        case IoStep::Op::Read:
        case IoStep::Op::Write:
        case IoStep::Op::Close: {
          e.kind = em.op == IoStep::Op::Read    ? OpKind::Read
                   : em.op == IoStep::Op::Write ? OpKind::Write
                                                : OpKind::Close;
          auto ids = slot_ids.at({em.task_index, em.slot});
          e.handle_uid = ids.first;
          e.inode_uid = ids.second;
          break;
        }
        case IoStep::Op::Delete: {
          e.kind = OpKind::Delete;
          e.handle_uid = 0;
          auto pit = path_inode.find(em.path);
          if (pit != path_inode.end()) {
            e.inode_uid = pit->second;
            path_inode.erase(pit);  // a recreated path gets a fresh inode id
          } else {
            e.inode_uid = next_inode++;
          }
          e.path = em.path;
          break;
        }
      }

      io_text += format_io_trace_line(e);
      io_text += '\n';
      truth_rows.push_back(
          {seq++, cfg.tasks[em.task_index].name, em.pid, em.cgroupid, false});
    }
    result.io_events += seq;

    std::string fork_text = "# pid trace: time, parent_pid, pid, cgroupid\n";
    for (const ForkEvent& f : g.forks) {
      fork_text += format_fork_trace_line(f);
      fork_text += '\n';
    }
    result.fork_events += static_cast<std::int64_t>(g.forks.size());

    fs::create_directories(run_node_dir(out_dir, node));
    write_text_file(run_node_dir(out_dir, node) / kIoTraceFileName, io_text);
    write_text_file(run_node_dir(out_dir, node) / kForkTraceFileName, fork_text);
  }

  // SWMS log: completion lines ordered the way the manager would emit them.
  std::vector<std::size_t> by_end(cfg.tasks.size());
  for (std::size_t i = 0; i < by_end.size(); ++i) by_end[i] = i;
  std::stable_sort(by_end.begin(), by_end.end(), [&](std::size_t a, std::size_t b) {
    return plans[a].start_rel_ms + plans[a].duration_ms <
           plans[b].start_rel_ms + plans[b].duration_ms;
  });
  std::string nf_text;
  for (std::size_t i : by_end) {
    const std::int64_t end_ms = base_ms + plans[i].start_rel_ms + plans[i].duration_ms;
    nf_text += format_log_clock(end_ms);
    nf_text += " [Task monitor] DEBUG n.processor.TaskPollingMonitor - Task completed > "
               "TaskHandler[id: " +
               std::to_string(i + 1) + "; name: " + cfg.tasks[i].name +
               "; status: COMPLETED; exit: 0; error: -; workDir: " + plans[i].work_dir + "]\n";
  }
  fs::create_directories(out_dir / "swms");
  write_text_file(run_nextflow_log(out_dir), nf_text);

  if (any_container) {
    std::string pods_text;
    std::string events_text = "LAST SEEN   TYPE     REASON    OBJECT\n";
    for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
      if (!cfg.tasks[i].container) continue;
      pods_text += cfg.tasks[i].node + "\t" + plans[i].pod_name + "\t" +
                   std::to_string(plans[i].cgroupid) +
                   "\ttaskName=" + normalize_task_name(cfg.tasks[i].name) + "\tapp=nextflow\n";
      events_text += std::to_string(5 + i % 50) + "m         Normal   Started   pod/" +
                     plans[i].pod_name + "\n";
    }
    fs::create_directories(out_dir / "k8s");
    write_text_file(run_pod_meta(out_dir), pods_text);
    write_text_file(run_k8s_events(out_dir), events_text);
  }

  result.truth.save(run_ground_truth(out_dir));
  return result;
}

void GroundTruth::save(const fs::path& path) const {
  std::string text = "node,seq,task,pid,cgroupid,dropped\n";
  for (const auto& [node, rows] : by_node) {
    for (const GroundTruthRow& r : rows) {
      text += node + "," + std::to_string(r.seq) + "," + r.task + "," + std::to_string(r.pid) +
              "," + std::to_string(r.cgroupid) + "," + (r.dropped ? "1" : "0") + "\n";
    }
  }
  write_text_file(path, text);
}

GroundTruth GroundTruth::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  GroundTruth truth;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;  // header
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
      auto comma = line.find(',', pos);
      parts.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (parts.size() < 6) throw ParseError(path.string(), line_no, "short ground-truth row");
    GroundTruthRow row;
    // task names may contain commas; rejoin the middle fields
    std::string task = parts[2];
    for (std::size_t i = 3; i + 3 < parts.size(); ++i) task += "," + parts[i];
    row.seq = std::stoll(parts[1]);
    row.task = std::move(task);
    row.pid = std::stoll(parts[parts.size() - 3]);
    row.cgroupid = std::stoull(parts[parts.size() - 2]);
    row.dropped = parts.back() == "1";
    truth.by_node[parts[0]].push_back(std::move(row));
  }
  return truth;
}

void DropLedger::save(const fs::path& path) const {
  std::string text = "node,stream,seq,kind\n";
  for (const DropLedgerRow& r : rows) {
    text += r.node + "," + (r.fork_stream ? "fork" : "io") + "," + std::to_string(r.seq) + "," +
            std::string(1, r.kind) + "\n";
  }
  write_text_file(path, text);
}

DropLedger DropLedger::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  DropLedger ledger;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
      auto comma = line.find(',', pos);
      parts.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (parts.size() != 4 || parts[3].size() != 1) {
      throw ParseError(path.string(), line_no, "malformed drop-ledger row");
    }
    ledger.rows.push_back({parts[0], parts[1] == "fork", std::stoll(parts[2]), parts[3][0]});
  }
  return ledger;
}

DropLedger inject_loss(const fs::path& run_dir, const LossModel& model) {
  DropLedger ledger;
  if (!model.active()) return ledger;

  std::vector<std::string> node_ids;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (!entry.is_directory()) continue;
    std::string name = entry.path().filename().string();
    if (name == "swms" || name == "k8s") continue;
    node_ids.push_back(std::move(name));
  }
  std::sort(node_ids.begin(), node_ids.end());

  std::set<std::tuple<std::string, bool, std::int64_t>> explicit_drops;
  for (const auto& d : model.drops) explicit_drops.emplace(d.node, d.fork_stream, d.seq);

  std::mt19937_64 rng(model.seed);
  std::map<std::string, std::int64_t> drops_per_node;
  std::map<std::string, std::set<std::int64_t>> dropped_io_seqs;

  for (const std::string& node : node_ids) {
    for (bool fork_stream : {false, true}) {
      const fs::path file =
          run_dir / node / (fork_stream ? kForkTraceFileName : kIoTraceFileName);
      if (!fs::exists(file)) continue;

      std::ifstream in(file);
      if (!in) throw InputError("cannot open " + file.string());
      std::vector<std::string> out_lines;
      std::string line;
      std::int64_t seq = 0;
      bool changed = false;
      while (std::getline(in, line)) {
        std::string_view sv = line;
        while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
        if (sv.empty() || sv.front() == '#') {
          out_lines.push_back(line);
          continue;
        }
        char kind = 'F';
        double p = model.p_fork;
        if (!fork_stream) {
          auto e = parse_io_trace_line(line, file.string(), static_cast<std::size_t>(seq));
          kind = e ? op_letter(e->kind) : '?';
          p = e ? prob_for(model, e->kind) : 0.0;
        }
        bool drop = explicit_drops.contains({node, fork_stream, seq});
        if (!drop && p > 0) drop = u01(rng) < p;
        if (drop) {
          ledger.rows.push_back({node, fork_stream, seq, kind});
          ++drops_per_node[node];
          if (!fork_stream) dropped_io_seqs[node].insert(seq);
          changed = true;
        } else {
          out_lines.push_back(line);
        }
        ++seq;
      }
      in.close();
      if (changed) {
        std::string text;
        for (const std::string& l : out_lines) {
          text += l;
          text += '\n';
        }
        write_text_file(file, text);
      }
    }
  }

  if (!ledger.rows.empty()) {
    for (const auto& [node, count] : drops_per_node) {
      write_text_file(run_dir / node / kLossWarningFileName,
                      "warning: ring buffer overrun, " + std::to_string(count) +
                          " trace records lost\n");
    }
    if (fs::exists(run_ground_truth(run_dir))) {
      GroundTruth truth = GroundTruth::load(run_ground_truth(run_dir));
      for (auto& [node, rows] : truth.by_node) {
        auto it = dropped_io_seqs.find(node);
        if (it == dropped_io_seqs.end()) continue;
        for (GroundTruthRow& row : rows) {
          if (it->second.contains(row.seq)) row.dropped = true;
        }
      }
      truth.save(run_ground_truth(run_dir));
    }
    ledger.save(run_drop_ledger(run_dir));
  }
  return ledger;
}

}  // namespace wfio
