#include "wfio/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <future>
#include <istream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace wfio {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<std::int64_t> to_int64(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> to_uint64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

// Accepts "0x..." hex as written by the tracers and bare digits ("0" for
// unused columns).
std::optional<std::uint32_t> to_flags(std::string_view s) {
  if (s.starts_with("0x") || s.starts_with("0X")) s.remove_prefix(2);
  if (s.empty()) return std::nullopt;
  std::uint32_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

constexpr std::array<std::string_view, 15> kIoColumns = {
    "time_start", "time_end", "pid",    "utime_start", "utime_end",
    "stime_start", "stime_end", "inode", "type",        "result",
    "handle",      "offset",    "size",  "flags",       "path"};

[[noreturn]] void bad_field(std::string_view file, std::size_t line_no, int col,
                            std::string_view value) {
  throw ParseError(std::string(file), line_no,
                   "non-numeric value '" + std::string(value) + "' in field " +
                       std::string(kIoColumns[col]));
}

bool path_under(std::string_view path, std::string_view prefix) {
  while (prefix.size() > 1 && prefix.back() == '/') prefix.remove_suffix(1);
  if (prefix.empty()) return true;
  if (prefix == "/") return path.starts_with('/');
  if (!path.starts_with(prefix)) return false;
  return path.size() == prefix.size() || path[prefix.size()] == '/';
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(std::string_view(line), line_no);
  }
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

}  // namespace

const NodeTrace* RunData::find_node(std::string_view node_id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), node_id,
                             [](const NodeTrace& n, std::string_view id) { return n.node_id < id; });
  if (it == nodes.end() || it->node_id != node_id) return nullptr;
  return &*it;
}

std::optional<IoEvent> parse_io_trace_line(std::string_view line, std::string_view file,
                                           std::size_t line_no) {
  std::string_view s = trim(line);
  if (s.empty() || s.front() == '#') return std::nullopt;

  // Positional split on the first 14 commas; the remainder is the path, so
  // paths containing commas survive.
  std::array<std::string_view, 15> f;
  std::size_t pos = 0;
  for (int i = 0; i < 14; ++i) {
    auto comma = s.find(',', pos);
    if (comma == std::string_view::npos) {
      throw ParseError(std::string(file), line_no,
                       "expected 15 comma-separated fields, found " + std::to_string(i + 1));
    }
    f[i] = trim(s.substr(pos, comma - pos));
    pos = comma + 1;
  }
  f[14] = trim(s.substr(pos));

  auto ts = [&](int i) {
    auto v = Timestamp::parse(f[i]);
    if (!v) bad_field(file, line_no, i, f[i]);
    return *v;
  };
  auto i64 = [&](int i) {
    auto v = to_int64(f[i]);
    if (!v) bad_field(file, line_no, i, f[i]);
    return *v;
  };
  auto u64 = [&](int i) {
    auto v = to_uint64(f[i]);
    if (!v) bad_field(file, line_no, i, f[i]);
    return *v;
  };

  IoEvent e;
  e.time_start = ts(0);
  e.time_end = ts(1);
  e.pid = i64(2);
  e.utime_start = ts(3);
  e.utime_end = ts(4);
  e.stime_start = ts(5);
  e.stime_end = ts(6);
  e.inode_uid = u64(7);
  if (f[8].size() != 1) {
    throw ParseError(std::string(file), line_no, "unknown kind letter '" + std::string(f[8]) + "'");
  }
  if (auto k = op_kind_from_letter(f[8][0])) {
    e.kind = *k;
  } else {
    throw ParseError(std::string(file), line_no, "unknown kind letter '" + std::string(f[8]) + "'");
  }
  e.result = i64(9);
  e.handle_uid = u64(10);
  e.offset = i64(11);
  e.size = i64(12);
  if (auto fl = to_flags(f[13])) {
    e.flags = *fl;
  } else {
    bad_field(file, line_no, 13, f[13]);
  }
  e.path = std::string(f[14]);
  return e;
}

std::string format_io_trace_line(const IoEvent& e) {
  char flags[16];
  std::snprintf(flags, sizeof flags, "0x%08x", e.flags);
  std::string out;
  out.reserve(128 + e.path.size());
  out += e.time_start.str();
  out += ", ";
  out += e.time_end.str();
  out += ", ";
  out += std::to_string(e.pid);
  out += ", ";
  out += e.utime_start.str();
  out += ", ";
  out += e.utime_end.str();
  out += ", ";
  out += e.stime_start.str();
  out += ", ";
  out += e.stime_end.str();
  out += ", ";
  out += std::to_string(e.inode_uid);
  out += ", ";
  out += op_letter(e.kind);
  out += ", ";
  out += std::to_string(e.result);
  out += ", ";
  out += std::to_string(e.handle_uid);
  out += ", ";
  out += std::to_string(e.offset);
  out += ", ";
  out += std::to_string(e.size);
  out += ", ";
  out += flags;
  out += ',';
  if (!e.path.empty()) {
    out += ' ';
    out += e.path;
  }
  return out;
}

std::string format_fork_trace_line(const ForkEvent& e) {
  return e.time.str() + ", " + std::to_string(e.parent_pid) + ", " + std::to_string(e.pid) +
         ", " + std::to_string(e.cgroupid);
}

std::vector<IoEvent> parse_io_trace(std::istream& in, std::string_view file) {
  std::vector<IoEvent> events;
  for_each_line(in, [&](std::string_view line, std::size_t line_no) {
    if (auto e = parse_io_trace_line(line, file, line_no)) events.push_back(std::move(*e));
  });
  return events;
}

std::vector<IoEvent> parse_io_trace_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_io_trace(in, path.string());
}

std::vector<ForkEvent> parse_fork_trace(std::istream& in, std::string_view file) {
  std::vector<ForkEvent> events;
  for_each_line(in, [&](std::string_view raw, std::size_t line_no) {
    std::string_view s = trim(raw);
    if (s.empty() || s.front() == '#') return;
    std::array<std::string_view, 4> f;
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
      auto comma = s.find(',', pos);
      if (comma == std::string_view::npos) {
        throw ParseError(std::string(file), line_no,
                         "expected 4 comma-separated fields, found " + std::to_string(i + 1));
      }
      f[i] = trim(s.substr(pos, comma - pos));
      pos = comma + 1;
    }
    f[3] = trim(s.substr(pos));
    if (f[3].find(',') != std::string_view::npos) {
      throw ParseError(std::string(file), line_no, "expected 4 comma-separated fields, found more");
    }

    ForkEvent e;
    auto t = Timestamp::parse(f[0]);
    if (!t) throw ParseError(std::string(file), line_no, "non-numeric time '" + std::string(f[0]) + "'");
    e.time = *t;
    if (e.time.nanos <= 0) throw ParseError(std::string(file), line_no, "non-positive time");
    auto pp = to_int64(f[1]), p = to_int64(f[2]);
    auto cg = to_uint64(f[3]);
    if (!pp || !p || !cg) {
      throw ParseError(std::string(file), line_no, "non-numeric pid or cgroupid field");
    }
    e.parent_pid = *pp;
    e.pid = *p;
    e.cgroupid = *cg;
    events.push_back(e);
  });
  std::stable_sort(events.begin(), events.end(),
                   [](const ForkEvent& a, const ForkEvent& b) { return a.time < b.time; });
  return events;
}

std::vector<ForkEvent> parse_fork_trace_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_fork_trace(in, path.string());
}

std::vector<TaskRecord> parse_nextflow_log(std::istream& in, std::string_view file) {
  constexpr std::string_view kMarker = "Task completed > TaskHandler[";
  std::vector<TaskRecord> tasks;
  for_each_line(in, [&](std::string_view line, std::size_t line_no) {
    auto pos = line.find(kMarker);
    if (pos == std::string_view::npos) return;
    auto start = pos + kMarker.size();
    auto end = line.rfind(']');
    if (end == std::string_view::npos || end < start) {
      throw ParseError(std::string(file), line_no, "unterminated TaskHandler entry");
    }
    std::string_view inner = line.substr(start, end - start);

    // "key: value; key: value; ...". Values may contain ':' but not "; ".
    std::map<std::string_view, std::string_view> kv;
    std::size_t p = 0;
    while (p < inner.size()) {
      auto sep = inner.find("; ", p);
      std::string_view item =
          sep == std::string_view::npos ? inner.substr(p) : inner.substr(p, sep - p);
      p = sep == std::string_view::npos ? inner.size() : sep + 2;
      auto colon = item.find(": ");
      if (colon == std::string_view::npos) continue;
      kv.emplace(trim(item.substr(0, colon)), trim(item.substr(colon + 2)));
    }

    auto need = [&](std::string_view key) {
      auto it = kv.find(key);
      if (it == kv.end()) {
        throw ParseError(std::string(file), line_no,
                         "TaskHandler entry missing key '" + std::string(key) + "'");
      }
      return it->second;
    };

    TaskRecord t;
    auto id = to_int64(need("id"));
    if (!id) throw ParseError(std::string(file), line_no, "non-numeric TaskHandler id");
    t.task_id = *id;
    t.name = std::string(need("name"));
    t.status = std::string(need("status"));
    std::string_view exit = need("exit");
    if (exit == "-") {
      t.exit_code = -1;  // aborted tasks log no exit status
    } else if (auto v = to_int64(exit)) {
      t.exit_code = static_cast<int>(*v);
    } else {
      throw ParseError(std::string(file), line_no, "non-numeric exit '" + std::string(exit) + "'");
    }
    t.work_dir = std::string(need("workDir"));
    t.source = TaskSource::Nextflow;
    tasks.push_back(std::move(t));
  });
  return tasks;
}

std::vector<TaskRecord> parse_airflow_log(std::istream& in, std::string_view file,
                                          std::int64_t first_task_id) {
  constexpr std::string_view kMarker = "Sending TaskInstanceKey(";
  std::vector<TaskRecord> tasks;
  std::int64_t next_id = first_task_id;
  for_each_line(in, [&](std::string_view line, std::size_t line_no) {
    auto pos = line.find(kMarker);
    if (pos == std::string_view::npos) return;
    auto start = pos + kMarker.size();
    auto end = line.find(')', start);
    if (end == std::string_view::npos) {
      throw ParseError(std::string(file), line_no, "unterminated TaskInstanceKey tuple");
    }
    std::string_view inner = line.substr(start, end - start);

    std::map<std::string_view, std::string_view> kv;
    std::size_t p = 0;
    while (p < inner.size()) {
      auto sep = inner.find(", ", p);
      std::string_view item =
          sep == std::string_view::npos ? inner.substr(p) : inner.substr(p, sep - p);
      p = sep == std::string_view::npos ? inner.size() : sep + 2;
      auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        throw ParseError(std::string(file), line_no,
                         "malformed TaskInstanceKey item '" + std::string(item) + "'");
      }
      std::string_view value = trim(item.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '\'' && value.back() == '\'') {
        value = value.substr(1, value.size() - 2);
      }
      kv.emplace(trim(item.substr(0, eq)), value);
    }

    auto dag = kv.find("dag_id");
    auto task = kv.find("task_id");
    if (dag == kv.end() || task == kv.end()) {
      throw ParseError(std::string(file), line_no, "TaskInstanceKey missing dag_id or task_id");
    }

    TaskRecord t;
    t.task_id = next_id++;
    t.name = std::string(dag->second) + "." + std::string(task->second);
    t.source = TaskSource::Airflow;
    tasks.push_back(std::move(t));
  });
  return tasks;
}

std::vector<PodMeta> parse_pod_meta(std::istream& in, std::string_view file) {
  std::vector<PodMeta> pods;
  std::set<std::pair<std::string, std::string>> seen;
  for_each_line(in, [&](std::string_view raw, std::size_t line_no) {
    std::string_view s = raw;
    if (trim(s).empty() || trim(s).front() == '#') return;

    std::vector<std::string_view> cols;
    std::size_t p = 0;
    while (true) {
      auto tab = s.find('\t', p);
      cols.push_back(trim(s.substr(p, tab == std::string_view::npos ? tab : tab - p)));
      if (tab == std::string_view::npos) break;
      p = tab + 1;
    }
    if (cols.size() < 3 || cols[0].empty() || cols[1].empty()) {
      throw ParseError(std::string(file), line_no,
                       "pod metadata row needs node, pod and cgroupid columns");
    }

    PodMeta pod;
    pod.node_id = std::string(cols[0]);
    pod.pod_name = std::string(cols[1]);
    auto cg = to_uint64(cols[2]);
    if (!cg || *cg == 0) {
      throw ParseError(std::string(file), line_no,
                       "invalid cgroupid '" + std::string(cols[2]) + "'");
    }
    pod.cgroupid = *cg;
    for (std::size_t i = 3; i < cols.size(); ++i) {
      if (cols[i].empty()) continue;
      auto eq = cols[i].find('=');
      if (eq == std::string_view::npos) {
        throw ParseError(std::string(file), line_no,
                         "malformed label '" + std::string(cols[i]) + "' (expected key=value)");
      }
      pod.labels.emplace(cols[i].substr(0, eq), cols[i].substr(eq + 1));
    }
    if (!seen.emplace(pod.node_id, pod.pod_name).second) {
      throw ParseError(std::string(file), line_no,
                       "duplicate pod '" + pod.node_id + "/" + pod.pod_name + "'");
    }
    pods.push_back(std::move(pod));
  });
  return pods;
}

std::vector<std::string> parse_k8s_started_pods(std::istream& in) {
  std::vector<std::string> pods;
  std::unordered_set<std::string> seen;
  for_each_line(in, [&](std::string_view line, std::size_t) {
    if (trim(line).starts_with('#')) return;
    std::istringstream tokens{std::string(line)};
    std::string tok;
    bool started = false;
    while (tokens >> tok) {
      if (tok == "Started") {
        started = true;
      } else if (started && tok.starts_with("pod/")) {
        std::string name = tok.substr(4);
        if (seen.insert(name).second) pods.push_back(std::move(name));
        break;
      }
    }
  });
  return pods;
}

std::vector<IoEvent> filter_io_events(std::vector<IoEvent> events,
                                      std::span<const ForkEvent> forks,
                                      const FilterSettings& filters) {
  if (!filters.active()) return events;

  std::unordered_set<std::int64_t> kept_pids(filters.pids.begin(), filters.pids.end());
  if (!filters.pids.empty() && filters.pid_subtree) {
    // Replays the fork stream the way the tracer grows its pid set: a child
    // of a kept pid becomes kept from its fork on. Forks are time-sorted.
    for (const ForkEvent& f : forks) {
      if (kept_pids.contains(f.parent_pid)) kept_pids.insert(f.pid);
    }
  }

  auto pid_ok = [&](std::int64_t pid) {
    return filters.pids.empty() || kept_pids.contains(pid);
  };
  auto path_ok = [&](std::string_view path) {
    if (!filters.fs_tag.empty() && !path_under(path, filters.fs_tag)) return false;
    if (filters.dir_prefixes.empty()) return true;
    for (const auto& prefix : filters.dir_prefixes) {
      if (path_under(path, prefix)) return true;
    }
    return false;
  };

  std::unordered_set<std::uint64_t> dropped_handles;
  std::vector<IoEvent> out;
  out.reserve(events.size());
  for (auto& e : events) {
    switch (e.kind) {
      case OpKind::Open:
        if (pid_ok(e.pid) && path_ok(e.path)) {
          out.push_back(std::move(e));
        } else {
          dropped_handles.insert(e.handle_uid);
        }
        break;
      case OpKind::Read:
      case OpKind::Write:
      case OpKind::Close:
        if (pid_ok(e.pid) && !dropped_handles.contains(e.handle_uid)) out.push_back(std::move(e));
        break;
      case OpKind::Delete:
        if (pid_ok(e.pid) && path_ok(e.path)) out.push_back(std::move(e));
        break;
    }
  }
  return out;
}

RunData load_run(const RunInputs& inputs) {
  if (inputs.node_dirs.empty()) throw InputError("at least one trace directory is required");

  struct Entry {
    std::string id;
    std::filesystem::path dir;
  };
  std::vector<Entry> entries;
  for (const auto& dir : inputs.node_dirs) {
    auto normal = dir.lexically_normal();
    std::string id = normal.filename().string();
    if (id.empty() || id == ".") id = normal.parent_path().filename().string();
    if (id.empty()) throw InputError("cannot derive a node id from '" + dir.string() + "'");
    entries.push_back({std::move(id), dir});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].id == entries[i - 1].id) {
      throw InputError("duplicate node id '" + entries[i].id + "'");
    }
  }

  auto load_node = [&filters = inputs.filters](const Entry& entry) {
    if (!std::filesystem::is_directory(entry.dir)) {
      throw InputError("not a trace directory: " + entry.dir.string());
    }
    NodeTrace trace;
    trace.node_id = entry.id;
    auto io_path = entry.dir / kIoTraceFileName;
    if (!std::filesystem::exists(io_path)) {
      throw InputError("missing " + std::string(kIoTraceFileName) + " in " + entry.dir.string());
    }
    auto fork_path = entry.dir / kForkTraceFileName;
    if (std::filesystem::exists(fork_path)) {
      trace.fork_events = parse_fork_trace_file(fork_path);
    }
    trace.io_events =
        filter_io_events(parse_io_trace_file(io_path), trace.fork_events, filters);
    trace.loss_warnings = std::filesystem::exists(entry.dir / kLossWarningFileName);
    return trace;
  };

  RunData data;
  if (entries.size() == 1) {
    data.nodes.push_back(load_node(entries[0]));
  } else {
    std::vector<std::future<NodeTrace>> futures;
    futures.reserve(entries.size());
    for (const auto& entry : entries) {
      futures.push_back(std::async(std::launch::async, load_node, std::cref(entry)));
    }
    for (auto& f : futures) data.nodes.push_back(f.get());
  }

  if (!inputs.nextflow_log.empty()) {
    auto in = std::ifstream(inputs.nextflow_log);
    if (!in) throw InputError("cannot open " + inputs.nextflow_log.string());
    data.tasks = parse_nextflow_log(in, inputs.nextflow_log.string());
  }
  if (!inputs.airflow_log.empty()) {
    std::int64_t first_id = 1;
    for (const auto& t : data.tasks) first_id = std::max(first_id, t.task_id + 1);
    auto in = std::ifstream(inputs.airflow_log);
    if (!in) throw InputError("cannot open " + inputs.airflow_log.string());
    auto more = parse_airflow_log(in, inputs.airflow_log.string(), first_id);
    data.tasks.insert(data.tasks.end(), more.begin(), more.end());
  }
  {
    std::unordered_set<std::int64_t> ids;
    for (const auto& t : data.tasks) {
      if (!ids.insert(t.task_id).second) {
        throw InputError("duplicate task id " + std::to_string(t.task_id) + " in SWMS log");
      }
    }
  }

  if (!inputs.pod_meta.empty()) {
    auto in = std::ifstream(inputs.pod_meta);
    if (!in) throw InputError("cannot open " + inputs.pod_meta.string());
    data.pods = parse_pod_meta(in, inputs.pod_meta.string());
  }
  if (!inputs.k8s_events.empty()) {
    auto in = std::ifstream(inputs.k8s_events);
    if (!in) throw InputError("cannot open " + inputs.k8s_events.string());
    data.started_pods = parse_k8s_started_pods(in);
  }
  return data;
}

}  // namespace wfio
