#include "wfio/trace_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <unordered_map>
#include <unordered_set>

namespace wfio {

namespace {

constexpr std::int64_t kNanosPerSecond = 1'000'000'000;
// Largest whole-seconds value representable in signed 64-bit nanoseconds.
constexpr std::int64_t kMaxWholeSeconds = 9'000'000'000;

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

}  // namespace

std::optional<Timestamp> Timestamp::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::string_view int_part = text;
  std::string_view frac_part;
  if (auto dot = text.find('.'); dot != std::string_view::npos) {
    int_part = text.substr(0, dot);
    frac_part = text.substr(dot + 1);
    if (frac_part.empty() || frac_part.size() > 9) return std::nullopt;
    if (!all_digits(frac_part)) return std::nullopt;
  }
  if (!all_digits(int_part)) return std::nullopt;

  std::int64_t secs = 0;
  auto [p, ec] = std::from_chars(int_part.data(), int_part.data() + int_part.size(), secs);
  if (ec != std::errc{} || p != int_part.data() + int_part.size()) return std::nullopt;
  if (secs > kMaxWholeSeconds) return std::nullopt;

  std::int64_t frac = 0;
  for (char c : frac_part) frac = frac * 10 + (c - '0');
  for (std::size_t i = frac_part.size(); i < 9; ++i) frac *= 10;

  return Timestamp{secs * kNanosPerSecond + frac, static_cast<std::uint8_t>(frac_part.size())};
}

Timestamp Timestamp::from_seconds(double sec, int frac_digits) {
  frac_digits = std::clamp(frac_digits, 0, 9);
  std::int64_t unit = kNanosPerSecond;
  double scale = 1.0;
  for (int i = 0; i < frac_digits; ++i) {
    unit /= 10;
    scale *= 10.0;
  }
  return {std::llround(sec * scale) * unit, static_cast<std::uint8_t>(frac_digits)};
}

std::string Timestamp::str() const {
  const std::int64_t s = nanos / kNanosPerSecond;
  const std::int64_t f = nanos % kNanosPerSecond;
  std::string out = std::to_string(s);
  const int d = std::min<int>(frac_digits, 9);
  if (d > 0) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%09lld", static_cast<long long>(f));
    out += '.';
    out.append(buf, buf + d);
  }
  return out;
}

std::optional<OpKind> op_kind_from_letter(char c) {
  switch (c) {
    case 'O': return OpKind::Open;
    case 'R': return OpKind::Read;
    case 'W': return OpKind::Write;
    case 'C': return OpKind::Close;
    case 'D': return OpKind::Delete;
    default: return std::nullopt;
  }
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::WorkDirMarker: return "WorkDirMarker";
    case Method::PodLabel: return "PodLabel";
    case Method::ProcessSubtree: return "ProcessSubtree";
  }
  return "?";
}

std::string_view violation_kind_name(ViolationKind k) {
  switch (k) {
    case ViolationKind::DuplicateOpen: return "duplicate-open";
    case ViolationKind::OrphanReference: return "orphan-reference";
    case ViolationKind::InodePathConflict: return "inode-path-conflict";
  }
  return "?";
}

std::int64_t Attribution::orphan_count() const {
  std::int64_t n = 0;
  for (const auto& [node, tasks] : event_task)
    for (std::int64_t t : tasks)
      if (t == kUnbound) ++n;
  return n;
}

std::int64_t Attribution::attributed_count() const {
  std::int64_t n = 0;
  for (const auto& [node, tasks] : event_task)
    for (std::int64_t t : tasks)
      if (t != kUnbound) ++n;
  return n;
}

std::int64_t Attribution::task_of(const std::string& node_id, std::size_t event_index) const {
  auto it = event_task.find(node_id);
  if (it == event_task.end() || event_index >= it->second.size()) return kUnbound;
  return it->second[event_index];
}

std::vector<IdentityViolation> event_identity_check(const NodeTrace& trace) {
  std::vector<IdentityViolation> out;
  std::unordered_set<std::uint64_t> opened;
  std::unordered_map<std::uint64_t, std::string> inode_path;

  // An inode is "used" with a path by Open and Delete; a Delete ends the
  // inode's lifetime, so the same id may later carry another path.
  auto use_inode = [&](std::size_t idx, const IoEvent& e) {
    if (e.path.empty()) return;
    auto [it, inserted] = inode_path.try_emplace(e.inode_uid, e.path);
    if (!inserted && it->second != e.path) {
      out.push_back({ViolationKind::InodePathConflict, idx, 0, e.inode_uid,
                     "inode " + std::to_string(e.inode_uid) + " used with '" + it->second +
                         "' and '" + e.path + "' without an intervening delete"});
    }
  };

  for (std::size_t i = 0; i < trace.io_events.size(); ++i) {
    const IoEvent& e = trace.io_events[i];
    switch (e.kind) {
      case OpKind::Open:
        if (!opened.insert(e.handle_uid).second) {
          out.push_back({ViolationKind::DuplicateOpen, i, e.handle_uid, e.inode_uid,
                         "handle " + std::to_string(e.handle_uid) + " opened more than once"});
        }
        use_inode(i, e);
        break;
      case OpKind::Read:
      case OpKind::Write:
      case OpKind::Close:
        if (!opened.contains(e.handle_uid)) {
          out.push_back({ViolationKind::OrphanReference, i, e.handle_uid, e.inode_uid,
                         std::string(1, op_letter(e.kind)) + " on handle " +
                             std::to_string(e.handle_uid) + " without a prior open"});
        }
        break;
      case OpKind::Delete:
        use_inode(i, e);
        inode_path.erase(e.inode_uid);
        break;
    }
  }
  return out;
}

}  // namespace wfio
