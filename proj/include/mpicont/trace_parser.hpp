// SPDX-License-Identifier: Apache-2.0

// Parser for `strace -f -e trace=%file` logs.
//
// Accepted line shapes (strace 5.x / 6.x):
//
//   openat(AT_FDCWD, "/usr/lib/libmpi.so.12", O_RDONLY|O_CLOEXEC) = 3
//   [pid 12345] openat(AT_FDCWD, "/lib/x.so", O_RDONLY) = -1 ENOENT (No such file or directory)
//   12345 execve("/usr/bin/srun", ["srun"], 0x7ffd... /* 42 vars */) = 0
//
// The bare numeric pid prefix is what `strace -f -o FILE` writes. Signal
// notices, exit notices and unfinished/resumed fragments produce no event.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mpicont/text.hpp"

namespace mpicont {

struct Success {
  long long value = 0;
  friend bool operator==(const Success&, const Success&) = default;
};

struct Failure {
  std::string errno_name;
  friend bool operator==(const Failure&, const Failure&) = default;
};

using Outcome = std::variant<Success, Failure>;

inline bool succeeded(const Outcome& o) { return std::holds_alternative<Success>(o); }

struct TraceEvent {
  std::optional<long long> pid;
  std::string syscall;
  std::string path;
  Outcome outcome;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Counters for lines that did not become events.
struct TraceStats {
  std::size_t skipped = 0;    // not recognizable as a trace line
  std::size_t ignored = 0;    // notices, fragments, untracked syscalls
  std::size_t truncated = 0;  // path elided by strace's string limit
  std::size_t relative = 0;   // path not absolute

  friend bool operator==(const TraceStats&, const TraceStats&) = default;
};

inline constexpr std::array<std::string_view, 11> kTrackedSyscalls = {
    "open",   "openat", "openat2", "execve",   "access",    "faccessat",
    "stat",   "lstat",  "statx",   "readlink", "readlinkat"};

inline bool is_tracked_syscall(std::string_view name) {
  return std::find(kTrackedSyscalls.begin(), kTrackedSyscalls.end(), name) !=
         kTrackedSyscalls.end();
}

namespace detail {

inline bool is_ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || text::is_digit(c) || c == '_';
}

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

struct QuotedString {
  std::string value;
  bool truncated = false;
};

// Decodes the C-style string starting at s[open] == '"'. Returns nothing when
// the closing quote is missing.
inline std::optional<QuotedString> read_quoted(std::string_view s, std::size_t open) {
  QuotedString out;
  std::size_t i = open + 1;
  while (i < s.size()) {
    char c = s[i];
    if (c == '"') {
      out.truncated = s.substr(i + 1).starts_with("...");
      return out;
    }
    if (c != '\\') {
      out.value += c;
      ++i;
      continue;
    }
    if (i + 1 >= s.size()) return std::nullopt;
    char e = s[i + 1];
    i += 2;
    switch (e) {
      case 'n': out.value += '\n'; break;
      case 't': out.value += '\t'; break;
      case 'r': out.value += '\r'; break;
      case 'v': out.value += '\v'; break;
      case 'f': out.value += '\f'; break;
      case 'x': {
        int v = 0, digits = 0;
        while (digits < 2 && i < s.size() && hex_value(s[i]) >= 0) {
          v = v * 16 + hex_value(s[i]);
          ++i;
          ++digits;
        }
        if (digits == 0) return std::nullopt;
        out.value += static_cast<char>(v);
        break;
      }
      default:
        if (e >= '0' && e <= '7') {
          int v = e - '0', digits = 1;
          while (digits < 3 && i < s.size() && s[i] >= '0' && s[i] <= '7') {
            v = v * 8 + (s[i] - '0');
            ++i;
            ++digits;
          }
          out.value += static_cast<char>(v & 0xff);
        } else {
          out.value += e;  // \" \\ and anything else verbatim
        }
    }
  }
  return std::nullopt;
}

// Parses "= 3", "= -1 ENOENT (...)", optionally followed by " <0.000012>".
inline std::optional<Outcome> read_outcome(std::string_view rest) {
  rest = text::trim(rest);
  auto tokens = text::split_ws(rest);
  if (tokens.empty()) return std::nullopt;
  std::string_view value = tokens[0];
  if (value == "-1") {
    if (tokens.size() < 2) return std::nullopt;
    std::string_view err = tokens[1];
    if (err.empty() || err.front() == '(' || err.front() == '<') return std::nullopt;
    return Failure{std::string(err)};
  }
  long long n = 0;
  if (value.starts_with("0x")) {
    if (value.size() == 2 || value.size() > 17) return std::nullopt;
    for (char c : value.substr(2)) {
      int h = hex_value(c);
      if (h < 0) return std::nullopt;
      n = n * 16 + h;
    }
    return Success{n};
  }
  if (!text::parse_ll(value, n)) return std::nullopt;
  return Success{n};
}

// Position of the ")" closing the argument list, i.e. the last ")" followed by
// blanks and "= ".
inline std::size_t find_result(std::string_view s) {
  auto pos = s.rfind("= ");
  while (pos != std::string_view::npos && pos > 0) {
    auto before = s.find_last_not_of(" \t", pos - 1);
    if (before != std::string_view::npos && before < pos - 1 && s[before] == ')') return before;
    pos = s.rfind("= ", pos - 1);
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Parses one trace line, counting anything that does not yield an event.
inline std::optional<TraceEvent> parse_trace_line(std::string_view line, TraceStats& stats) {
  std::string_view s = text::trim(line);
  if (s.empty()) return std::nullopt;

  TraceEvent ev;
  if (s.starts_with("[pid")) {
    auto close = s.find(']');
    if (close == std::string_view::npos) {
      ++stats.skipped;
      return std::nullopt;
    }
    long long pid = 0;
    if (!text::parse_ll(text::trim(s.substr(4, close - 4)), pid)) {
      ++stats.skipped;
      return std::nullopt;
    }
    ev.pid = pid;
    s = text::trim(s.substr(close + 1));
  } else if (!s.empty() && text::is_digit(s.front())) {
    std::size_t i = 0;
    while (i < s.size() && text::is_digit(s[i])) ++i;
    long long pid = 0;
    if (i < s.size() && text::is_space(s[i]) && text::parse_ll(s.substr(0, i), pid)) {
      ev.pid = pid;
      s = text::trim(s.substr(i));
    }
  }

  if (s.starts_with("---") || s.starts_with("+++") || s.starts_with("<...")) {
    ++stats.ignored;
    return std::nullopt;
  }
  if (s.find("<unfinished ...>") != std::string_view::npos) {
    ++stats.ignored;
    return std::nullopt;
  }

  std::size_t name_end = 0;
  while (name_end < s.size() && detail::is_ident_char(s[name_end])) ++name_end;
  if (name_end == 0 || name_end >= s.size() || s[name_end] != '(') {
    ++stats.skipped;
    return std::nullopt;
  }
  ev.syscall = std::string(s.substr(0, name_end));

  // strace pads the result column, so ")" and "=" may be far apart.
  auto eq = detail::find_result(s);
  if (eq == std::string_view::npos || eq < name_end) {
    ++stats.skipped;
    return std::nullopt;
  }
  auto outcome = detail::read_outcome(s.substr(s.find('=', eq) + 1));
  if (!outcome) {
    ++stats.skipped;
    return std::nullopt;
  }

  if (!is_tracked_syscall(ev.syscall)) {
    ++stats.ignored;
    return std::nullopt;
  }

  auto quote = s.find('"', name_end);
  if (quote == std::string_view::npos || quote > eq) {
    ++stats.skipped;
    return std::nullopt;
  }
  auto path = detail::read_quoted(s, quote);
  if (!path) {
    ++stats.skipped;
    return std::nullopt;
  }
  if (path->truncated) {
    ++stats.truncated;
    return std::nullopt;
  }
  if (path->value.empty() || path->value.front() != '/') {
    ++stats.relative;
    return std::nullopt;
  }
  ev.path = std::move(path->value);
  ev.outcome = std::move(*outcome);
  return ev;
}

inline std::optional<TraceEvent> parse_trace_line(std::string_view line) {
  TraceStats unused;
  return parse_trace_line(line, unused);
}

/// Renders an event back into trace syntax, escaping the path the way strace
/// does. parse_trace_line(render_trace_event(e)) == e for every parsed e.
inline std::string render_trace_event(const TraceEvent& ev) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  if (ev.pid) out += "[pid " + std::to_string(*ev.pid) + "] ";
  out += ev.syscall;
  out += "(\"";
  for (unsigned char c : ev.path) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += static_cast<char>(c);
    } else if (c < 0x20 || c >= 0x7f) {
      out += "\\x";
      out += kHex[c >> 4];
      out += kHex[c & 0xf];
    } else {
      out += static_cast<char>(c);
    }
  }
  out += "\") = ";
  if (const auto* ok = std::get_if<Success>(&ev.outcome)) {
    out += std::to_string(ok->value);
  } else {
    out += "-1 " + std::get<Failure>(ev.outcome).errno_name;
  }
  return out;
}

struct FileAccess {
  std::string path;
  Outcome outcome;

  friend bool operator==(const FileAccess&, const FileAccess&) = default;
};

/// Deduplicated file accesses in first-seen order. A path's outcome is
/// Success once any event for it succeeded.
class FileAccessSet {
 public:
  void add(const TraceEvent& ev) {
    auto [it, inserted] = index_.try_emplace(ev.path, accesses_.size());
    if (inserted) {
      accesses_.push_back({ev.path, ev.outcome});
    } else if (succeeded(ev.outcome) && !succeeded(accesses_[it->second].outcome)) {
      accesses_[it->second].outcome = ev.outcome;
    }
  }

  const std::vector<FileAccess>& accesses() const { return accesses_; }
  std::size_t size() const { return accesses_.size(); }
  bool empty() const { return accesses_.empty(); }

  std::vector<std::string> successful_only() const {
    std::vector<std::string> out;
    for (const auto& a : accesses_) {
      if (succeeded(a.outcome)) out.push_back(a.path);
    }
    return out;
  }

  std::size_t source_line_count = 0;
  TraceStats stats;

 private:
  std::vector<FileAccess> accesses_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Lines>
FileAccessSet collect_accesses(const Lines& lines) {
  FileAccessSet set;
  for (const auto& line : lines) {
    ++set.source_line_count;
    if (auto ev = parse_trace_line(line, set.stats)) set.add(*ev);
  }
  return set;
}

inline FileAccessSet collect_accesses_from_text(std::string_view log) {
  return collect_accesses(text::split_lines(log));
}

/// True for `x.so` and `x.so.<n>[.<n>...]`.
inline bool is_shared_object_name(std::string_view name) {
  auto pos = name.find(".so");
  while (pos != std::string_view::npos) {
    if (pos > 0) {
      std::string_view tail = name.substr(pos + 3);
      if (tail.empty()) return true;
      bool ok = true;
      while (ok && !tail.empty()) {
        if (tail.front() != '.') {
          ok = false;
          break;
        }
        tail.remove_prefix(1);
        std::size_t d = 0;
        while (d < tail.size() && text::is_digit(tail[d])) ++d;
        if (d == 0) ok = false;
        tail.remove_prefix(d);
      }
      if (ok) return true;
    }
    pos = name.find(".so", pos + 1);
  }
  return false;
}

inline std::vector<std::string> filter_shared_libraries(const FileAccessSet& set) {
  std::vector<std::string> out;
  for (const auto& a : set.accesses()) {
    if (!succeeded(a.outcome)) continue;
    auto slash = a.path.rfind('/');
    std::string_view name(a.path);
    if (slash != std::string::npos) name.remove_prefix(slash + 1);
    if (is_shared_object_name(name)) out.push_back(a.path);
  }
  return out;
}

}  // namespace mpicont
