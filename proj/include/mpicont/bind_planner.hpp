// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpicont/error.hpp"
#include "mpicont/text.hpp"

namespace mpicont {

/// In-container MPI install prefix of the generated base recipes.
inline constexpr std::string_view kContainerMpiPrefix = "/container/mpi";

inline constexpr std::string_view kBindVar = "SINGULARITY_BIND";
inline constexpr std::string_view kLibraryPathVar = "SINGULARITYENV_LD_LIBRARY_PATH";

struct BindSpec {
  std::string source;
  std::string destination;
  std::string options;  // empty when none

  friend bool operator==(const BindSpec&, const BindSpec&) = default;
};

struct BindPlan {
  std::vector<BindSpec> binds;
  std::vector<std::string> lib_dirs;

  bool empty() const { return binds.empty() && lib_dirs.empty(); }
  friend bool operator==(const BindPlan&, const BindPlan&) = default;
};

/// Things plan_binds left out, for the caller to report.
struct PlanWarnings {
  std::vector<std::string> excluded;  // library paths under/over an exclusion prefix

  bool empty() const { return excluded.empty(); }
};

namespace paths {

/// Lexical normalization without a trailing slash ("/a//b/../c/" -> "/a/c").
inline std::string normalize(std::string_view p) {
  std::string out = std::filesystem::path(std::string(p)).lexically_normal().generic_string();
  while (out.size() > 1 && out.back() == '/') out.pop_back();
  return out;
}

inline bool is_absolute(std::string_view p) { return !p.empty() && p.front() == '/'; }

/// Component-wise prefix test on normalized paths: "/a/b" is under "/a" and
/// under itself, but not under "/a/bc".
inline bool is_under(std::string_view path, std::string_view prefix) {
  if (prefix == "/") return is_absolute(path);
  if (!path.starts_with(prefix)) return false;
  return path.size() == prefix.size() || path[prefix.size()] == '/';
}

inline std::string parent(std::string_view p) {
  auto slash = p.rfind('/');
  if (slash == std::string_view::npos || slash == 0) return "/";
  return std::string(p.substr(0, slash));
}

/// Number of components: "/" -> 0, "/usr" -> 1, "/usr/lib64" -> 2.
inline std::size_t depth(std::string_view p) {
  return static_cast<std::size_t>(std::count(p.begin(), p.end(), '/')) - (p == "/" ? 1 : 0);
}

}  // namespace paths

namespace detail {

// Keeps the shallowest of any nested sources, first occurrence wins.
inline std::vector<BindSpec> collapse(const std::vector<BindSpec>& binds) {
  std::vector<BindSpec> out;
  for (const auto& b : binds) {
    bool covered = false;
    for (const auto& kept : out) {
      if (paths::is_under(b.source, kept.source)) {
        covered = true;
        break;
      }
    }
    if (covered) continue;
    auto first = std::find_if(out.begin(), out.end(),
                              [&](const BindSpec& kept) { return paths::is_under(kept.source, b.source); });
    if (first == out.end()) {
      out.push_back(b);
      continue;
    }
    // The ancestor takes the place of the first descendant it absorbs.
    *first = b;
    out.erase(std::remove_if(std::next(first), out.end(),
                             [&](const BindSpec& kept) { return paths::is_under(kept.source, b.source); }),
              out.end());
  }
  return out;
}

inline void push_unique(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

}  // namespace detail

/// Builds a directory-level bind plan for a list of host libraries.
///
/// Each library's parent directory is bound at the same path inside the
/// container and listed once in lib_dirs. Directories nested inside another
/// bound directory are absorbed by it. A library sitting directly in a
/// top-level directory ("/lib64/ld-linux-x86-64.so.2") is bound as a single
/// file so that "/lib64", "/usr" or "/" are never bound wholesale; such
/// directories are already on the loader's default path and do not enter
/// lib_dirs.
///
/// A library whose destination lies under an exclusion prefix, or whose bind
/// would cover an exclusion prefix, is dropped and reported in `warnings`.
inline BindPlan plan_binds(const std::vector<std::string>& lib_paths,
                           const std::vector<std::string>& exclusions,
                           PlanWarnings* warnings = nullptr) {
  for (const auto& p : lib_paths) {
    if (!paths::is_absolute(p)) throw ContractViolation("library path is not absolute: " + p);
  }
  std::vector<std::string> excl;
  for (const auto& e : exclusions) {
    if (!paths::is_absolute(e)) throw ContractViolation("exclusion prefix is not absolute: " + e);
    excl.push_back(paths::normalize(e));
  }

  std::vector<BindSpec> candidates;
  std::vector<std::string> dirs;
  for (const auto& raw : lib_paths) {
    std::string lib = paths::normalize(raw);
    std::string dir = paths::parent(lib);
    bool file_bind = paths::depth(dir) < 2;
    const std::string& source = file_bind ? lib : dir;

    bool dropped = std::any_of(excl.begin(), excl.end(), [&](const std::string& e) {
      return paths::is_under(source, e) || paths::is_under(e, source);
    });
    if (dropped) {
      if (warnings) warnings->excluded.push_back(lib);
      continue;
    }
    candidates.push_back({source, source, {}});
    if (!file_bind) detail::push_unique(dirs, dir);
  }

  BindPlan plan;
  plan.binds = detail::collapse(candidates);
  plan.lib_dirs = std::move(dirs);
  return plan;
}

inline BindPlan plan_binds(const std::vector<std::string>& lib_paths) {
  return plan_binds(lib_paths, {std::string(kContainerMpiPrefix)});
}

/// b's search directories go first; binds are unioned (b's first) and
/// re-collapsed.
inline BindPlan merge_plans(const BindPlan& a, const BindPlan& b) {
  BindPlan out;
  std::vector<BindSpec> all = b.binds;
  all.insert(all.end(), a.binds.begin(), a.binds.end());
  out.binds = detail::collapse(all);
  for (const auto& d : b.lib_dirs) detail::push_unique(out.lib_dirs, d);
  for (const auto& d : a.lib_dirs) detail::push_unique(out.lib_dirs, d);
  return out;
}

/// Single-directory plan, e.g. for a translation library directory.
inline BindPlan directory_plan(const std::string& dir) {
  if (!paths::is_absolute(dir)) throw ContractViolation("directory is not absolute: " + dir);
  std::string d = paths::normalize(dir);
  return BindPlan{{{d, d, {}}}, {d}};
}

inline std::string render_bind(const BindSpec& b) {
  std::string out = b.source;
  if (b.destination != b.source || !b.options.empty()) out += ":" + b.destination;
  if (!b.options.empty()) out += ":" + b.options;
  return out;
}

/// Environment for the container runtime. Host directories precede the
/// container's own search path, which is referenced literally as
/// `$LD_LIBRARY_PATH` for the runtime to expand inside the container.
inline std::map<std::string, std::string> render_env(const BindPlan& plan) {
  std::map<std::string, std::string> env;
  if (!plan.binds.empty()) {
    std::vector<std::string> entries;
    for (const auto& b : plan.binds) entries.push_back(render_bind(b));
    env[std::string(kBindVar)] = text::join(entries, ",");
  }
  if (!plan.lib_dirs.empty()) {
    env[std::string(kLibraryPathVar)] = text::join(plan.lib_dirs, ":") + ":$LD_LIBRARY_PATH";
  }
  return env;
}

/// Checks the BindPlan invariants; returns a description of the first
/// violation found.
inline std::optional<std::string> find_plan_violation(const BindPlan& plan) {
  for (const auto& b : plan.binds) {
    if (!paths::is_absolute(b.source) || !paths::is_absolute(b.destination)) {
      return "bind is not absolute: " + render_bind(b);
    }
  }
  for (std::size_t i = 0; i < plan.binds.size(); ++i) {
    for (std::size_t j = 0; j < plan.binds.size(); ++j) {
      if (i != j && paths::is_under(plan.binds[j].source, plan.binds[i].source)) {
        return "nested binds: " + plan.binds[i].source + " and " + plan.binds[j].source;
      }
    }
  }
  for (std::size_t i = 0; i < plan.lib_dirs.size(); ++i) {
    const auto& d = plan.lib_dirs[i];
    if (std::find(plan.lib_dirs.begin(), plan.lib_dirs.begin() + static_cast<std::ptrdiff_t>(i), d) !=
        plan.lib_dirs.begin() + static_cast<std::ptrdiff_t>(i)) {
      return "duplicate library directory: " + d;
    }
    bool covered = std::any_of(plan.binds.begin(), plan.binds.end(),
                               [&](const BindSpec& b) { return paths::is_under(d, b.destination); });
    if (!covered) return "library directory not bound: " + d;
  }
  return std::nullopt;
}

}  // namespace mpicont
