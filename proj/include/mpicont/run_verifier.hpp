// SPDX-License-Identifier: Apache-2.0

// Judging run output: the MPI test program's identity blocks, the signature of
// an MPI launched as N independent singletons, and OSU benchmark tables.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mpicont/abi_checker.hpp"
#include "mpicont/decimal.hpp"
#include "mpicont/error.hpp"
#include "mpicont/text.hpp"

namespace mpicont {

struct MpitestBlock {
  int nranks = 0;
  int rank_id = 0;
  MpiFlavor flavor;
  friend bool operator==(const MpitestBlock&, const MpitestBlock&) = default;
};

struct MpitestReport {
  std::vector<MpitestBlock> blocks;
  std::string raw;
};

namespace detail {

// "# ranks = N (rank id = R)" with N >= 1, R >= 0.
inline std::optional<std::pair<int, int>> match_block_header(std::string_view line) {
  static constexpr std::string_view kHead = "# ranks = ";
  static constexpr std::string_view kMid = " (rank id = ";
  line = text::trim(line);
  if (!line.starts_with(kHead) || !line.ends_with(")")) return std::nullopt;
  line.remove_prefix(kHead.size());
  line.remove_suffix(1);
  auto mid = line.find(kMid);
  if (mid == std::string_view::npos) return std::nullopt;
  long long n = 0, r = 0;
  if (!text::parse_ll(line.substr(0, mid), n) || !text::parse_ll(line.substr(mid + kMid.size()), r)) {
    return std::nullopt;
  }
  if (n < 1 || n > std::numeric_limits<int>::max() || r > std::numeric_limits<int>::max()) {
    return std::nullopt;
  }
  return std::pair<int, int>{static_cast<int>(n), static_cast<int>(r)};
}

}  // namespace detail

inline MpitestReport parse_mpitest_output(std::string_view output) {
  MpitestReport report;
  report.raw = std::string(output);

  std::optional<std::pair<int, int>> open;
  std::string banner;
  auto flush = [&] {
    if (!open) return;
    report.blocks.push_back({open->first, open->second, classify_version_banner(banner)});
    banner.clear();
  };
  for (auto line : text::split_lines(output)) {
    if (auto header = detail::match_block_header(line)) {
      flush();
      open = header;
      continue;
    }
    if (open && !text::trim(line).empty()) {
      banner += line;
      banner += '\n';
    }
  }
  flush();
  return report;
}

struct Healthy {
  friend bool operator==(const Healthy&, const Healthy&) = default;
};

struct DuplicateInstances {
  std::size_t found_blocks = 0;
  int expected = 0;
  friend bool operator==(const DuplicateInstances&, const DuplicateInstances&) = default;
};

using InstanceVerdict = std::variant<Healthy, DuplicateInstances>;

/// A correctly launched job prints exactly one block (from rank 0) reporting
/// the full world size. N singleton launches print N blocks of size 1.
inline InstanceVerdict detect_duplicate_instances(const MpitestReport& report, int expected_ntasks) {
  if (expected_ntasks < 1) throw ContractViolation("expected task count must be at least 1");
  bool wrong_size = std::any_of(report.blocks.begin(), report.blocks.end(),
                                [&](const MpitestBlock& b) { return b.nranks != expected_ntasks; });
  if (report.blocks.size() > 1 || wrong_size) {
    return DuplicateInstances{report.blocks.size(), expected_ntasks};
  }
  return Healthy{};
}

enum class MetricKind { Bandwidth, Latency, Other };

struct OsuRow {
  long long size = 0;
  Decimal value;
  friend bool operator==(const OsuRow&, const OsuRow&) = default;
};

struct OsuResult {
  std::string benchmark_name;  // "OSU MPI Bandwidth Test"
  std::string version;         // "v7.4", empty when not printed
  std::string datatype;        // "MPI_CHAR"
  std::string metric;          // "Bandwidth"
  std::string unit;            // "MB/s"
  MetricKind kind = MetricKind::Other;
  std::vector<OsuRow> rows;
  std::size_t skipped_lines = 0;
};

namespace detail {

inline void parse_column_header(std::string_view rest, OsuResult& r) {
  // rest is what follows "Size", e.g. "Bandwidth (MB/s)" or "Avg Latency(us)".
  rest = text::trim(rest);
  auto open = rest.rfind('(');
  auto close = rest.rfind(')');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    r.metric = std::string(text::trim(rest.substr(0, open)));
    r.unit = std::string(rest.substr(open + 1, close - open - 1));
  } else {
    r.metric = std::string(rest);
    r.unit = std::string(rest);
  }
  if (r.metric.find("Bandwidth") != std::string::npos) {
    r.kind = MetricKind::Bandwidth;
  } else if (r.metric.find("Latency") != std::string::npos) {
    r.kind = MetricKind::Latency;
  } else {
    r.kind = MetricKind::Other;
  }
}

}  // namespace detail

/// Parses an OSU micro-benchmark table. Lines that are neither `#` headers nor
/// two-column numeric rows with increasing sizes are skipped and counted.
/// Throws MalformedInput when no data row survives.
inline OsuResult parse_osu_output(std::string_view output) {
  OsuResult r;
  for (auto raw : text::split_lines(output)) {
    auto line = text::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = text::trim(line.substr(1));
      if (body.starts_with("OSU ")) {
        auto tok = text::split_ws(body);
        if (!tok.empty() && tok.back().size() > 1 && tok.back().front() == 'v' &&
            text::is_digit(tok.back()[1])) {
          r.version = std::string(tok.back());
          body = text::trim(body.substr(0, static_cast<std::size_t>(tok.back().data() - body.data())));
        }
        r.benchmark_name = std::string(body);
      } else if (body.starts_with("Datatype:")) {
        auto dt = text::trim(body.substr(9));
        if (dt.ends_with(".")) dt.remove_suffix(1);
        r.datatype = std::string(dt);
      } else if (body.starts_with("Size")) {
        detail::parse_column_header(body.substr(4), r);
      }
      continue;
    }
    auto tok = text::split_ws(line);
    long long size = 0;
    std::optional<Decimal> value;
    if (tok.size() == 2 && text::parse_ll(tok[0], size) && (value = Decimal::parse(tok[1])) &&
        (r.rows.empty() || size > r.rows.back().size)) {
      r.rows.push_back({size, *value});
    } else {
      ++r.skipped_lines;
    }
  }
  if (r.rows.empty()) throw MalformedInput("no benchmark data rows found");
  return r;
}

/// Plain table in OSU layout; parse_osu_output(render_osu_table(r)) gives r
/// back for any well-formed result.
inline std::string render_osu_table(const OsuResult& r) {
  std::string out;
  std::string name = r.benchmark_name;
  if (!r.version.empty()) name += " " + r.version;
  out += "# " + name + "\n";
  if (!r.datatype.empty()) out += "# Datatype: " + r.datatype + ".\n";
  std::string column = r.metric == r.unit ? r.metric : r.metric + " (" + r.unit + ")";
  out += "# Size      " + column + "\n";
  for (const auto& row : r.rows) {
    std::string size = std::to_string(row.size);
    std::string value = row.value.to_string();
    std::size_t width = size.size() + value.size() < 28 ? 28 - size.size() - value.size() : 1;
    out += size + std::string(width, ' ') + value + "\n";
  }
  return out;
}

inline constexpr double kDefaultRelTolerance = 0.025;

struct SizeComparison {
  long long size = 0;
  Decimal reference;
  Decimal candidate;
  double rel_diff = 0.0;  // +inf when the reference is zero and the candidate is not
};

struct ComparisonReport {
  std::string benchmark_name;
  double tolerance = kDefaultRelTolerance;
  std::vector<SizeComparison> per_size;
  double max_rel_diff = 0.0;
  std::optional<long long> max_rel_diff_size;
  std::vector<long long> missing_sizes;
  bool pass = false;
};

/// Pairs rows by message size and judges |cand - ref| / ref against rel_tol.
inline ComparisonReport compare_results(const OsuResult& reference, const OsuResult& candidate,
                                        double rel_tol) {
  if (!(rel_tol > 0.0) || !std::isfinite(rel_tol)) {
    throw ContractViolation("relative tolerance must be a positive number");
  }
  if (reference.benchmark_name != candidate.benchmark_name) {
    throw ContractViolation("benchmark mismatch: '" + reference.benchmark_name + "' vs '" +
                            candidate.benchmark_name + "'");
  }
  ComparisonReport rep;
  rep.benchmark_name = reference.benchmark_name;
  rep.tolerance = rel_tol;
  for (const auto& ref : reference.rows) {
    auto it = std::find_if(candidate.rows.begin(), candidate.rows.end(),
                           [&](const OsuRow& c) { return c.size == ref.size; });
    if (it == candidate.rows.end()) {
      rep.missing_sizes.push_back(ref.size);
      continue;
    }
    double diff = 0.0;
    if (auto d = Decimal::relative_difference(ref.value, it->value)) {
      diff = *d;
    } else if (!it->value.is_zero()) {
      diff = std::numeric_limits<double>::infinity();
    }
    rep.per_size.push_back({ref.size, ref.value, it->value, diff});
    if (!rep.max_rel_diff_size || diff > rep.max_rel_diff) {
      rep.max_rel_diff = diff;
      rep.max_rel_diff_size = ref.size;
    }
  }
  rep.pass = rep.max_rel_diff <= rel_tol && rep.missing_sizes.empty();
  return rep;
}

}  // namespace mpicont
