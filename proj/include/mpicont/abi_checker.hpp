// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "mpicont/text.hpp"

namespace mpicont {

/// libtool-style version triple current:revision:age.
struct AbiTriple {
  int current = 0;
  int revision = 0;
  int age = 0;

  /// Major number of the resulting shared-object name.
  int soname_major() const { return current - age; }
  std::string to_string() const {
    return std::to_string(current) + ":" + std::to_string(revision) + ":" + std::to_string(age);
  }
  friend bool operator==(const AbiTriple&, const AbiTriple&) = default;
};

struct CrayMpich {
  std::string release;
  std::string anl_base;
  friend bool operator==(const CrayMpich&, const CrayMpich&) = default;
};

struct Mpich {
  std::string version;
  std::optional<AbiTriple> abi;
  std::string device;
  friend bool operator==(const Mpich&, const Mpich&) = default;
};

struct OpenMpi {
  int major = 0;
  int minor = 0;
  int patch = 0;
  std::string version_string() const {
    return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
  }
  friend bool operator==(const OpenMpi&, const OpenMpi&) = default;
};

struct UnknownMpi {
  std::string raw;
  friend bool operator==(const UnknownMpi&, const UnknownMpi&) = default;
};

using MpiFlavor = std::variant<CrayMpich, Mpich, OpenMpi, UnknownMpi>;

/// soname major of the host Cray MPICH C library (libmpi_cray.so.12).
inline constexpr int kCrayMpichSonameMajor = 12;

struct DirectBind {
  friend bool operator==(const DirectBind&, const DirectBind&) = default;
};

struct RequiresTranslation {
  std::string source_tag;
  std::string target_tag;
  bool fortran_supported = false;
  friend bool operator==(const RequiresTranslation&, const RequiresTranslation&) = default;
};

struct Incompatible {
  std::string reason;
  friend bool operator==(const Incompatible&, const Incompatible&) = default;
};

using CompatDecision = std::variant<DirectBind, RequiresTranslation, Incompatible>;

namespace detail {

// Returns the trimmed remainder of the first line that contains `key`
// immediately followed by optional whitespace, or nothing.
inline std::optional<std::string_view> field_after(std::string_view banner, std::string_view key) {
  for (auto line : text::split_lines(banner)) {
    auto pos = line.find(key);
    if (pos != std::string_view::npos) return text::trim(line.substr(pos + key.size()));
  }
  return std::nullopt;
}

inline std::optional<AbiTriple> parse_abi_triple(std::string_view s) {
  s = text::trim(s);
  auto tok = text::split_ws(s);
  if (tok.empty()) return std::nullopt;
  std::string_view t = tok[0];
  long long parts[3];
  for (int i = 0; i < 3; ++i) {
    auto colon = t.find(':');
    std::string_view piece = i < 2 ? t.substr(0, colon) : t;
    if ((i < 2 && colon == std::string_view::npos) || !text::parse_ll(piece, parts[i]) ||
        parts[i] > 1'000'000) {
      return std::nullopt;
    }
    if (i < 2) t.remove_prefix(colon + 1);
  }
  return AbiTriple{static_cast<int>(parts[0]), static_cast<int>(parts[1]), static_cast<int>(parts[2])};
}

inline std::optional<CrayMpich> match_cray(std::string_view banner) {
  static constexpr std::string_view kKey = "CRAY MPICH version ";
  static constexpr std::string_view kBase = "(ANL base ";
  for (auto line : text::split_lines(banner)) {
    auto pos = line.find(kKey);
    if (pos == std::string_view::npos) continue;
    auto rest = line.substr(pos + kKey.size());
    auto tok = text::split_ws(rest);
    if (tok.empty()) continue;
    auto base = rest.find(kBase);
    if (base == std::string_view::npos) continue;
    auto close = rest.find(')', base);
    if (close == std::string_view::npos) continue;
    auto anl = text::trim(rest.substr(base + kBase.size(), close - base - kBase.size()));
    if (anl.empty() || tok[0].starts_with("(")) continue;
    return CrayMpich{std::string(tok[0]), std::string(anl)};
  }
  return std::nullopt;
}

inline std::optional<Mpich> match_mpich(std::string_view banner) {
  auto version = field_after(banner, "MPICH Version:");
  if (!version) return std::nullopt;
  auto tok = text::split_ws(*version);
  if (tok.empty()) return std::nullopt;
  Mpich m;
  m.version = std::string(tok[0]);
  if (auto abi = field_after(banner, "MPICH ABI:")) m.abi = parse_abi_triple(*abi);
  if (auto dev = field_after(banner, "MPICH Device:")) {
    auto dtok = text::split_ws(*dev);
    if (!dtok.empty()) m.device = std::string(dtok[0]);
  }
  return m;
}

inline std::optional<OpenMpi> match_openmpi(std::string_view banner) {
  static constexpr std::string_view kKey = "Open MPI v";
  auto pos = banner.find(kKey);
  while (pos != std::string_view::npos) {
    std::string_view rest = banner.substr(pos + kKey.size());
    int nums[3] = {0, 0, 0};
    int count = 0;
    while (count < 3) {
      std::size_t d = 0;
      while (d < rest.size() && d < 6 && text::is_digit(rest[d])) ++d;
      if (d == 0) break;
      long long v = 0;
      text::parse_ll(rest.substr(0, d), v);
      nums[count++] = static_cast<int>(v);
      rest.remove_prefix(d);
      if (count < 3 && rest.size() > 1 && rest[0] == '.' && text::is_digit(rest[1])) {
        rest.remove_prefix(1);
      } else {
        break;
      }
    }
    if (count > 0) return OpenMpi{nums[0], nums[1], nums[2]};
    pos = banner.find(kKey, pos + 1);
  }
  return std::nullopt;
}

}  // namespace detail

/// Identifies the MPI library from its MPI_Get_library_version text.
/// Recognizers are tried in order Cray MPICH, MPICH, Open MPI.
inline MpiFlavor classify_version_banner(std::string_view banner) {
  if (auto c = detail::match_cray(banner)) return *c;
  if (auto m = detail::match_mpich(banner)) return *m;
  if (auto o = detail::match_openmpi(banner)) return *o;
  return UnknownMpi{std::string(banner)};
}

/// "libmpi.so.12" / "libmpi.so.12.0.0" / "libmpi_cray.so.12" -> 12. Accepts a
/// full path; only the last component is inspected.
inline std::optional<int> parse_soname(std::string_view filename) {
  auto slash = filename.rfind('/');
  if (slash != std::string_view::npos) filename.remove_prefix(slash + 1);
  auto so = filename.find(".so.");
  if (so == std::string_view::npos) return std::nullopt;
  std::string_view stem = filename.substr(0, so);
  if (stem != "libmpi" && !stem.starts_with("libmpi_")) return std::nullopt;
  std::string_view rest = filename.substr(so + 4);
  std::size_t d = 0;
  while (d < rest.size() && text::is_digit(rest[d])) ++d;
  if (d == 0 || d > 6 || (d < rest.size() && rest[d] != '.')) return std::nullopt;
  long long v = 0;
  text::parse_ll(rest.substr(0, d), v);
  return static_cast<int>(v);
}

/// Can a container built against `container` run on a host providing `host`?
inline CompatDecision decide_compatibility(const MpiFlavor& container, const MpiFlavor& host,
                                           bool app_uses_fortran) {
  if (!std::holds_alternative<CrayMpich>(host)) {
    return Incompatible{"unsupported host MPI: only HPE Cray MPICH hosts are handled"};
  }
  if (std::holds_alternative<CrayMpich>(container)) return DirectBind{};
  if (const auto* m = std::get_if<Mpich>(&container)) {
    if (!m->abi) return Incompatible{"MPICH " + m->version + " does not report its ABI version"};
    if (m->abi->soname_major() != kCrayMpichSonameMajor) {
      return Incompatible{"MPICH ABI " + m->abi->to_string() + " gives libmpi.so." +
                          std::to_string(m->abi->soname_major()) + ", host needs libmpi.so." +
                          std::to_string(kCrayMpichSonameMajor)};
    }
    return DirectBind{};
  }
  if (const auto* o = std::get_if<OpenMpi>(&container)) {
    if (o->major != 4) {
      return Incompatible{"Open MPI " + o->version_string() +
                          " has no ABI translation; only Open MPI 4.x is translated"};
    }
    if (app_uses_fortran) {
      return Incompatible{"ABI translation of applications written in Fortran is not supported"};
    }
    return RequiresTranslation{"ompi.40", "cmpich." + std::to_string(kCrayMpichSonameMajor), false};
  }
  return Incompatible{"unrecognized container MPI"};
}

inline std::string describe(const MpiFlavor& f) {
  struct Visitor {
    std::string operator()(const CrayMpich& c) const {
      return "Cray MPICH " + c.release + " (ANL base " + c.anl_base + ")";
    }
    std::string operator()(const Mpich& m) const {
      std::string s = "MPICH " + m.version;
      if (m.abi) s += " (ABI " + m.abi->to_string() + ")";
      if (!m.device.empty()) s += " device " + m.device;
      return s;
    }
    std::string operator()(const OpenMpi& o) const { return "Open MPI " + o.version_string(); }
    std::string operator()(const UnknownMpi&) const { return "unknown MPI"; }
  };
  return std::visit(Visitor{}, f);
}

inline std::string describe(const CompatDecision& d) {
  struct Visitor {
    std::string operator()(const DirectBind&) const { return "DirectBind"; }
    std::string operator()(const RequiresTranslation& t) const {
      return "RequiresTranslation (mpixlate -s " + t.source_tag + " -t " + t.target_tag + ")";
    }
    std::string operator()(const Incompatible& i) const { return "Incompatible: " + i.reason; }
  };
  return std::visit(Visitor{}, d);
}

}  // namespace mpicont
