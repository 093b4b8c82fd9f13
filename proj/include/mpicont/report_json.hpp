// SPDX-License-Identifier: Apache-2.0

// JSON documents for CI consumers. Relative differences that are infinite
// (zero reference, nonzero candidate) are written as null.

#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>  // nlohmann/json, vendored

#include "mpicont/abi_checker.hpp"
#include "mpicont/bind_planner.hpp"
#include "mpicont/decimal.hpp"
#include "mpicont/run_verifier.hpp"

namespace mpicont {

namespace detail {

inline nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline double finite_or_inf(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline Decimal decimal_from_json(const nlohmann::json& j) {
  auto d = Decimal::parse(j.get<std::string>());
  if (!d) throw nlohmann::json::other_error::create(501, "not a decimal: " + j.dump(), &j);
  return *d;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const SizeComparison& s) {
  j = {{"size", s.size},
       {"reference", s.reference.to_string()},
       {"candidate", s.candidate.to_string()},
       {"rel_diff", detail::finite_or_null(s.rel_diff)}};
}

inline void from_json(const nlohmann::json& j, SizeComparison& s) {
  s.size = j.at("size").get<long long>();
  s.reference = detail::decimal_from_json(j.at("reference"));
  s.candidate = detail::decimal_from_json(j.at("candidate"));
  s.rel_diff = detail::finite_or_inf(j.at("rel_diff"));
}

inline void to_json(nlohmann::json& j, const ComparisonReport& r) {
  j = {{"benchmark", r.benchmark_name},
       {"tolerance", r.tolerance},
       {"per_size", r.per_size},
       {"max_rel_diff", detail::finite_or_null(r.max_rel_diff)},
       {"max_rel_diff_size", r.max_rel_diff_size ? nlohmann::json(*r.max_rel_diff_size) : nlohmann::json(nullptr)},
       {"missing_sizes", r.missing_sizes},
       {"verdict", r.pass ? "pass" : "fail"}};
}

inline void from_json(const nlohmann::json& j, ComparisonReport& r) {
  r.benchmark_name = j.at("benchmark").get<std::string>();
  r.tolerance = j.at("tolerance").get<double>();
  r.per_size = j.at("per_size").get<std::vector<SizeComparison>>();
  r.max_rel_diff = detail::finite_or_inf(j.at("max_rel_diff"));
  const auto& at = j.at("max_rel_diff_size");
  r.max_rel_diff_size = at.is_null() ? std::nullopt : std::optional<long long>(at.get<long long>());
  r.missing_sizes = j.at("missing_sizes").get<std::vector<long long>>();
  r.pass = j.at("verdict").get<std::string>() == "pass";
}

inline nlohmann::json flavor_json(const MpiFlavor& f) {
  struct Visitor {
    nlohmann::json operator()(const CrayMpich& c) const {
      return {{"flavor", "CrayMpich"}, {"release", c.release}, {"anl_base", c.anl_base}};
    }
    nlohmann::json operator()(const Mpich& m) const {
      return {{"flavor", "Mpich"},
              {"version", m.version},
              {"abi", m.abi ? nlohmann::json(m.abi->to_string()) : nlohmann::json(nullptr)},
              {"device", m.device}};
    }
    nlohmann::json operator()(const OpenMpi& o) const {
      return {{"flavor", "OpenMpi"}, {"version", o.version_string()}};
    }
    nlohmann::json operator()(const UnknownMpi&) const { return {{"flavor", "Unknown"}}; }
  };
  return std::visit(Visitor{}, f);
}

inline nlohmann::json decision_json(const CompatDecision& d) {
  struct Visitor {
    nlohmann::json operator()(const DirectBind&) const { return {{"decision", "DirectBind"}}; }
    nlohmann::json operator()(const RequiresTranslation& t) const {
      return {{"decision", "RequiresTranslation"},
              {"source_tag", t.source_tag},
              {"target_tag", t.target_tag},
              {"fortran_supported", t.fortran_supported}};
    }
    nlohmann::json operator()(const Incompatible& i) const {
      return {{"decision", "Incompatible"}, {"reason", i.reason}};
    }
  };
  return std::visit(Visitor{}, d);
}

inline nlohmann::json plan_json(const BindPlan& plan, const PlanWarnings& warnings) {
  nlohmann::json binds = nlohmann::json::array();
  for (const auto& b : plan.binds) {
    binds.push_back({{"source", b.source}, {"destination", b.destination}, {"options", b.options}});
  }
  return {{"binds", binds},
          {"lib_dirs", plan.lib_dirs},
          {"env", render_env(plan)},
          {"excluded", warnings.excluded}};
}

}  // namespace mpicont
