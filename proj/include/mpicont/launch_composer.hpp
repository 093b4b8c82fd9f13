// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mpicont/abi_checker.hpp"
#include "mpicont/bind_planner.hpp"
#include "mpicont/error.hpp"
#include "mpicont/text.hpp"

namespace mpicont {

/// Value of CHECK_MPI handed to the MPI_Init interposition shim.
enum class CheckMode { Off = 0, On = 1, Verbose = 2 };

inline constexpr std::string_view kCheckVar = "CHECK_MPI";

inline std::string_view check_value(CheckMode m) {
  switch (m) {
    case CheckMode::Off: return "0";
    case CheckMode::On: return "1";
    case CheckMode::Verbose: return "2";
  }
  return "0";
}

enum class RuntimeVerb { Exec, Run };

inline std::string_view verb_name(RuntimeVerb v) { return v == RuntimeVerb::Run ? "run" : "exec"; }

struct SchedulerArgs {
  int ntasks = 1;
  std::optional<int> ntasks_per_node;
  std::optional<std::string> account;
  std::optional<std::string> partition;
};

struct TranslationWrapper {
  std::string source_tag;
  std::string target_tag;
};

struct LaunchPlan {
  CheckMode check_mode = CheckMode::Off;
  std::map<std::string, std::string> env;
  std::vector<std::string> modules;
  SchedulerArgs scheduler;
  std::optional<TranslationWrapper> wrapper;
  RuntimeVerb verb = RuntimeVerb::Exec;
  std::string image;
  std::vector<std::string> inner_command;
};

/// Environment modules to load, in order, before launching.
inline std::vector<std::string> required_modules(const CompatDecision& decision) {
  if (std::holds_alternative<DirectBind>(decision)) return {"singularity-bindings"};
  if (std::holds_alternative<RequiresTranslation>(decision)) {
    return {"singularity-bindings", "cray-mpich", "cray-mpixlate"};
  }
  throw ContractViolation("no launch is possible for an Incompatible decision: " +
                          std::get<Incompatible>(decision).reason);
}

/// Launch plan skeleton for a compatibility decision: modules, wrapper and
/// runtime verb are fixed by the decision.
inline LaunchPlan plan_for(const CompatDecision& decision) {
  LaunchPlan p;
  p.modules = required_modules(decision);
  if (const auto* t = std::get_if<RequiresTranslation>(&decision)) {
    p.wrapper = TranslationWrapper{t->source_tag, t->target_tag};
    p.verb = RuntimeVerb::Run;
  }
  return p;
}

inline void validate(const LaunchPlan& p) {
  if (p.image.empty()) throw ContractViolation("launch plan has no image");
  if (p.inner_command.empty()) throw ContractViolation("launch plan has no command");
  if (p.scheduler.ntasks < 1) throw ContractViolation("ntasks must be at least 1");
  if (p.scheduler.ntasks_per_node && *p.scheduler.ntasks_per_node < 1) {
    throw ContractViolation("ntasks-per-node must be at least 1");
  }
  if (p.wrapper) {
    if (p.wrapper->source_tag.empty() || p.wrapper->target_tag.empty()) {
      throw ContractViolation("translation wrapper tags must not be empty");
    }
    if (p.verb != RuntimeVerb::Run) {
      throw ContractViolation("a translated launch must use `singularity run` so the runscript sets the preload");
    }
  }
  for (const auto& [k, v] : p.env) {
    if (k == kCheckVar) throw ContractViolation("CHECK_MPI is set through check_mode, not env");
    if (k.empty() || text::is_digit(k.front())) throw ContractViolation("invalid variable name: " + k);
    for (char c : k) {
      bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || text::is_digit(c) || c == '_';
      if (!ok) throw ContractViolation("invalid variable name: " + k);
    }
  }
}

/// One shell line:
///   [CHECK_MPI=n] [VAR=value ...] srun -n N [--ntasks-per-node=M] [-A acct] [-p part]
///       [mpixlate -s SRC -t TGT] singularity exec|run IMAGE CMD...
inline std::string compose(const LaunchPlan& p) {
  validate(p);
  std::vector<std::string> words;
  if (p.check_mode != CheckMode::Off) words.push_back(std::string(kCheckVar) + "=" + std::string(check_value(p.check_mode)));
  for (const auto& [k, v] : p.env) words.push_back(k + "=" + text::shell_quote(v));
  words.push_back("srun");
  words.push_back("-n");
  words.push_back(std::to_string(p.scheduler.ntasks));
  if (p.scheduler.ntasks_per_node) {
    words.push_back("--ntasks-per-node=" + std::to_string(*p.scheduler.ntasks_per_node));
  }
  if (p.scheduler.account) {
    words.push_back("-A");
    words.push_back(text::shell_quote(*p.scheduler.account));
  }
  if (p.scheduler.partition) {
    words.push_back("-p");
    words.push_back(text::shell_quote(*p.scheduler.partition));
  }
  if (p.wrapper) {
    words.push_back("mpixlate");
    words.push_back("-s");
    words.push_back(text::shell_quote(p.wrapper->source_tag));
    words.push_back("-t");
    words.push_back(text::shell_quote(p.wrapper->target_tag));
  }
  words.push_back("singularity");
  words.push_back(std::string(verb_name(p.verb)));
  words.push_back(text::shell_quote(p.image));
  for (const auto& arg : p.inner_command) words.push_back(text::shell_quote(arg));
  return text::join(words, " ");
}

/// `module load a b c`, or empty when there is nothing to load.
inline std::string module_preamble(const std::vector<std::string>& modules) {
  if (modules.empty()) return {};
  std::vector<std::string> words{"module", "load"};
  for (const auto& m : modules) words.push_back(text::shell_quote(m));
  return text::join(words, " ");
}

/// The translation library directory is searched first inside the container.
inline BindPlan translation_env_adjustment(const BindPlan& base, const std::string& mpixlate_lib_dir) {
  return merge_plans(base, directory_plan(mpixlate_lib_dir));
}

}  // namespace mpicont
