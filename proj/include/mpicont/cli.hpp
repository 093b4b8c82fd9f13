// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Every subcommand is dry-run unless --execute is
// given. Exit codes: 0 success, 1 verification failure, 2 usage or input
// error.

#pragma once

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpicont/abi_checker.hpp"
#include "mpicont/bind_planner.hpp"
#include "mpicont/error.hpp"
#include "mpicont/launch_composer.hpp"
#include "mpicont/process.hpp"
#include "mpicont/recipe_generator.hpp"
#include "mpicont/report_json.hpp"
#include "mpicont/run_verifier.hpp"
#include "mpicont/trace_parser.hpp"

namespace mpicont::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kUsage = 2 };

/// Banner assumed for the host when check-abi is not given --host-banner.
inline constexpr std::string_view kDefaultHostBanner =
    "MPI VERSION    : CRAY MPICH version 8.1.27.26 (ANL base 3.4a2)\n";

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw InputError("error reading " + path);
  return ss.str();
}

struct Globals {
  std::string output;
  bool json = false;
  bool execute = false;
  double tolerance = kDefaultRelTolerance;
};

struct GenDefArgs {
  std::string tmpl;
  std::string mpich_version = MpichBaseOptions{}.mpich_version;
  std::string prefix = MpichBaseOptions{}.install_prefix;
  std::string from{kDefaultBaseImage};
  std::string base;
  bool runscript_preload = false;
  std::string osu_version = AppOptions{}.osu_version;
  std::string image;  // build target for --execute
};

struct TraceArgs {
  std::string log;
  std::vector<std::string> exclude;
};

struct AbiArgs {
  std::string banner;
  std::string host_banner;
  bool fortran = false;
};

struct LaunchArgs {
  int ntasks = 0;
  std::optional<int> per_node;
  std::string account;
  std::string partition;
  std::string check = "0";
  std::string source_tag;
  std::string target_tag;
  std::string verb;
  std::string image;
  std::vector<std::string> env;
  std::string trace_log;
  std::string mpixlate_lib_dir;
  std::string capture;
  std::vector<std::string> command;
};

struct VerifyArgs {
  std::string file;
  int expected = 0;
};

struct CompareArgs {
  std::string reference;
  std::string candidate;
};

namespace detail {

inline std::vector<std::string> default_exclusions(const std::vector<std::string>& extra) {
  std::vector<std::string> ex{std::string(kContainerMpiPrefix)};
  ex.insert(ex.end(), extra.begin(), extra.end());
  return ex;
}

inline BindPlan plan_from_trace(const std::string& path, const std::vector<std::string>& exclude,
                                PlanWarnings& warnings, std::ostream& err) {
  auto set = collect_accesses_from_text(read_file(path));
  if (set.stats.truncated > 0) {
    err << "warning: " << set.stats.truncated << " truncated path(s) ignored\n";
  }
  auto libs = filter_shared_libraries(set);
  auto plan = plan_binds(libs, default_exclusions(exclude), &warnings);
  for (const auto& p : warnings.excluded) err << "warning: excluded " << p << "\n";
  return plan;
}

inline int gen_def(const Globals& g, const GenDefArgs& a, std::ostream& out, std::ostream& err) {
  RecipeSpec recipe;
  if (a.tmpl == "mpich-base") {
    recipe = mpich_base_recipe({a.from, a.mpich_version, a.prefix, MpichBaseOptions{}.download_url});
  } else if (a.tmpl == "openmpi-base") {
    OpenMpiBaseOptions opt;
    opt.base_image = a.from;
    recipe = openmpi_base_recipe(opt);
  } else {
    if (a.base.empty()) throw ContractViolation("app template needs --base <image.sif>");
    AppOptions opt;
    opt.base = a.base;
    opt.preload_via_runscript = a.runscript_preload;
    opt.osu_version = a.osu_version;
    recipe = app_recipe(opt);
  }
  out << render_definition(recipe);

  if (g.execute) {
    if (g.output.empty() || a.image.empty()) {
      throw ContractViolation("--execute needs --output <file.def> and --image <file.sif>");
    }
    // The definition must be on disk before the build reads it.
    {
      std::ofstream def(g.output, std::ios::binary);
      def << render_definition(recipe);
    }
    auto run = run_shell("singularity build " + text::shell_quote(a.image) + " " +
                         text::shell_quote(g.output));
    err << run.out << run.err;
    return run.exit_code == 0 ? kOk : kVerifyFailed;
  }
  return kOk;
}

inline int trace_binds(const Globals& g, const TraceArgs& a, std::ostream& out, std::ostream& err) {
  PlanWarnings warnings;
  auto plan = plan_from_trace(a.log, a.exclude, warnings, err);
  if (g.json) {
    out << plan_json(plan, warnings).dump(2) << "\n";
    return plan.empty() ? kVerifyFailed : kOk;
  }
  if (plan.empty()) {
    err << "no shared libraries found in " << a.log << "\n";
    return kVerifyFailed;
  }
  auto env = render_env(plan);
  for (auto name : {kBindVar, kLibraryPathVar}) {
    auto it = env.find(std::string(name));
    if (it != env.end()) out << "export " << it->first << "=" << text::shell_quote(it->second) << "\n";
  }
  return kOk;
}

inline int check_abi(const Globals& g, const AbiArgs& a, std::ostream& out) {
  auto container = classify_version_banner(read_file(a.banner));
  auto host = classify_version_banner(a.host_banner.empty() ? std::string(kDefaultHostBanner)
                                                            : read_file(a.host_banner));
  auto decision = decide_compatibility(container, host, a.fortran);
  bool ok = !std::holds_alternative<Incompatible>(decision);
  if (g.json) {
    nlohmann::json j = {{"container", flavor_json(container)},
                        {"host", flavor_json(host)},
                        {"fortran", a.fortran},
                        {"result", decision_json(decision)}};
    if (ok) j["modules"] = required_modules(decision);
    out << j.dump(2) << "\n";
  } else {
    out << "container: " << describe(container) << "\n";
    out << "host: " << describe(host) << "\n";
    out << "decision: " << describe(decision) << "\n";
    if (ok) out << "modules: " << text::join(required_modules(decision), " ") << "\n";
  }
  return ok ? kOk : kVerifyFailed;
}

inline CheckMode parse_check(const std::string& s) {
  if (s == "0" || s == "off") return CheckMode::Off;
  if (s == "1" || s == "on") return CheckMode::On;
  if (s == "2" || s == "verbose") return CheckMode::Verbose;
  throw ContractViolation("--check must be 0, 1, 2, off, on or verbose");
}

inline int compose_launch(const Globals& g, const LaunchArgs& a, std::ostream& out, std::ostream& err) {
  bool translate = !a.source_tag.empty() || !a.target_tag.empty();
  CompatDecision decision = DirectBind{};
  if (translate) decision = RequiresTranslation{a.source_tag, a.target_tag, false};

  LaunchPlan plan = plan_for(decision);
  plan.check_mode = parse_check(a.check);
  plan.scheduler.ntasks = a.ntasks;
  plan.scheduler.ntasks_per_node = a.per_node;
  if (!a.account.empty()) plan.scheduler.account = a.account;
  if (!a.partition.empty()) plan.scheduler.partition = a.partition;
  if (a.verb == "exec") {
    plan.verb = RuntimeVerb::Exec;
  } else if (a.verb == "run") {
    plan.verb = RuntimeVerb::Run;
  } else if (!a.verb.empty()) {
    throw ContractViolation("--verb must be exec or run");
  }
  plan.image = a.image;
  plan.inner_command = a.command;

  BindPlan binds;
  PlanWarnings warnings;
  if (!a.trace_log.empty()) binds = plan_from_trace(a.trace_log, {}, warnings, err);
  if (!a.mpixlate_lib_dir.empty()) binds = translation_env_adjustment(binds, a.mpixlate_lib_dir);
  plan.env = render_env(binds);
  for (const auto& kv : a.env) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ContractViolation("--env expects NAME=VALUE, got " + kv);
    plan.env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }

  std::string line = compose(plan);
  if (g.json) {
    out << nlohmann::json{{"modules", plan.modules}, {"command", line}}.dump(2) << "\n";
  } else {
    out << module_preamble(plan.modules) << "\n" << line << "\n";
  }
  if (!g.execute) return kOk;

  auto run = run_shell(line);
  if (!a.capture.empty()) {
    std::ofstream cap(a.capture, std::ios::binary);
    cap << run.out;
  } else {
    out << run.out;
  }
  err << run.err;
  return run.exit_code == 0 ? kOk : kVerifyFailed;
}

inline int verify_run(const Globals& g, const VerifyArgs& a, std::ostream& out, std::ostream& err) {
  auto report = parse_mpitest_output(read_file(a.file));
  if (report.blocks.empty()) {
    err << "no '# ranks = N (rank id = R)' blocks in " << a.file << "\n";
    return kUsage;
  }
  auto verdict = detect_duplicate_instances(report, a.expected);
  bool healthy = std::holds_alternative<Healthy>(verdict);
  if (g.json) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : report.blocks) {
      blocks.push_back({{"nranks", b.nranks}, {"rank_id", b.rank_id}, {"mpi", flavor_json(b.flavor)}});
    }
    nlohmann::json v = {{"verdict", healthy ? "Healthy" : "DuplicateInstances"},
                        {"expected_ntasks", a.expected},
                        {"found_blocks", report.blocks.size()}};
    out << nlohmann::json{{"blocks", blocks}, {"result", v}}.dump(2) << "\n";
  } else {
    for (const auto& b : report.blocks) {
      out << "block: ranks=" << b.nranks << " rank_id=" << b.rank_id << " mpi=" << describe(b.flavor) << "\n";
    }
    if (healthy) {
      out << "verdict: Healthy\n";
    } else {
      out << "verdict: DuplicateInstances (found " << report.blocks.size() << " block(s), expected one block of "
          << a.expected << " ranks)\n";
    }
  }
  return healthy ? kOk : kVerifyFailed;
}

inline int compare_osu(const Globals& g, const CompareArgs& a, std::ostream& out) {
  auto ref = parse_osu_output(read_file(a.reference));
  auto cand = parse_osu_output(read_file(a.candidate));
  auto rep = compare_results(ref, cand, g.tolerance);
  if (g.json) {
    out << nlohmann::json(rep).dump(2) << "\n";
  } else {
    out << "benchmark: " << rep.benchmark_name << "\n";
    for (const auto& s : rep.per_size) {
      std::ostringstream pct;
      pct.setf(std::ios::fixed);
      pct.precision(4);
      pct << s.rel_diff * 100.0;
      out << s.size << " " << s.reference.to_string() << " " << s.candidate.to_string() << " " << pct.str()
          << "%\n";
    }
    for (auto m : rep.missing_sizes) out << "missing: " << m << "\n";
    std::ostringstream summary;
    summary.setf(std::ios::fixed);
    summary.precision(4);
    summary << rep.max_rel_diff * 100.0 << "% (tolerance " << rep.tolerance * 100.0 << "%)";
    out << "max relative difference: " << summary.str();
    if (rep.max_rel_diff_size) out << " at size " << *rep.max_rel_diff_size;
    out << "\n";
    out << "verdict: " << (rep.pass ? "pass" : "fail") << "\n";
  }
  return rep.pass ? kOk : kVerifyFailed;
}

}  // namespace detail

/// Runs the tool with argv-style arguments; argv[0] is the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deploy MPI containers on Cray EX hosts: recipes, bind plans, ABI checks, launches, run checks",
               "mpicont"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("-o,--output", g.output, "Write the primary output to this file");
  app.add_flag("--json", g.json, "Machine-readable report");
  app.add_flag("--execute", g.execute, "Actually run the composed command (default: dry run)");
  app.add_option("--tolerance", g.tolerance, "Relative tolerance for compare-osu")
      ->check(CLI::PositiveNumber);

  GenDefArgs gd;
  auto* gen = app.add_subcommand("gen-def", "Emit a container definition file");
  gen->add_option("template", gd.tmpl, "mpich-base | openmpi-base | app")
      ->required()
      ->check(CLI::IsMember({"mpich-base", "openmpi-base", "app"}));
  gen->add_option("--mpich-version", gd.mpich_version, "MPICH release to build");
  gen->add_option("--prefix", gd.prefix, "MPICH install prefix inside the container");
  gen->add_option("--from", gd.from, "Registry base image for base templates");
  gen->add_option("--base", gd.base, "Local base image for the app template");
  gen->add_flag("--runscript-preload", gd.runscript_preload,
                "Activate the shim from %runscript instead of %environment");
  gen->add_option("--osu-version", gd.osu_version, "OSU micro-benchmarks release");
  gen->add_option("--image", gd.image, "Image to build with --execute");

  TraceArgs ta;
  auto* trace = app.add_subcommand("trace-binds", "Derive bind variables from an strace log");
  trace->add_option("trace-log", ta.log, "Output of strace -f -e trace=%file")->required();
  trace->add_option("--exclude", ta.exclude, "Extra in-container prefixes never to bind over");

  AbiArgs aa;
  auto* abi = app.add_subcommand("check-abi", "Decide container/host MPI compatibility");
  abi->add_option("banner-file", aa.banner, "Container MPI_Get_library_version output")->required();
  abi->add_option("--host-banner", aa.host_banner, "Host MPI_Get_library_version output");
  abi->add_flag("--fortran", aa.fortran, "The application uses the Fortran bindings");

  LaunchArgs la;
  auto* launch = app.add_subcommand("compose-launch", "Compose the srun command line");
  launch->add_option("-n,--ntasks", la.ntasks, "Number of tasks")->required()->check(CLI::PositiveNumber);
  launch->add_option("--ntasks-per-node", la.per_node, "Tasks per node")->check(CLI::PositiveNumber);
  launch->add_option("-A,--account", la.account, "Slurm account");
  launch->add_option("-p,--partition", la.partition, "Slurm partition");
  launch->add_option("--check", la.check, "CHECK_MPI mode: 0|1|2 (off|on|verbose)");
  auto* src = launch->add_option("--source-tag", la.source_tag, "mpixlate source ABI tag, e.g. ompi.40");
  auto* tgt = launch->add_option("--target-tag", la.target_tag, "mpixlate target ABI tag, e.g. cmpich.12");
  src->needs(tgt);
  tgt->needs(src);
  launch->add_option("--verb", la.verb, "exec | run (run is implied by translation)");
  launch->add_option("--image", la.image, "Container image")->required();
  launch->add_option("--env", la.env, "Extra NAME=VALUE assignment");
  launch->add_option("--trace-log", la.trace_log, "Derive bind variables from this strace log");
  launch->add_option("--mpixlate-lib-dir", la.mpixlate_lib_dir, "Prepend this directory to the search path");
  launch->add_option("--capture", la.capture, "With --execute, write the child's stdout here");
  launch->add_option("command", la.command, "Command to run inside the container")->required();

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify-run", "Check mpitest output for duplicated singleton runs");
  verify->add_option("stdout-file", va.file, "Captured output")->required();
  verify->add_option("--expected-ntasks", va.expected, "Tasks requested from the scheduler")
      ->required()
      ->check(CLI::PositiveNumber);

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare-osu", "Compare two OSU benchmark outputs");
  compare->add_option("reference", ca.reference, "Reference output")->required();
  compare->add_option("candidate", ca.candidate, "Candidate output")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "mpicont: " << e.what() << "\n";
    return kUsage;
  }

  if (!g.output.empty()) {
    std::vector<std::string> inputs = {ta.log, aa.banner, aa.host_banner, la.trace_log, va.file,
                                       ca.reference, ca.candidate};
    std::error_code ec;
    for (const auto& in : inputs) {
      if (!in.empty() && std::filesystem::equivalent(in, g.output, ec)) {
        err << "mpicont: --output would overwrite input " << in << "\n";
        return kUsage;
      }
    }
  }

  std::ostringstream buffer;
  std::ostream& sink = g.output.empty() ? out : buffer;
  int code = kOk;
  try {
    if (*gen) {
      if (g.execute) {
        // gen_def writes the file itself before building.
        code = detail::gen_def(g, gd, buffer, err);
        return code;
      }
      code = detail::gen_def(g, gd, sink, err);
    } else if (*trace) {
      code = detail::trace_binds(g, ta, sink, err);
    } else if (*abi) {
      code = detail::check_abi(g, aa, sink);
    } else if (*launch) {
      code = detail::compose_launch(g, la, sink, err);
    } else if (*verify) {
      code = detail::verify_run(g, va, sink, err);
    } else if (*compare) {
      code = detail::compare_osu(g, ca, sink);
    }
  } catch (const ContractViolation& e) {
    err << "mpicont: " << e.what() << "\n";
    return kUsage;
  } catch (const MalformedInput& e) {
    err << "mpicont: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    err << "mpicont: " << e.what() << "\n";
    return kUsage;
  }

  if (!g.output.empty()) {
    std::ofstream file(g.output, std::ios::binary);
    if (!file) {
      err << "mpicont: cannot write " << g.output << "\n";
      return kUsage;
    }
    file << buffer.str();
  }
  return code;
}

}  // namespace mpicont::cli
