// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every check runs from fixtures; no scheduler, container
// runtime or MPI library is needed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mpicont/abi_checker.hpp"
#include "mpicont/bind_planner.hpp"
#include "mpicont/cli.hpp"
#include "mpicont/launch_composer.hpp"
#include "mpicont/recipe_generator.hpp"
#include "mpicont/run_verifier.hpp"
#include "mpicont/trace_parser.hpp"

namespace {

using namespace mpicont;

std::string data_path(const std::string& name) { return std::string(MPICONT_TEST_DATA_DIR) + "/" + name; }

std::string read_data(const std::string& name) {
  std::ifstream in(data_path(name), std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Collects failed sub-checks for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  bool ok() const { return failures_.empty(); }
  std::string detail() const {
    std::string s;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + f;
    return s;
  }

 private:
  std::vector<std::string> failures_;
};

struct CliResult {
  int code;
  std::string out;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mpicont");
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str()};
}

bool contains(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

void banners(Check& c) {
  auto t0 = std::chrono::steady_clock::now();
  auto cray = classify_version_banner(read_data("banner_cray.txt"));
  auto mpich = classify_version_banner(read_data("banner_mpich.txt"));
  auto ompi = classify_version_banner(read_data("banner_openmpi.txt"));
  auto elapsed = std::chrono::steady_clock::now() - t0;

  c.expect(cray == MpiFlavor(CrayMpich{"8.1.27.26", "3.4a2"}), "cray banner: " + describe(cray));
  const auto* m = std::get_if<Mpich>(&mpich);
  c.expect(m && m->version == "3.4a2" && m->abi && m->abi->to_string() == "12:0:0" && m->device == "ch3:nemesis",
           "mpich banner: " + describe(mpich));
  const auto* o = std::get_if<OpenMpi>(&ompi);
  c.expect(o && o->major == 4 && o->minor == 1 && o->patch == 6, "openmpi banner: " + describe(ompi));
  c.expect(elapsed < std::chrono::seconds(1), "classification took over 1 s");
}

void compatibility(Check& c) {
  const MpiFlavor host = classify_version_banner(read_data("banner_cray.txt"));
  const MpiFlavor cray = host;
  const MpiFlavor mpich = classify_version_banner(read_data("banner_mpich.txt"));
  const MpiFlavor ompi4 = classify_version_banner(read_data("banner_openmpi.txt"));
  const MpiFlavor ompi5 = classify_version_banner(read_data("banner_openmpi5.txt"));
  const MpiFlavor unknown = classify_version_banner("Some Vendor MPI 1.0\n");
  const MpiFlavor mpich_no_abi = Mpich{"3.4a2", std::nullopt, "ch3:nemesis"};
  const MpiFlavor mpich_wrong_abi = Mpich{"4.2.0", AbiTriple{13, 0, 0}, "ch4:ofi"};

  enum Expect { kDirect, kTranslate, kIncompatible };
  struct Row {
    const char* name;
    MpiFlavor container;
    bool fortran;
    Expect expect;
  };
  const std::vector<Row> rows{
      {"cray", cray, false, kDirect},
      {"cray+fortran", cray, true, kDirect},
      {"mpich", mpich, false, kDirect},
      {"mpich+fortran", mpich, true, kDirect},
      {"openmpi4", ompi4, false, kTranslate},
      {"openmpi4+fortran", ompi4, true, kIncompatible},
      {"openmpi5", ompi5, false, kIncompatible},
      {"openmpi5+fortran", ompi5, true, kIncompatible},
      {"unknown", unknown, false, kIncompatible},
      {"unknown+fortran", unknown, true, kIncompatible},
      {"mpich-no-abi", mpich_no_abi, false, kIncompatible},
      {"mpich-abi-13", mpich_wrong_abi, false, kIncompatible},
  };
  for (const auto& r : rows) {
    auto d = decide_compatibility(r.container, host, r.fortran);
    bool ok = false;
    switch (r.expect) {
      case kDirect: ok = std::holds_alternative<DirectBind>(d); break;
      case kTranslate: {
        const auto* t = std::get_if<RequiresTranslation>(&d);
        ok = t && t->source_tag == "ompi.40" && t->target_tag == "cmpich.12" && !t->fortran_supported;
        break;
      }
      case kIncompatible: ok = std::holds_alternative<Incompatible>(d); break;
    }
    c.expect(ok, std::string(r.name) + " -> " + describe(d));
  }
  auto fortran = decide_compatibility(ompi4, host, true);
  c.expect(std::holds_alternative<Incompatible>(fortran) && contains(describe(fortran), "Fortran"),
           "Fortran-under-translation reason");
  c.expect(std::holds_alternative<Incompatible>(decide_compatibility(mpich, mpich, false)), "non-Cray host");
}

void osu_parsing(Check& c) {
  auto check_table = [&](const std::string& file, const char* first, const char* last) {
    auto r = parse_osu_output(read_data(file));
    c.expect(r.rows.size() == 23, file + ": " + std::to_string(r.rows.size()) + " rows");
    if (r.rows.empty()) return;
    c.expect(r.rows.front().size == 1 && r.rows.front().value.to_string() == first,
             file + ": first row " + r.rows.front().value.to_string());
    c.expect(r.rows.back().size == 4194304 && r.rows.back().value.to_string() == last,
             file + ": last row " + r.rows.back().value.to_string());
  };
  check_table("osu_bw_mpich.txt", "2.01", "22553.94");
  check_table("osu_bw_openmpi.txt", "1.97", "22579.80");
}

void cross_table(Check& c) {
  auto ref_text = read_data("osu_bw_mpich.txt");
  auto cand_text = read_data("osu_bw_openmpi.txt");
  auto ref = parse_osu_output(ref_text);
  auto cand = parse_osu_output(cand_text);

  // Oracle: per-size arithmetic on the printed values, independent of Decimal.
  auto values = [](const std::string& text) {
    std::map<long long, long double> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      long long size = 0;
      char value[64];
      if (std::sscanf(line.c_str(), " %lld %63s", &size, value) == 2) rows[size] = std::strtold(value, nullptr);
    }
    return rows;
  };
  auto ro = values(ref_text);
  auto co = values(cand_text);
  long double oracle_max = -1;
  long long oracle_size = 0;
  for (const auto& [size, r] : ro) {
    long double d = std::fabs(co.at(size) - r) / r;
    if (d > oracle_max) {
      oracle_max = d;
      oracle_size = size;
    }
  }

  auto rep = compare_results(ref, cand, 0.025);
  c.expect(std::fabs(rep.max_rel_diff - static_cast<double>(oracle_max)) < 1e-12 &&
               rep.max_rel_diff_size == oracle_size,
           "implementation disagrees with oracle");
  c.expect(rep.pass, "does not pass at 2.5%");
  c.expect(!compare_results(ref, cand, 0.015).pass, "passes at 1.5%");

  char got[96];
  std::snprintf(got, sizeof got, "max %.4f%% at size %lld", rep.max_rel_diff * 100.0,
                rep.max_rel_diff_size.value_or(-1));
  c.expect(std::fabs(rep.max_rel_diff - 0.0199) < 0.00005 && rep.max_rel_diff_size == 1,
           std::string("expected max ~1.99% at size 1, ") + got);
}

void duplicates(Check& c) {
  auto verdict = [](const std::string& file, int n) {
    return detect_duplicate_instances(parse_mpitest_output(read_data(file)), n);
  };
  auto dup = verdict("mpitest_mpich_duplicate.txt", 2);
  c.expect(dup == InstanceVerdict(DuplicateInstances{2, 2}), "no-bindings listing not flagged");
  c.expect(std::holds_alternative<Healthy>(verdict("mpitest_cray.txt", 1)), "cray listing");
  c.expect(std::holds_alternative<Healthy>(verdict("mpitest_mpich_single.txt", 1)), "mpich listing");
  c.expect(std::holds_alternative<Healthy>(verdict("mpitest_openmpi.txt", 1)), "openmpi listing");
  c.expect(run_cli({"verify-run", data_path("mpitest_mpich_duplicate.txt"), "--expected-ntasks", "2"}).code == 1,
           "verify-run exit code");
}

void recipes(Check& c) {
  struct Case {
    std::vector<std::string> args;
    std::vector<std::string> directives;
  };
  const std::vector<Case> cases{
      {{"gen-def", "mpich-base"},
       {R"(sed -i 's/libmpi_so_version="0:0:0"/libmpi_so_version="12:0:0"/g' configure)",
        "./configure --prefix=/container/mpi", "--disable-static", "--disable-rpath", "--disable-wrapper-rpath",
        "--enable-fast=all,O3", "--with-device=ch3", "--mandir=/usr/share/man",
        "FFLAGS='-fallow-argument-mismatch'"}},
      {{"gen-def", "openmpi-base"},
       {"for f in /usr/sbin/groupadd /usr/sbin/addgroup /bin/chgrp; do", "rm -rf $f", "ln -s /bin/true $f",
        "libopenmpi-dev"}},
      {{"gen-def", "app", "--base", "mpich-ubuntu24.04.sif"},
       {"Bootstrap: localimage", "OSU_NAME=osu-micro-benchmarks-7.4",
        "./configure --prefix=/container/osu CC=$(which mpicc) CXX=$(which mpicxx)", "make -j",
        "%environment\n    export LD_PRELOAD=\"/container/test_mpi/intercept.so\""}},
      {{"gen-def", "app", "--base", "openmpi-ubuntu24.04.sif", "--runscript-preload"},
       {"OSU_NAME=osu-micro-benchmarks-7.4",
        "%runscript\n    export LD_PRELOAD=\"${LD_PRELOAD}${LD_PRELOAD:+:}/container/test_mpi/intercept.so\""}},
  };
  for (const auto& k : cases) {
    auto first = run_cli(k.args);
    auto second = run_cli(k.args);
    std::string name = k.args[1] + (k.args.size() > 4 ? " (runscript)" : "");
    c.expect(first.code == 0, name + ": exit " + std::to_string(first.code));
    c.expect(first.out == second.out, name + ": renders differ between runs");
    for (const auto& d : k.directives) c.expect(contains(first.out, d), name + ": missing `" + d + "`");
  }
  auto runscript = run_cli(cases[3].args).out;
  c.expect(!contains(runscript, "%environment"), "runscript variant also sets LD_PRELOAD in %environment");
}

void launches(Check& c) {
  const std::string osu = "/container/osu/libexec/osu-micro-benchmarks/mpi/pt2pt/osu_bw";
  auto exec_line =
      run_cli({"compose-launch", "-n", "2", "--ntasks-per-node", "1", "--check", "1", "--image", "mpich-test.sif", osu});
  c.expect(exec_line.out == "module load singularity-bindings\nCHECK_MPI=1 srun -n 2 --ntasks-per-node=1 "
                            "singularity exec mpich-test.sif " + osu + "\n",
           "exec variant: " + exec_line.out);
  auto run_line = run_cli({"compose-launch", "-n", "2", "--ntasks-per-node", "1", "--check", "2", "--source-tag",
                           "ompi.40", "--target-tag", "cmpich.12", "--image", "openmpi-test.sif", osu});
  c.expect(run_line.out == "module load singularity-bindings cray-mpich cray-mpixlate\nCHECK_MPI=2 srun -n 2 "
                           "--ntasks-per-node=1 mpixlate -s ompi.40 -t cmpich.12 singularity run openmpi-test.sif " +
                               osu + "\n",
           "translated variant: " + run_line.out);
  c.expect(required_modules(RequiresTranslation{"ompi.40", "cmpich.12", false}) ==
               std::vector<std::string>{"singularity-bindings", "cray-mpich", "cray-mpixlate"},
           "module triple");
}

void trace_pipeline(Check& c) {
  std::mt19937 rng(2024);
  auto range = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  // Fuzz: 1000 lines of printable noise and mangled trace lines.
  std::string fuzz;
  for (int i = 0; i < 1000; ++i) {
    std::string line;
    if (range(0, 1)) {
      line = "[pid " + std::to_string(range(1, 9999)) + "] openat(AT_FDCWD, \"/opt/x/lib" +
             std::to_string(i) + ".so\", O_RDONLY) = " + std::to_string(range(-1, 9));
      line.resize(static_cast<std::size_t>(range(0, static_cast<int>(line.size()))));
    } else {
      int n = range(0, 120);
      for (int k = 0; k < n; ++k) {
        char ch = static_cast<char>(range(0, 255));
        line += ch == '\n' ? ' ' : ch;
      }
    }
    fuzz += line + "\n";
  }
  try {
    auto set = collect_accesses_from_text(fuzz);
    c.expect(set.source_line_count == 1000, "fuzz line count");
  } catch (const std::exception& e) {
    c.expect(false, std::string("fuzz threw: ") + e.what());
  }

  // Generated log: known libraries, some failing lookups, some in-container MPI.
  const std::vector<std::string> dirs{"/opt/cray/pe/lib64", "/opt/cray/pe/mpich/8.1.27/ofi/gnu/9.1/lib",
                                      "/usr/lib64", "/opt/cray/xpmem/default/lib64", "/container/mpi/lib",
                                      "/opt/cray/pe/lib64/extra", "/lib64"};
  std::string log;
  for (int i = 0; i < 400; ++i) {
    std::string path = dirs[static_cast<std::size_t>(range(0, static_cast<int>(dirs.size()) - 1))] + "/lib" +
                       std::to_string(range(0, 30)) + ".so." + std::to_string(range(0, 3));
    bool ok = range(0, 2) != 0;
    log += std::to_string(range(100, 120)) + " openat(AT_FDCWD, \"" + path + "\", O_RDONLY|O_CLOEXEC) = " +
           (ok ? std::to_string(range(3, 20)) : "-1 ENOENT (No such file or directory)") + "\n";
  }
  auto set = collect_accesses_from_text(log);
  auto libs = filter_shared_libraries(set);
  auto plan = plan_binds(libs);
  c.expect(!find_plan_violation(plan), "plan invariant: " + find_plan_violation(plan).value_or(""));
  for (const auto& lib : libs) {
    bool in_container = paths::is_under(lib, kContainerMpiPrefix);
    bool covered = std::any_of(plan.binds.begin(), plan.binds.end(),
                               [&](const BindSpec& b) { return paths::is_under(lib, b.destination); });
    c.expect(in_container || covered, "uncovered " + lib);
  }
  for (const auto& b : plan.binds) {
    c.expect(!paths::is_under(b.destination, kContainerMpiPrefix) &&
                 !paths::is_under(std::string(kContainerMpiPrefix), b.destination),
             "bind touches /container/mpi: " + b.destination);
  }

  auto cli = run_cli({"trace-binds", data_path("cray_mpitest_trace.log")});
  c.expect(cli.code == 0 && cli.out == read_data("cray_mpitest_trace.expected"), "trace-binds vs oracle: " + cli.out);
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Check&)>>> criteria{
      {"banner classification", banners},
      {"compatibility table", compatibility},
      {"OSU parsing", osu_parsing},
      {"cross-table comparison", cross_table},
      {"duplicate-instance detection", duplicates},
      {"recipe golden files", recipes},
      {"launch composition", launches},
      {"trace pipeline", trace_pipeline},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    if (c.ok()) {
      std::cout << "PASS " << name << "\n";
    } else {
      ++failed;
      std::cout << "FAIL " << name << ": " << c.detail() << "\n";
    }
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
