// SPDX-License-Identifier: Apache-2.0

#include "mpicont/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace mpicont {
namespace {

using testing::data_path;
using testing::read_data;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mpicont");
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mpicont_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(Cli, NoSubcommandIsUsageError) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
}

TEST(Cli, Help) {
  auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("compose-launch"), std::string::npos);
}

TEST(Cli, GenDefTemplates) {
  auto mpich = run_cli({"gen-def", "mpich-base"});
  EXPECT_EQ(mpich.code, 0);
  EXPECT_EQ(mpich.out, render_definition(mpich_base_recipe({})));
  EXPECT_EQ(run_cli({"gen-def", "openmpi-base"}).out, render_definition(openmpi_base_recipe({})));
  auto app = run_cli({"gen-def", "app", "--base", "mpich-ubuntu24.04.sif"});
  EXPECT_EQ(app.code, 0);
  EXPECT_NE(app.out.find("From: mpich-ubuntu24.04.sif"), std::string::npos);
}

TEST(Cli, GenDefErrors) {
  EXPECT_EQ(run_cli({"gen-def", "nope"}).code, 2);
  EXPECT_EQ(run_cli({"gen-def", "app"}).code, 2);
  EXPECT_EQ(run_cli({"gen-def", "mpich-base", "--execute"}).code, 2);
}

TEST(Cli, GenDefOutputFile) {
  auto path = scratch("mpich.def");
  auto r = run_cli({"--output", path.string(), "gen-def", "mpich-base", "--mpich-version", "4.2.0"});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_NE(ss.str().find("VER=4.2.0"), std::string::npos);
}

TEST(Cli, TraceBindsMatchesHandOracle) {
  auto r = run_cli({"trace-binds", data_path("cray_mpitest_trace.log")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, read_data("cray_mpitest_trace.expected"));
}

TEST(Cli, TraceBindsJson) {
  auto r = run_cli({"--json", "trace-binds", data_path("cray_mpitest_trace.log")});
  EXPECT_EQ(r.code, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("binds").at(0).at("source"), "/opt/cray/pe/lib64");
}

TEST(Cli, TraceBindsExclude) {
  auto r = run_cli({"trace-binds", data_path("cray_mpitest_trace.log"), "--exclude", "/lib64"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.find("/lib64/libc.so.6"), std::string::npos);
  EXPECT_NE(r.err.find("excluded /lib64/libc.so.6"), std::string::npos);
}

TEST(Cli, TraceBindsNoLibraries) {
  auto path = scratch("empty.log");
  std::ofstream(path) << "123 openat(AT_FDCWD, \"/etc/passwd\", O_RDONLY) = 3\n";
  EXPECT_EQ(run_cli({"trace-binds", path.string()}).code, 1);
}

TEST(Cli, UnreadableInput) {
  EXPECT_EQ(run_cli({"trace-binds", "/nonexistent/trace.log"}).code, 2);
  EXPECT_EQ(run_cli({"check-abi", "/nonexistent/banner"}).code, 2);
}

TEST(Cli, OutputMustNotOverwriteInput) {
  auto path = scratch("self.log");
  std::ofstream(path) << read_data("cray_mpitest_trace.log");
  auto r = run_cli({"-o", path.string(), "trace-binds", path.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(read_data("cray_mpitest_trace.log").size(), std::filesystem::file_size(path));
}

TEST(Cli, CheckAbi) {
  auto mpich = run_cli({"check-abi", data_path("banner_mpich.txt")});
  EXPECT_EQ(mpich.code, 0);
  EXPECT_NE(mpich.out.find("decision: DirectBind"), std::string::npos) << mpich.out;
  EXPECT_NE(mpich.out.find("modules: singularity-bindings\n"), std::string::npos);

  auto ompi = run_cli({"check-abi", data_path("banner_openmpi.txt")});
  EXPECT_EQ(ompi.code, 0);
  EXPECT_NE(ompi.out.find("modules: singularity-bindings cray-mpich cray-mpixlate"), std::string::npos);

  auto fortran = run_cli({"check-abi", data_path("banner_openmpi.txt"), "--fortran"});
  EXPECT_EQ(fortran.code, 1);
  EXPECT_NE(fortran.out.find("Fortran"), std::string::npos);

  auto json = run_cli({"check-abi", data_path("banner_openmpi5.txt"), "--json"});
  EXPECT_EQ(json.code, 1);
  EXPECT_EQ(nlohmann::json::parse(json.out).at("result").at("decision"), "Incompatible");
}

TEST(Cli, CheckAbiNonCrayHost) {
  auto r = run_cli({"check-abi", data_path("banner_mpich.txt"), "--host-banner", data_path("banner_mpich.txt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("unsupported host"), std::string::npos);
}

TEST(Cli, ComposeLaunchDirect) {
  auto r = run_cli({"compose-launch", "-n", "2", "--ntasks-per-node", "1", "--check", "1", "--image",
                    "mpich-test.sif", "/container/osu/libexec/osu-micro-benchmarks/mpi/pt2pt/osu_bw"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out,
            "module load singularity-bindings\n"
            "CHECK_MPI=1 srun -n 2 --ntasks-per-node=1 singularity exec mpich-test.sif "
            "/container/osu/libexec/osu-micro-benchmarks/mpi/pt2pt/osu_bw\n");
}

TEST(Cli, ComposeLaunchTranslated) {
  auto r = run_cli({"compose-launch", "-n", "2", "--ntasks-per-node", "1", "--check", "verbose", "--source-tag",
                    "ompi.40", "--target-tag", "cmpich.12", "--image", "openmpi-test.sif", "osu_bw"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out,
            "module load singularity-bindings cray-mpich cray-mpixlate\n"
            "CHECK_MPI=2 srun -n 2 --ntasks-per-node=1 mpixlate -s ompi.40 -t cmpich.12 singularity run "
            "openmpi-test.sif osu_bw\n");
}

TEST(Cli, ComposeLaunchErrors) {
  EXPECT_EQ(run_cli({"compose-launch", "-n", "2", "--image", "x.sif"}).code, 2);
  EXPECT_EQ(run_cli({"compose-launch", "-n", "0", "--image", "x.sif", "a"}).code, 2);
  EXPECT_EQ(run_cli({"compose-launch", "-n", "1", "--check", "3", "--image", "x.sif", "a"}).code, 2);
  EXPECT_EQ(run_cli({"compose-launch", "-n", "1", "--source-tag", "ompi.40", "--image", "x.sif", "a"}).code, 2);
  EXPECT_EQ(run_cli({"compose-launch", "-n", "1", "--source-tag", "ompi.40", "--target-tag", "cmpich.12",
                     "--verb", "exec", "--image", "x.sif", "a"})
                .code,
            2);
  EXPECT_EQ(run_cli({"compose-launch", "-n", "1", "--env", "CHECK_MPI=1", "--image", "x.sif", "a"}).code, 2);
}

TEST(Cli, ComposeLaunchWithTraceAndTranslationDir) {
  auto r = run_cli({"compose-launch", "-n", "1", "--trace-log", data_path("cray_mpitest_trace.log"),
                    "--mpixlate-lib-dir", "/opt/cray/pe/mpixlate/lib", "--image", "x.sif", "a"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("SINGULARITYENV_LD_LIBRARY_PATH='/opt/cray/pe/mpixlate/lib:/opt/cray/pe/lib64:"),
            std::string::npos)
      << r.out;
}

TEST(Cli, ComposeLaunchExecute) {
  auto cap = scratch("capture.txt");
  // No srun in the test environment: the command fails and that is reported as exit 1.
  auto r = run_cli({"--execute", "compose-launch", "-n", "1", "--image", "x.sif", "--capture", cap.string(), "a"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, VerifyRun) {
  auto dup = run_cli({"verify-run", data_path("mpitest_mpich_duplicate.txt"), "--expected-ntasks", "2"});
  EXPECT_EQ(dup.code, 1);
  EXPECT_NE(dup.out.find("verdict: DuplicateInstances"), std::string::npos);

  auto ok = run_cli({"verify-run", data_path("mpitest_cray.txt"), "--expected-ntasks", "1"});
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("verdict: Healthy"), std::string::npos);

  auto none = run_cli({"verify-run", data_path("osu_bw_mpich.txt"), "--expected-ntasks", "2"});
  EXPECT_EQ(none.code, 2);

  auto json = run_cli({"--json", "verify-run", data_path("mpitest_mpich_duplicate.txt"), "--expected-ntasks", "2"});
  EXPECT_EQ(nlohmann::json::parse(json.out).at("result").at("found_blocks"), 2);
}

TEST(Cli, CompareOsu) {
  auto pass = run_cli({"compare-osu", data_path("osu_bw_mpich.txt"), data_path("osu_bw_openmpi.txt")});
  EXPECT_EQ(pass.code, 0);
  EXPECT_NE(pass.out.find("max relative difference: 2.3602% (tolerance 2.5000%) at size 4"), std::string::npos)
      << pass.out;
  EXPECT_NE(pass.out.find("verdict: pass"), std::string::npos);

  auto fail = run_cli({"--tolerance", "0.015", "compare-osu", data_path("osu_bw_mpich.txt"),
                       data_path("osu_bw_openmpi.txt")});
  EXPECT_EQ(fail.code, 1);

  auto missing = run_cli({"compare-osu", data_path("osu_bw_mpich.txt"), data_path("osu_bw_mpich_truncated.txt")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.out.find("missing: 4194304"), std::string::npos);

  EXPECT_EQ(run_cli({"--tolerance", "-1", "compare-osu", data_path("osu_bw_mpich.txt"),
                     data_path("osu_bw_openmpi.txt")})
                .code,
            2);
  EXPECT_EQ(run_cli({"compare-osu", data_path("banner_cray.txt"), data_path("osu_bw_openmpi.txt")}).code, 2);
}

}  // namespace
}  // namespace mpicont
