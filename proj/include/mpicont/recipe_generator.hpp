// SPDX-License-Identifier: Apache-2.0

// Singularity/Apptainer definition files as data.
//
// Three templates are provided: an MPICH base image whose libmpi carries the
// soname of the host Cray MPICH, an Open MPI base image from distribution
// packages that builds under proot, and an application image layered on
// either base with the MPI test program, the MPI_Init interposition shim and
// the OSU micro-benchmarks.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "mpicont/error.hpp"
#include "mpicont/text.hpp"

namespace mpicont {

struct RegistryImage {
  std::string reference;
  friend bool operator==(const RegistryImage&, const RegistryImage&) = default;
};

struct LocalImage {
  std::string path;
  friend bool operator==(const LocalImage&, const LocalImage&) = default;
};

using Bootstrap = std::variant<RegistryImage, LocalImage>;

struct FileCopy {
  std::string source;
  std::string destination;
  friend bool operator==(const FileCopy&, const FileCopy&) = default;
};

struct RecipeSpec {
  Bootstrap bootstrap;
  std::vector<FileCopy> files;
  std::vector<std::string> environment;  // one shell line each
  std::vector<std::string> post_steps;   // multi-line blocks, blank line between
  std::optional<std::string> runscript;
  std::map<std::string, std::string> labels;
  int indent = 4;  // section body indentation

  friend bool operator==(const RecipeSpec&, const RecipeSpec&) = default;
};

inline constexpr std::string_view kDefaultBaseImage = "ubuntu:24.04";
inline constexpr std::string_view kTestDir = "/container/test_mpi";
inline constexpr std::string_view kOsuPrefix = "/container/osu";
inline constexpr std::string_view kShimName = "intercept.so";

struct MpichBaseOptions {
  std::string base_image{kDefaultBaseImage};
  std::string mpich_version = "3.4a2";
  std::string install_prefix = "/container/mpi";
  // ${VER} is expanded by the shell inside %post.
  std::string download_url = "http://www.mpich.org/static/downloads/${VER}/mpich-${VER}.tar.gz";
};

struct OpenMpiBaseOptions {
  std::string base_image{kDefaultBaseImage};
  // Privileged commands proot cannot emulate; each is replaced by a link to
  // `stand_in`.
  std::vector<std::string> fake_commands = {"/usr/sbin/groupadd", "/usr/sbin/addgroup", "/bin/chgrp"};
  std::string stand_in = "/bin/true";
};

struct AppOptions {
  std::string base;  // local image path
  bool preload_via_runscript = false;
  std::string osu_version = "7.4";
  // ${OSU_NAME} is expanded by the shell inside %post.
  std::string osu_url = "http://mvapich.cse.ohio-state.edu/download/mvapich/${OSU_NAME}.tar.gz";
};

namespace detail {

inline bool sets_preload(std::string_view line) {
  return line.find("LD_PRELOAD=") != std::string_view::npos;
}

inline void require_word(const std::string& value, std::string_view what) {
  if (value.empty()) throw ContractViolation(std::string(what) + " must not be empty");
  for (char c : value) {
    if (text::is_space(c) || c == '\'' || c == '"' || c == ';' || c == '`' || c == '|' || c == '&') {
      throw ContractViolation(std::string(what) + " contains a shell-unsafe character: " + value);
    }
  }
}

inline std::string shim_path() { return std::string(kTestDir) + "/" + std::string(kShimName); }

inline std::string cleanup_block() {
  return "# Cleanup\n"
         "apt-get autoremove -y\n"
         "apt-get clean && rm -rf /var/lib/apt/lists/*";
}

}  // namespace detail

/// Throws ContractViolation when the recipe cannot be rendered.
inline void validate(const RecipeSpec& r) {
  std::visit(
      [](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, RegistryImage>) {
          if (b.reference.empty()) throw ContractViolation("registry image reference is empty");
        } else {
          if (b.path.empty()) throw ContractViolation("local image path is empty");
        }
      },
      r.bootstrap);
  bool env_preload = false;
  for (const auto& line : r.environment) env_preload = env_preload || detail::sets_preload(line);
  if (env_preload && r.runscript && detail::sets_preload(*r.runscript)) {
    throw ContractViolation("LD_PRELOAD is set in both %environment and %runscript");
  }
  if (r.indent < 0 || r.indent > 16) throw ContractViolation("indent out of range");
}

inline RecipeSpec mpich_base_recipe(const MpichBaseOptions& opt = {}) {
  detail::require_word(opt.mpich_version, "MPICH version");
  detail::require_word(opt.install_prefix, "install prefix");
  detail::require_word(opt.base_image, "base image");
  if (opt.install_prefix.front() != '/') {
    throw ContractViolation("install prefix must be absolute: " + opt.install_prefix);
  }
  const std::string& prefix = opt.install_prefix;

  RecipeSpec r;
  r.bootstrap = RegistryImage{opt.base_image};
  r.indent = 2;
  r.post_steps.push_back(
      "apt-get update && apt-get -y upgrade --no-install-recommends\n"
      "apt-get -y install --no-install-recommends \\\n"
      "        build-essential wget file ca-certificates \\\n"
      "        gfortran");
  r.post_steps.push_back(detail::cleanup_block());
  r.post_steps.push_back("# Installation dir\nmkdir -p " + prefix);
  r.post_steps.push_back(
      "VER=" + opt.mpich_version + "\n"
      "wget -q " + opt.download_url + "\n"
      "tar xf mpich-${VER}.tar.gz && rm mpich-${VER}.tar.gz\n"
      "cd mpich-${VER}\n"
      "sed -i 's/libmpi_so_version=\"0:0:0\"/libmpi_so_version=\"12:0:0\"/g' configure\n"
      "FFLAGS='-fallow-argument-mismatch' \\\n"
      "  ./configure --prefix=" + prefix + " --disable-static \\\n"
      "              --disable-rpath --disable-wrapper-rpath \\\n"
      "              --enable-fast=all,O3 --with-device=ch3 \\\n"
      "              --mandir=/usr/share/man > /dev/null\n"
      "make -j$(getconf _NPROCESSORS_ONLN) install > /dev/null\n"
      "cd .. && rm -rf mpich-${VER}\n"
      "echo \"export PATH=" + prefix + "/bin:\\$PATH\" >> ${SINGULARITY_ENVIRONMENT}\n"
      "echo \"export LD_LIBRARY_PATH=\\${LD_LIBRARY_PATH}:" + prefix + "/lib\" >> \\\n"
      "  ${SINGULARITY_ENVIRONMENT}");
  return r;
}

inline RecipeSpec openmpi_base_recipe(const OpenMpiBaseOptions& opt = {}) {
  detail::require_word(opt.base_image, "base image");
  detail::require_word(opt.stand_in, "stand-in command");
  if (opt.fake_commands.empty()) throw ContractViolation("no privileged commands to fake");
  for (const auto& c : opt.fake_commands) detail::require_word(c, "faked command");

  RecipeSpec r;
  r.bootstrap = RegistryImage{opt.base_image};
  r.indent = 2;
  r.post_steps.push_back(
      "# fake some of the commands not available with proot\n"
      "for f in " + text::join(opt.fake_commands, " ") + "; do\n"
      "    rm -rf $f\n"
      "    ln -s " + opt.stand_in + " $f\n"
      "done");
  r.post_steps.push_back(
      "apt-get update && apt-get -y upgrade --no-install-recommends\n"
      "apt-get -y install --no-install-recommends \\\n"
      "        build-essential wget libopenmpi-dev");
  r.post_steps.push_back(detail::cleanup_block());
  return r;
}

/// Runscript that appends the shim to any preload list already present (for
/// example one installed by an ABI translation wrapper) and then runs the
/// given command, or an interactive shell without one.
inline std::string preload_runscript() {
  return "export LD_PRELOAD=\"${LD_PRELOAD}${LD_PRELOAD:+:}" + detail::shim_path() + "\"\n"
         "\n"
         "if test $# -eq 0 || test -z \"$@\" ; then\n"
         "    bash -norc\n"
         "else\n"
         "    sh -c \"$@\"\n"
         "fi";
}

inline RecipeSpec app_recipe(const AppOptions& opt) {
  detail::require_word(opt.base, "base image path");
  detail::require_word(opt.osu_version, "OSU version");
  const std::string test_dir(kTestDir);

  RecipeSpec r;
  r.bootstrap = LocalImage{opt.base};
  r.files = {{"mpitest.c", test_dir + "/"}, {"intercept.c", test_dir + "/"}};
  if (opt.preload_via_runscript) {
    r.runscript = preload_runscript();
  } else {
    r.environment.push_back("export LD_PRELOAD=\"" + detail::shim_path() + "\"");
  }
  r.post_steps.push_back("apt-get update && apt-get -y upgrade --no-install-recommends");
  r.post_steps.push_back(detail::cleanup_block());
  r.post_steps.push_back("cd " + test_dir + "/");
  r.post_steps.push_back("# Compile mpitest\nmpicc -o mpitest.x mpitest.c");
  r.post_steps.push_back("# Compile the intercept library\n"
                         "mpicc -shared -fPIC -ldl -o " + std::string(kShimName) + " intercept.c");
  r.post_steps.push_back(
      "# Build OSU benchmarks\n"
      "OSU_NAME=osu-micro-benchmarks-" + opt.osu_version + "\n"
      "wget -q " + opt.osu_url + "\n"
      "tar xf ${OSU_NAME}.tar.gz\n"
      "cd ${OSU_NAME}\n"
      "./configure --prefix=" + std::string(kOsuPrefix) + " CC=$(which mpicc) CXX=$(which mpicxx)\n"
      "make -j$(getconf _NPROCESSORS_ONLN) install\n"
      "cd ..\n"
      "rm -rf ${OSU_NAME} && rm ${OSU_NAME}.tar.gz");
  return r;
}

/// Definition-file text. Sections appear only when non-empty, in the order
/// header, %files, %environment, %post, %runscript, %labels.
inline std::string render_definition(const RecipeSpec& r) {
  validate(r);
  const std::string pad(static_cast<std::size_t>(r.indent), ' ');
  auto body = [&](std::string& out, std::string_view block) {
    for (auto line : text::split_lines(block)) {
      if (!line.empty()) out += pad;
      out += line;
      out += '\n';
    }
  };

  std::string out;
  if (const auto* reg = std::get_if<RegistryImage>(&r.bootstrap)) {
    out += "Bootstrap: docker\nFrom: " + reg->reference + "\n";
  } else {
    out += "Bootstrap: localimage\nFrom: " + std::get<LocalImage>(r.bootstrap).path + "\n";
  }
  if (!r.files.empty()) {
    out += "\n%files\n";
    for (const auto& f : r.files) body(out, f.source + " " + f.destination);
  }
  if (!r.environment.empty()) {
    out += "\n%environment\n";
    for (const auto& line : r.environment) body(out, line);
  }
  if (!r.post_steps.empty()) {
    out += "\n%post\n";
    for (std::size_t i = 0; i < r.post_steps.size(); ++i) {
      if (i > 0) out += '\n';
      body(out, r.post_steps[i]);
    }
  }
  if (r.runscript && !r.runscript->empty()) {
    out += "\n%runscript\n";
    body(out, *r.runscript);
  }
  if (!r.labels.empty()) {
    out += "\n%labels\n";
    for (const auto& [k, v] : r.labels) body(out, k + " " + v);
  }
  return out;
}

}  // namespace mpicont
