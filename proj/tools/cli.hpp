#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hmmfit::cli {

/// Resolved command-line configuration, echoed under "config" in JSON output.
struct RunConfig {
  std::string command;
  std::string data;    // tyt, a preset name, a file path, or "-"/empty for stdin
  std::string states;  // m, or for `select` a range such as 1-4 or 1,2,3
  std::string methods;
  std::string modes = "none,G,H,GH";
  double level = 0.95;
  int B = 200;
  int reps = 200;
  std::uint64_t seed = 1;
  std::string mode = "GH";
  std::string format = "text";
  std::string output;
  int threads = 0;
  bool serial = false;
  std::string init_from;
  std::string preset = "sim2";
  std::size_t length = 2000;
  int horizon = 1;
  int x_max = -1;
  std::string param;
  std::vector<std::string> fix;
  bool clip = false;
  std::string initial = "stationary";
  int max_iter = 500;
};

/// Entry point shared by the executable and the integration tests. Returns
/// the process exit code: 0 on success, 1 for a failed computation, 2 for
/// invalid usage.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace hmmfit::cli
