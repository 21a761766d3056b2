#pragma once

#include <functional>
#include <string>
#include <vector>

namespace filmrec::cli {

enum ExitCode : int {
  kOk = 0,
  kSelftestFailed = 1,
  kUsage = 2,
  kIo = 3,
  kNumeric = 4,
};

// Parses argv-style arguments (without the program name) and runs the
// command. Never throws; failures map to ExitCode values.
int run_cli(const std::vector<std::string>& args);

// Runs fn(i) for i in [0, n) on up to `jobs` threads (0 = hardware
// concurrency). The first exception is rethrown after all workers stop.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

// Progress and diagnostics go to stderr unless FILMREC_QUIET is set.
void log(const std::string& line);

struct SelftestResult {
  std::string suite;
  int checks = 0;
  std::vector<std::string> failures;
  double seconds = 0.0;
};

std::vector<std::string> selftest_suites();
// `inject` names suites whose tolerances are forced negative so every
// numeric check in them fails.
std::vector<SelftestResult> run_selftest(const std::vector<std::string>& inject);

}  // namespace filmrec::cli
