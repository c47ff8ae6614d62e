// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Usage: unitr_acceptance [work_dir] [criterion-filter]

#include <cstdio>
#include <string>

#include "unitr/harness/acceptance.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path work = argc > 1 ? argv[1] : "acceptance_work";
  const std::string filter = argc > 2 ? argv[2] : "";
  int failed = 0, ran = 0;
  unitr::harness::run_checks(unitr::harness::acceptance_criteria(work), filter,
                             [&](const unitr::harness::CheckResult& r) {
                               ++ran;
                               if (!r.passed) ++failed;
                               std::printf("[%s] criterion %s (%.1f s): %s\n", r.passed ? "PASS" : "FAIL",
                                           r.name.c_str(), r.seconds, r.detail.c_str());
                               std::fflush(stdout);
                             });
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
