#pragma once

// Named invariant checks. Every module invariant maps to at least one entry;
// `unitr check` and the test suite run the same registry.

#include <functional>
#include <string>
#include <vector>

namespace unitr::harness {

class Outcome {
 public:
  // Records a failure message when `ok` is false; returns `ok`.
  bool require(bool ok, const std::string& what);
  void note(const std::string& text);

  bool passed() const { return failures_.empty(); }
  std::string detail() const;

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

struct Check {
  std::string name;
  std::function<Outcome()> run;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

const std::vector<Check>& invariant_checks();

// Runs one check, turning exceptions into failures.
CheckResult run_check(const Check& check);

// Runs the checks whose name contains `filter` (all when empty), reporting
// each result to `on_result` as it finishes.
std::vector<CheckResult> run_checks(const std::vector<Check>& checks, const std::string& filter = {},
                                    const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace unitr::harness
