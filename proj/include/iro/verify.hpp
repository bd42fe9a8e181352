#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iro::verify {

/// One checked property with its measured evidence.
struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;  // measured values, human-readable
};

struct SuiteReport {
  std::vector<PropertyResult> results;

  bool all_pass() const {
    for (const PropertyResult& r : results)
      if (!r.pass) return false;
    return true;
  }
};

/// Registered suite selectors, in execution order ("all" is implicit).
std::vector<std::string> suite_names();

/**
 * Runs one named suite, or every suite for "all". Each suite re-derives its
 * expectations from the exact oracles on seeded random instances, so a pass
 * is evidence about the implementation, not about stored constants.
 * Throws InvalidConfig for an unknown selector.
 */
SuiteReport run_suite(const std::string& selector, std::uint64_t seed = 0);

}  // namespace iro::verify
