#ifndef RDMM_TEST_UTIL_HPP
#define RDMM_TEST_UTIL_HPP

// Shared helpers for the test suites.  Catch2 assertion macros are not
// thread-safe, so checks made inside rank threads throw instead; run_ranks
// rethrows and the failure surfaces in the owning TEST_CASE.

#include <sstream>
#include <stdexcept>
#include <string>

#define RT_CHECK(...)                                                 \
  do {                                                                \
    if (!(__VA_ARGS__)) {                                             \
      std::ostringstream os_;                                         \
      os_ << "rank-thread check failed: " #__VA_ARGS__ " at "         \
          << __FILE__ << ":" << __LINE__;                             \
      throw std::runtime_error(os_.str());                            \
    }                                                                 \
  } while (0)

#endif  // RDMM_TEST_UTIL_HPP
