#pragma once

#include <ostream>

namespace dkbo {

// Runs every module's invariant/property suite, printing one PASS/FAIL line
// per check. Returns the number of failed checks.
int run_selftest(std::ostream& out);

} // namespace dkbo
