#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace grounding::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidInput = 2;

// Runs one command line (without the program name). Reports go to `out`,
// logs and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Worker count from GROUND_THREADS, else the machine's parallelism.
std::size_t worker_count();

// Calls body(i) for i in [0, n) on up to `workers` threads. If any call throws,
// the exception of the smallest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace grounding::cli
