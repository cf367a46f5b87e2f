#pragma once

#include <string>
#include <vector>

namespace hdl {

inline constexpr const char* kToolVersion = "0.1.0";

// Entry point of the `hdl` executable. Returns the process exit code:
// 0 on success, 2 for a domain error, 64 for a usage error, 1 otherwise.
// Failures print one JSON error record on stderr.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace hdl
