#pragma once

#include <string>
#include <vector>

namespace nvtk::cli {

// Entry point shared by the nvtk binary and the test suites.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

} // namespace nvtk::cli
