#pragma once

#include <string>
#include <vector>

namespace ebcbf {

/// Entry point of the `ebcbf` tool. Returns the process exit status:
/// 0 ok, 1 input error, 2 numerical error, 3 infeasibility or degeneracy.
int run_command(int argc, const char* const* argv);
int run_command(const std::vector<std::string>& args);

}  // namespace ebcbf
