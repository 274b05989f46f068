#pragma once

#include <string>
#include <vector>

namespace vtnet::cli {

// Parses the verb and options, runs the matching pipeline operation, and
// returns the process exit status: 0 on success, 1 on a domain error (message
// on stderr), 2 on a usage error (usage text emitted).
int dispatch(int argc, const char* const* argv);

// Test convenience: args exclude the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace vtnet::cli
