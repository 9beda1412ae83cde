#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pnn::cli {

// Runs one command line. Errors are reported on `err` as a single line
// "error: <code>: <message>" and yield a nonzero exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pnn::cli
