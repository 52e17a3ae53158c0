#pragma once

#include <ostream>

namespace cflow {

/// Runs one CLI subcommand. Returns 0 on success, 1 on runtime failure and
/// 2 on usage or configuration errors; errors go to `err` with the first line
/// `error: <category>: <detail>`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cflow
