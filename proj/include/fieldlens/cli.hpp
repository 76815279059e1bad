#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fieldlens {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on a usage error and 2 on a runtime error; messages go to `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fieldlens
