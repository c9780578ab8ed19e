#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tgrag {

// Runs the tgrag command line. args excludes the program name. Returns the
// process exit status: 0 success, 1 pipeline error, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace tgrag
