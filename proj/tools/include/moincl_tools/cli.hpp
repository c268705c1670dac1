#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace moincl::cli {

/// Exit status: 0 on success, 1 on a runtime failure, 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Default output root: $MOINCL_OUT, else "moincl_out".
std::string default_output_root();

}  // namespace moincl::cli
