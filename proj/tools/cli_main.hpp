#pragma once

#include <string>
#include <vector>

namespace bottcher {

/// Entry point of the command-line tool. Returns 0 on success, 1 when a
/// requested check fails, 2 on usage errors.
int cli_main(const std::vector<std::string>& args);

}  // namespace bottcher
