#pragma once

#include <string>
#include <vector>

namespace hass {

/// Entry point of the `hass` tool. `args` excludes the program name.
/// Returns the process exit status; diagnostics go to stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace hass
