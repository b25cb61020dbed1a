#pragma once

#include <string>
#include <vector>

namespace alf {

// Entry point behind main(). `args` excludes the program name.
// Exit codes: 0 success, 2 usage error, 3 bad config, 4 runtime failure.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace alf
