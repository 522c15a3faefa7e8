#pragma once

#include <ostream>

namespace revdiff {

// Exit codes: 0 ok, 1 invariant failure, 2 config or capacity error, 3 IO error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace revdiff
