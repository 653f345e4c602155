#pragma once

#include <ostream>

namespace taskgrasp::cli {

// Exit codes: 0 ok, 2 input/config error, 3 no result, 4 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace taskgrasp::cli
