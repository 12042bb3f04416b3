#pragma once

#include <string>

namespace vacl {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace vacl
