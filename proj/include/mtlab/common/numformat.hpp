#pragma once

#include <string>

namespace mtlab {

// Shortest decimal representation that round-trips the exact double value.
std::string format_double(double v);

// Inverse of format_double; throws std::invalid_argument on garbage.
double parse_double(const std::string& s);

} // namespace mtlab
