#pragma once

#include <string>

namespace aggrank::textio {

// Shortest round-trip decimal form, locale-independent.
std::string format_double(double v);

// Fixed-point with the given number of fractional digits.
std::string format_fixed(double v, int digits);

// RFC 3339 UTC timestamp of the current wall clock.
std::string utc_timestamp();

}  // namespace aggrank::textio
