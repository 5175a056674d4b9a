#include "aggrank/textio.hpp"

#include <charconv>
#include <cstdio>
#include <ctime>

#include "aggrank/error.hpp"

namespace aggrank::textio {

std::string format_double(double v) {
  char buf[64];
  std::to_chars_result r = std::to_chars(buf, buf + sizeof(buf), v);
  if (r.ec != std::errc{}) throw IoError("number formatting failed");
  return std::string(buf, r.ptr);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  int n = std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  if (n < 0 || n >= static_cast<int>(sizeof(buf))) throw IoError("number formatting failed");
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

}  // namespace aggrank::textio
