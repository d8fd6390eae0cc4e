#include "aclql/format.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace aclql {

std::string format_double(double value) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument("cannot serialize non-finite value");
  }
  char buf[40];
  int n = std::snprintf(buf, sizeof(buf), "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string format_array(std::span<const double> values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  out += ']';
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace aclql
