#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace aclql {

/// Fixed 17-significant-digit rendering that parses back to the
/// identical double.
std::string format_double(double value);

/// "[v0,v1,...]" with every element rendered by format_double.
std::string format_array(std::span<const double> values);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace aclql
