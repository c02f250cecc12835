#pragma once

#include <array>
#include <charconv>
#include <string>

namespace phev::detail {

// Shortest representation that parses back to the same double.
inline std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ec == std::errc{} ? ptr : buf.data());
}

}  // namespace phev::detail
