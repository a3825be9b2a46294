#include "misim/csv.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace misim::csv {

std::vector<std::string> split(std::string_view line, char sep) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double to_double(std::string_view field) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument("not a number: '" + std::string(field) + "'");
  return v;
}

long long to_int(std::string_view field) {
  long long v = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument("not an integer: '" + std::string(field) + "'");
  return v;
}

std::string format(double v) {
  if (std::isnan(v)) return {};
  return fmt::format("{}", v);
}

std::string format(std::optional<double> v) { return v ? format(*v) : std::string{}; }

}  // namespace misim::csv
