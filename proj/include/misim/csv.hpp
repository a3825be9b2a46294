#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace misim::csv {

// Splits one line on commas. No quoting: every file written here is
// plain numeric or identifier text.
[[nodiscard]] std::vector<std::string> split(std::string_view line, char sep = ',');
[[nodiscard]] double to_double(std::string_view field);
[[nodiscard]] long long to_int(std::string_view field);

// Shortest text that round-trips the double; "" for nullopt/NaN.
[[nodiscard]] std::string format(double v);
[[nodiscard]] std::string format(std::optional<double> v);

}  // namespace misim::csv
