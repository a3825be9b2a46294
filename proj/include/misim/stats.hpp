#pragma once

#include <span>
#include <vector>

namespace misim::stats {

[[nodiscard]] double normal_cdf(double x);
[[nodiscard]] double normal_quantile(double p);

[[nodiscard]] double mean(std::span<const double> x);
// Sample variance (n - 1 denominator); 0 for fewer than two values.
[[nodiscard]] double variance(std::span<const double> x);
[[nodiscard]] double sd(std::span<const double> x);

// Quantile with linear interpolation between order statistics (R type 7).
// Copies its input.
[[nodiscard]] double quantile(std::span<const double> x, double p);
// Several quantiles from one sort.
[[nodiscard]] std::vector<double> quantiles(std::span<const double> x,
                                            std::span<const double> probs);

}  // namespace misim::stats
