#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace expertroute {

/// Index of the largest element; ties resolve to the lowest index.
/// Empty input returns 0.
std::size_t argmax(std::span<const double> values) noexcept;

/// Numerically stable softmax (max-subtracted) of values / temperature.
std::vector<double> softmax(std::span<const double> values, double temperature = 1.0);

}  // namespace expertroute
