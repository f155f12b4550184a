#include "expertroute/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace expertroute {

std::size_t argmax(std::span<const double> values) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<double> softmax(std::span<const double> values, double temperature) {
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  const double top = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp((values[i] - top) / temperature);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

}  // namespace expertroute
