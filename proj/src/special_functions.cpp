#include "pobds/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pobds {

double digamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("digamma: argument must be positive");
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  // psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv;
  result -= inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 -
                                    inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return result;
}

double log_sum_exp(const double* values, int count) {
  double max_val = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) max_val = std::max(max_val, values[i]);
  if (!std::isfinite(max_val)) return max_val;
  double sum = 0.0;
  for (int i = 0; i < count; ++i) sum += std::exp(values[i] - max_val);
  return max_val + std::log(sum);
}

}  // namespace pobds
