#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "pobds/boolean_state.hpp"

namespace pobds {

struct DegenerateDistributionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Probability (or unnormalized mass) vector over the 2^d states in canonical
// encoding order.
class StateDistribution {
public:
  explicit StateDistribution(int dim)
      : dim_(check_dim(dim)), values_(std::size_t{1} << dim, 0.0) {}

  static StateDistribution uniform(int dim) {
    StateDistribution out(dim);
    const double w = 1.0 / static_cast<double>(out.values_.size());
    for (double& v : out.values_) v = w;
    out.normalized_ = true;
    return out;
  }

  static StateDistribution delta(const BooleanState& x) {
    StateDistribution out(x.dim());
    out.values_[x.encode()] = 1.0;
    out.normalized_ = true;
    return out;
  }

  static StateDistribution from_values(int dim, std::vector<double> values) {
    StateDistribution out(dim);
    if (values.size() != out.values_.size())
      throw std::invalid_argument("StateDistribution: wrong value count");
    for (const double v : values)
      if (!(v >= 0.0)) throw std::invalid_argument("StateDistribution: negative entry");
    out.values_ = std::move(values);
    return out;
  }

  int dim() const { return dim_; }
  std::size_t size() const { return values_.size(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) {
    normalized_ = false;
    return values_[i];
  }

  std::span<const double> values() const { return values_; }
  bool normalized() const { return normalized_; }

  // Divides by the L1 norm and returns it. Degenerate (zero or non-finite)
  // mass raises rather than silently producing garbage.
  double normalize() {
    double norm = 0.0;
    for (const double v : values_) norm += v;
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw DegenerateDistributionError("StateDistribution: cannot normalize zero/non-finite mass");
    for (double& v : values_) v /= norm;
    normalized_ = true;
    return norm;
  }

  // Posterior mean per gene: (A * Pi)_g = sum over states with gene g active.
  // Clamped to [0, 1] against roundoff so binarization stays in contract.
  std::vector<double> mean() const {
    std::vector<double> m(dim_, 0.0);
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (values_[i] == 0.0) continue;
      for (int g = 0; g < dim_; ++g)
        if ((i >> g) & 1u) m[g] += values_[i];
    }
    for (double& v : m) v = std::min(std::max(v, 0.0), 1.0);
    return m;
  }

private:
  static int check_dim(int dim) {
    if (dim < 1 || dim > 20)
      throw std::invalid_argument("StateDistribution: dimension must be in [1, 20]");
    return dim;
  }

  int dim_;
  std::vector<double> values_;
  bool normalized_ = false;
};

}  // namespace pobds
