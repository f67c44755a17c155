#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace pobds {

// Deterministic random source. The engine (std::mt19937_64) is bit-exact
// across platforms; all distributions are implemented here rather than via
// std:: distribution objects, whose algorithms the standard leaves
// unspecified. Streams are therefore reproducible given a seed.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer on [0, n). Rejection sampling, unbiased.
  std::uint64_t uniform_below(std::uint64_t n);

  bool bernoulli(double p) { return uniform01() < p; }

  double normal();
  double gamma(double shape, double scale);
  std::uint64_t poisson(double mean);

  // Gamma-Poisson mixture: exact NB(mean, inverse dispersion phi) for any
  // real phi > 0.
  std::uint64_t negative_binomial(double mean, double inv_dispersion) {
    return poisson(gamma(inv_dispersion, mean / inv_dispersion));
  }

  // splitmix64 finalizer; used to derive independent substream seeds.
  static std::uint64_t mix(std::uint64_t z);
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return mix(master ^ mix(stream + 0x632be59bd9b4e019ull));
  }

private:
  std::uint64_t poisson_knuth(double mean);
  std::uint64_t poisson_ptrs(double mean);

  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

// Inclusive prefix sum of nonnegative weights.
std::vector<double> cumulative_sum(std::span<const double> weights);

// Index draw from the categorical distribution given its inclusive prefix
// sums: first index i with cum[i] > u * cum.back(). Zero-weight entries are
// never selected; ties resolve in CDF order.
std::size_t sample_cumulative(std::span<const double> cumulative, double u01);

}  // namespace pobds
