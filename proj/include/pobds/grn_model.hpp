#pragma once

#include <cstdint>
#include <vector>

#include "pobds/boolean_state.hpp"
#include "pobds/random.hpp"

namespace pobds {

// Threshold gene regulatory network with Bernoulli bit-flip process noise.
// Gene i activates iff sum_j a_ij x(j) + b_i > 0 with a_ij in {-1,0,+1} and
// b_i in {-1/2,+1/2}; the next state is f(x) xor n with n(i) ~ Bernoulli(p)
// i.i.d. Immutable after construction.
class GrnModel {
public:
  GrnModel(std::vector<std::vector<int>> interactions, std::vector<double> biases,
           double noise_intensity);

  int dim() const { return d_; }
  double noise_intensity() const { return p_; }
  int interaction(int target, int source) const { return a_[static_cast<std::size_t>(target) * d_ + source]; }
  double bias(int target) const { return b_[target]; }

  std::vector<std::vector<int>> interaction_matrix() const;
  GrnModel with_interaction(int target, int source, int value) const;
  GrnModel with_noise(double noise_intensity) const;

  // The network function f.
  BooleanState network_function(const BooleanState& x) const;

  // P(X_k = next | X_{k-1} = prev) = p^h (1-p)^(d-h), h = |f(prev) xor next|.
  double transition_probability(const BooleanState& next, const BooleanState& prev) const;
  double log_transition_probability(const BooleanState& next, const BooleanState& prev) const;

  // Noise kernel as a function of Hamming distance h from f(prev).
  double noise_kernel(int hamming) const;
  double log_noise_kernel(int hamming) const;
  // kernel_table()[h] = p^h (1-p)^(d-h), h = 0..d.
  std::vector<double> kernel_table() const;

  // Draw f(prev) xor n with fresh i.i.d. Bernoulli(p) noise bits.
  BooleanState sample_transition(const BooleanState& prev, Rng& rng) const;

private:
  void check_state(const BooleanState& x) const;

  int d_;
  std::vector<std::int8_t> a_;  // row-major, a_[i*d + j]
  std::vector<double> b_;
  double p_;
  // Row i as activator/inhibitor bit masks plus the integer threshold the
  // signed input sum must reach: f_i = 1 iff pop(x & act) - pop(x & inh) >= thr.
  std::vector<std::uint64_t> activators_;
  std::vector<std::uint64_t> inhibitors_;
  std::vector<int> thresholds_;
};

}  // namespace pobds
