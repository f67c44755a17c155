#include "pobds/grn_model.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pobds {

GrnModel::GrnModel(std::vector<std::vector<int>> interactions, std::vector<double> biases,
                   double noise_intensity)
    : d_(static_cast<int>(interactions.size())), p_(noise_intensity) {
  if (d_ < 1 || d_ > BooleanState::kMaxDim)
    throw std::invalid_argument("GrnModel: gene count out of range");
  if (static_cast<int>(biases.size()) != d_)
    throw std::invalid_argument("GrnModel: bias vector length mismatch");
  if (!(p_ >= 0.0 && p_ <= 0.5))
    throw std::invalid_argument("GrnModel: noise intensity must lie in [0, 1/2]");

  a_.assign(static_cast<std::size_t>(d_) * d_, 0);
  activators_.assign(d_, 0);
  inhibitors_.assign(d_, 0);
  thresholds_.assign(d_, 0);
  for (int i = 0; i < d_; ++i) {
    if (static_cast<int>(interactions[i].size()) != d_)
      throw std::invalid_argument("GrnModel: interaction matrix must be d x d");
    if (biases[i] != 0.5 && biases[i] != -0.5)
      throw std::invalid_argument("GrnModel: biases must be +1/2 or -1/2");
    for (int j = 0; j < d_; ++j) {
      const int a = interactions[i][j];
      if (a < -1 || a > 1)
        throw std::invalid_argument("GrnModel: interactions must be -1, 0 or +1");
      a_[static_cast<std::size_t>(i) * d_ + j] = static_cast<std::int8_t>(a);
      if (a == 1) activators_[i] |= std::uint64_t{1} << j;
      if (a == -1) inhibitors_[i] |= std::uint64_t{1} << j;
    }
    // sum + b > 0 with integer sum and b = +-1/2 reduces to sum >= 1 (b < 0)
    // or sum >= 0 (b > 0).
    thresholds_[i] = biases[i] < 0.0 ? 1 : 0;
  }
  b_ = std::move(biases);
}

std::vector<std::vector<int>> GrnModel::interaction_matrix() const {
  std::vector<std::vector<int>> out(d_, std::vector<int>(d_));
  for (int i = 0; i < d_; ++i)
    for (int j = 0; j < d_; ++j) out[i][j] = a_[static_cast<std::size_t>(i) * d_ + j];
  return out;
}

GrnModel GrnModel::with_interaction(int target, int source, int value) const {
  if (target < 0 || target >= d_ || source < 0 || source >= d_)
    throw std::invalid_argument("GrnModel: interaction index out of range");
  auto a = interaction_matrix();
  a[target][source] = value;
  return GrnModel(std::move(a), b_, p_);
}

GrnModel GrnModel::with_noise(double noise_intensity) const {
  return GrnModel(interaction_matrix(), b_, noise_intensity);
}

void GrnModel::check_state(const BooleanState& x) const {
  if (x.dim() != d_) throw std::invalid_argument("GrnModel: state dimension mismatch");
}

BooleanState GrnModel::network_function(const BooleanState& x) const {
  check_state(x);
  const std::uint64_t w = x.encode();
  std::uint64_t out = 0;
  for (int i = 0; i < d_; ++i) {
    const int sum = std::popcount(w & activators_[i]) - std::popcount(w & inhibitors_[i]);
    if (sum >= thresholds_[i]) out |= std::uint64_t{1} << i;
  }
  return {out, d_};
}

double GrnModel::noise_kernel(int hamming) const {
  if (hamming < 0 || hamming > d_)
    throw std::invalid_argument("GrnModel: Hamming distance out of range");
  if (p_ == 0.0) return hamming == 0 ? 1.0 : 0.0;
  return std::pow(p_, hamming) * std::pow(1.0 - p_, d_ - hamming);
}

double GrnModel::log_noise_kernel(int hamming) const {
  if (hamming < 0 || hamming > d_)
    throw std::invalid_argument("GrnModel: Hamming distance out of range");
  if (p_ == 0.0)
    return hamming == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return hamming * std::log(p_) + (d_ - hamming) * std::log1p(-p_);
}

std::vector<double> GrnModel::kernel_table() const {
  std::vector<double> table(d_ + 1);
  for (int h = 0; h <= d_; ++h) table[h] = noise_kernel(h);
  return table;
}

double GrnModel::transition_probability(const BooleanState& next,
                                        const BooleanState& prev) const {
  check_state(next);
  return noise_kernel(network_function(prev).hamming_distance(next));
}

double GrnModel::log_transition_probability(const BooleanState& next,
                                            const BooleanState& prev) const {
  check_state(next);
  return log_noise_kernel(network_function(prev).hamming_distance(next));
}

BooleanState GrnModel::sample_transition(const BooleanState& prev, Rng& rng) const {
  std::uint64_t w = network_function(prev).encode();
  for (int g = 0; g < d_; ++g)
    if (rng.uniform01() < p_) w ^= std::uint64_t{1} << g;
  return {w, d_};
}

}  // namespace pobds
