#pragma once

#include <cstdint>
#include <vector>

#include "pobds/boolean_state.hpp"
#include "pobds/random.hpp"

namespace pobds {

// One vector of per-transcript read counts Y_k.
class ReadCountVector {
public:
  ReadCountVector() = default;
  explicit ReadCountVector(std::vector<std::uint32_t> counts) : counts_(std::move(counts)) {}

  int dim() const { return static_cast<int>(counts_.size()); }
  std::uint32_t operator[](int gene) const { return counts_[gene]; }
  const std::vector<std::uint32_t>& counts() const { return counts_; }

private:
  std::vector<std::uint32_t> counts_;
};

// Per-gene log p(Y_k(j) | X_k(j) = bit) evaluated once per observation and
// reused across states/particles. entry(j, bit) with bit in {0, 1}.
class GeneLogLikTable {
public:
  GeneLogLikTable(int dim, std::vector<double> values)
      : d_(dim), values_(std::move(values)) {}

  int dim() const { return d_; }
  double entry(int gene, int bit) const { return values_[2 * gene + bit]; }

  double state_log_likelihood(const BooleanState& x) const {
    double ll = 0.0;
    const std::uint64_t w = x.encode();
    for (int g = 0; g < d_; ++g) ll += values_[2 * g + ((w >> g) & 1u)];
    return ll;
  }

private:
  int d_;
  std::vector<double> values_;  // [2*j + bit]
};

// Negative-binomial RNA-seq observation channel. Counts are conditionally
// independent across transcripts given the Boolean state, with mean
// lambda_j(x) = s * exp(mu + delta_j * x(j)) and inverse dispersion phi_j.
class RnaSeqModel {
public:
  RnaSeqModel(double depth, double baseline, std::vector<double> differential,
              std::vector<double> inverse_dispersion);

  int dim() const { return d_; }
  double depth() const { return s_; }
  double baseline() const { return mu_; }
  double differential(int gene) const { return delta_[gene]; }
  double inverse_dispersion(int gene) const { return phi_[gene]; }
  const std::vector<double>& differentials() const { return delta_; }
  const std::vector<double>& inverse_dispersions() const { return phi_; }

  // lambda_j for the given activity bit.
  double mean_count(int gene, bool active) const;

  // log NB pmf of count y at transcript `gene` under activity bit `active`;
  // all arithmetic in log space via lgamma.
  double log_pmf(int gene, std::uint32_t y, bool active) const;

  double log_likelihood(const ReadCountVector& y, const BooleanState& x) const;

  GeneLogLikTable loglik_table(const ReadCountVector& y) const;

  ReadCountVector sample_observation(const BooleanState& x, Rng& rng) const;

private:
  int d_;
  double s_;
  double mu_;
  std::vector<double> delta_;
  std::vector<double> phi_;
};

}  // namespace pobds
