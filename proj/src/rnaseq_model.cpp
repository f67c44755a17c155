#include "pobds/rnaseq_model.hpp"

#include <cmath>
#include <stdexcept>

namespace pobds {

RnaSeqModel::RnaSeqModel(double depth, double baseline, std::vector<double> differential,
                         std::vector<double> inverse_dispersion)
    : d_(static_cast<int>(differential.size())),
      s_(depth),
      mu_(baseline),
      delta_(std::move(differential)),
      phi_(std::move(inverse_dispersion)) {
  if (d_ < 1 || d_ > BooleanState::kMaxDim)
    throw std::invalid_argument("RnaSeqModel: gene count out of range");
  if (static_cast<int>(phi_.size()) != d_)
    throw std::invalid_argument("RnaSeqModel: dispersion vector length mismatch");
  if (!(s_ > 0.0)) throw std::invalid_argument("RnaSeqModel: sequencing depth must be positive");
  if (!(mu_ >= 0.0)) throw std::invalid_argument("RnaSeqModel: baseline must be nonnegative");
  for (int j = 0; j < d_; ++j) {
    if (!(delta_[j] > 0.0))
      throw std::invalid_argument("RnaSeqModel: differential expression must be positive");
    if (!(phi_[j] > 0.0))
      throw std::invalid_argument("RnaSeqModel: inverse dispersion must be positive");
  }
}

double RnaSeqModel::mean_count(int gene, bool active) const {
  if (gene < 0 || gene >= d_) throw std::out_of_range("RnaSeqModel: gene index out of range");
  return s_ * std::exp(mu_ + (active ? delta_[gene] : 0.0));
}

double RnaSeqModel::log_pmf(int gene, std::uint32_t y, bool active) const {
  const double lambda = mean_count(gene, active);
  const double phi = phi_[gene];
  const double yr = static_cast<double>(y);
  return std::lgamma(yr + phi) - std::lgamma(yr + 1.0) - std::lgamma(phi) +
         yr * (std::log(lambda) - std::log(lambda + phi)) +
         phi * (std::log(phi) - std::log(lambda + phi));
}

double RnaSeqModel::log_likelihood(const ReadCountVector& y, const BooleanState& x) const {
  if (y.dim() != d_ || x.dim() != d_)
    throw std::invalid_argument("RnaSeqModel: dimension mismatch");
  double ll = 0.0;
  for (int j = 0; j < d_; ++j) ll += log_pmf(j, y[j], x.bit(j));
  return ll;
}

GeneLogLikTable RnaSeqModel::loglik_table(const ReadCountVector& y) const {
  if (y.dim() != d_) throw std::invalid_argument("RnaSeqModel: dimension mismatch");
  std::vector<double> values(2 * static_cast<std::size_t>(d_));
  for (int j = 0; j < d_; ++j) {
    values[2 * j + 0] = log_pmf(j, y[j], false);
    values[2 * j + 1] = log_pmf(j, y[j], true);
  }
  return {d_, std::move(values)};
}

ReadCountVector RnaSeqModel::sample_observation(const BooleanState& x, Rng& rng) const {
  if (x.dim() != d_) throw std::invalid_argument("RnaSeqModel: dimension mismatch");
  std::vector<std::uint32_t> counts(d_);
  for (int j = 0; j < d_; ++j) {
    counts[j] = static_cast<std::uint32_t>(
        rng.negative_binomial(mean_count(j, x.bit(j)), phi_[j]));
  }
  return ReadCountVector(std::move(counts));
}

}  // namespace pobds
