#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "pobds/boolean_state.hpp"
#include "pobds/grn_model.hpp"
#include "pobds/rnaseq_model.hpp"
#include "pobds/state_distribution.hpp"

namespace pobds {

struct DegenerateObservationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Diagonal of the update matrix T_k(Y_k): per-state observation likelihoods
// stored as exp(loglik - max_log) with the shared offset kept separately, so
// the raw likelihood scale never underflows.
struct UpdateDiagonal {
  std::vector<double> scaled;
  double max_log = 0.0;

  static UpdateDiagonal build(const RnaSeqModel& obs, const ReadCountVector& y, int dim);
};

// Dense 2^d x 2^d column-stochastic transition matrix, column-major.
// Guarded to d <= 14.
class TransitionMatrix {
public:
  static TransitionMatrix build(const GrnModel& model);

  int dim() const { return d_; }
  std::size_t size() const { return n_; }
  double operator()(std::size_t row, std::size_t col) const { return m_[col * n_ + row]; }

  void apply(std::span<const double> in, std::span<double> out) const;
  void apply_transpose(std::span<const double> in, std::span<double> out) const;

private:
  TransitionMatrix(int dim, std::vector<double> m)
      : d_(dim), n_(std::size_t{1} << dim), m_(std::move(m)) {}

  int d_;
  std::size_t n_;
  std::vector<double> m_;
};

// Matrix-free transition products computed from the noise kernel: push the
// mass through f, then convolve with the i.i.d. per-bit flip kernel
// [[1-p, p], [p, 1-p]] one bit at a time (O(d 2^d) per product). Exactly the
// same linear map as the dense matrix.
class TransitionOperator {
public:
  explicit TransitionOperator(const GrnModel& model);

  int dim() const { return d_; }
  std::size_t size() const { return f_image_.size(); }

  void apply(std::span<const double> in, std::span<double> out) const;
  void apply_transpose(std::span<const double> in, std::span<double> out) const;

private:
  void convolve_noise(std::span<double> v) const;

  int d_;
  double p_;
  std::vector<std::uint32_t> f_image_;  // f_image_[j] = encode(f(x^j))
};

enum class BkfMethod { Auto, DenseMatrix, KernelOperator };

struct FilterStep {
  StateDistribution predicted;  // Pi_{k|k-1}
  StateDistribution posterior;  // Pi_{k|k}
  double log_beta_norm;         // log || beta_k ||_1 = log p(Y_k | Y_{1:k-1})
  BooleanState estimate;
  double mse;
};

struct FilterTrace {
  StateDistribution initial;     // Pi_{0|0}
  std::vector<FilterStep> steps; // k = 1..T
  double log_likelihood = 0.0;   // sum of log_beta_norm
};

struct SmootherTrace {
  FilterTrace filter;
  std::vector<StateDistribution> smoothed;  // Pi_{k|T}, k = 0..T
  std::vector<StateDistribution> backward;  // Delta_{s|s} (normalized), s = 0..T
  std::vector<BooleanState> estimates;      // k = 1..T
  std::vector<double> mses;                 // k = 1..T
};

// One predict/update/normalize step. Returns the posterior and
// log || beta_k ||_1; an (numerically) impossible observation raises
// DegenerateObservationError.
std::pair<StateDistribution, double> bkf_step(const TransitionMatrix& m,
                                              const UpdateDiagonal& update,
                                              const StateDistribution& prior);
std::pair<StateDistribution, double> bkf_step(const TransitionOperator& m,
                                              const UpdateDiagonal& update,
                                              const StateDistribution& prior);
std::pair<StateDistribution, double> bkf_step(const TransitionOperator& m,
                                              const RnaSeqModel& obs,
                                              const ReadCountVector& y,
                                              const StateDistribution& prior);

FilterTrace run_bkf(const GrnModel& model, const RnaSeqModel& obs,
                    std::span<const ReadCountVector> ys, const StateDistribution& pi0,
                    BkfMethod method = BkfMethod::Auto);

SmootherTrace run_bks(const GrnModel& model, const RnaSeqModel& obs,
                      std::span<const ReadCountVector> ys, const StateDistribution& pi0,
                      BkfMethod method = BkfMethod::Auto);

// Lower-level recursions over precomputed update diagonals (one per step).
FilterTrace run_bkf(const TransitionOperator& m, std::span<const UpdateDiagonal> updates,
                    const StateDistribution& pi0);
SmootherTrace run_bks(const TransitionOperator& m, std::span<const UpdateDiagonal> updates,
                      const StateDistribution& pi0);

}  // namespace pobds
