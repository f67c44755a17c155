#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pobds/boolean_state.hpp"
#include "pobds/grn_model.hpp"
#include "pobds/random.hpp"
#include "pobds/rnaseq_model.hpp"
#include "pobds/state_distribution.hpp"

namespace pobds {

struct ApfDegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParticleEnsemble {
  int dim = 0;
  std::vector<BooleanState> particles;
  std::vector<double> weights;  // normalized

  int size() const { return static_cast<int>(particles.size()); }
};

// Distinct particles with aggregated weights, ordered by canonical encoding.
struct UniqueEnsemble {
  int dim = 0;
  std::vector<BooleanState> particles;
  std::vector<double> weights;
  std::vector<std::uint32_t> unique_of_raw;   // raw index -> unique index
  std::vector<std::uint32_t> multiplicities;  // per unique particle

  int size() const { return static_cast<int>(particles.size()); }
};

UniqueEnsemble compact(const ParticleEnsemble& ensemble);

enum class ResamplingScheme { Multinomial, Systematic };

struct ApfOptions {
  ResamplingScheme resampling = ResamplingScheme::Multinomial;
  // Initial distribution for X_0; uniform over {0,1}^d when absent.
  std::optional<StateDistribution> initial;
};

struct ApfStepResult {
  ParticleEnsemble ensemble;
  std::vector<double> log_first_stage;  // log V_{k,i}, unnormalized
  double log_beta_hat = 0.0;            // log || beta_hat_k ||_1
  std::vector<double> mean;             // z_k
};

// One auxiliary-particle-filter step: look-ahead first-stage weights at the
// predicted modes f(x_{k-1,i}), categorical ancestor draw, fresh-noise
// propagation, and second-stage likelihood-ratio correction. Raises
// ApfDegeneracyError when every first-stage weight vanishes.
ApfStepResult apf_bkf_step(const GrnModel& model, const RnaSeqModel& obs,
                           const ReadCountVector& y, const ParticleEnsemble& ensemble,
                           Rng& rng,
                           ResamplingScheme resampling = ResamplingScheme::Multinomial);

struct ApfStep {
  ParticleEnsemble ensemble;
  UniqueEnsemble unique;
  std::vector<double> log_first_stage;
  double log_beta_hat;
  std::vector<double> mean;
  BooleanState estimate;
  double mse;
};

struct ApfTrace {
  int dim = 0;
  ParticleEnsemble initial;
  UniqueEnsemble initial_unique;
  std::vector<ApfStep> steps;     // k = 1..T
  double log_likelihood = 0.0;    // sum of log_beta_hat
};

ParticleEnsemble sample_initial_ensemble(int dim, int count, Rng& rng,
                                         const std::optional<StateDistribution>& initial);

ApfTrace run_apf_bkf(const GrnModel& model, const RnaSeqModel& obs,
                     std::span<const ReadCountVector> ys, int particle_count, Rng& rng,
                     const ApfOptions& options = {});

struct SmootherDegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ApfSmootherResult {
  std::vector<std::vector<double>> smoothed_weights;  // s = 0..T, over unique particles
  std::vector<std::vector<double>> means;             // z_s, s = 0..T
  std::vector<BooleanState> estimates;                // s = 0..T
  std::vector<double> mses;                           // s = 0..T
};

// Backward reweighting pass over the unique ensembles of a forward trace.
ApfSmootherResult apf_bks_backward(const GrnModel& model, const ApfTrace& forward);

// Reference backward pass over the raw N-particle ensembles, O(N^2) per
// step; kept for equivalence checking against the compacted pass.
std::vector<std::vector<double>> apf_bks_backward_naive(const GrnModel& model,
                                                        const ApfTrace& forward);

struct ApfBksResult {
  ApfTrace forward;
  ApfSmootherResult smoother;
};

ApfBksResult apf_bks(const GrnModel& model, const RnaSeqModel& obs,
                     std::span<const ReadCountVector> ys, int particle_count, Rng& rng,
                     const ApfOptions& options = {});

}  // namespace pobds
