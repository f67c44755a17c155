#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pobds/grn_model.hpp"
#include "pobds/particle.hpp"
#include "pobds/random.hpp"
#include "pobds/rnaseq_model.hpp"

namespace pobds {

enum class ParamKind {
  NoiseIntensity,     // p
  Depth,              // s
  Baseline,           // mu
  Differential,       // delta_j
  InverseDispersion,  // phi_j
  Interaction,        // a_ij (discrete; candidate banks only)
};

struct Parameter {
  ParamKind kind;
  int gene = -1;                  // Differential / InverseDispersion
  int target = -1, source = -1;   // Interaction
  double value = 0.0;
  double lower = 0.0, upper = 0.0;
};

// Named parameter components with box constraints. Default boxes:
// p in [0, 0.5], mu in [0, 2], delta_j in [0.1, 10]; boxes for s and phi_j
// are configuration (defaults below are generous around the usual values).
class ParameterVector {
public:
  static Parameter noise_intensity(double value, double lower = 0.0, double upper = 0.5);
  static Parameter depth(double value, double lower = 0.5, double upper = 2.0);
  static Parameter baseline(double value, double lower = 0.0, double upper = 2.0);
  static Parameter differential(int gene, double value, double lower = 0.1,
                                double upper = 10.0);
  static Parameter inverse_dispersion(int gene, double value, double lower = 0.5,
                                      double upper = 20.0);
  static Parameter interaction(int target, int source, int value);

  ParameterVector() = default;
  explicit ParameterVector(std::vector<Parameter> components);

  void add(Parameter component);

  int size() const { return static_cast<int>(components_.size()); }
  bool empty() const { return components_.empty(); }
  const Parameter& operator[](int i) const { return components_[i]; }
  const std::vector<Parameter>& components() const { return components_; }

  std::vector<double> values() const;
  void set_values(std::span<const double> values);  // must be in-box
  void clamp_to_box(std::span<double> values) const;
  std::vector<double> widths() const;
  std::string name(int i) const;
  bool has(ParamKind kind) const;

  GrnModel apply(const GrnModel& base) const;
  RnaSeqModel apply(const RnaSeqModel& base) const;

private:
  std::vector<Parameter> components_;
};

// |estimate - truth| / box width, per component (Relative Distance).
std::vector<double> relative_distance(const ParameterVector& estimate,
                                      const ParameterVector& truth);

// ---------------------------------------------------------------------------
// Discrete-parameter ML adaptive filtering: a bank of APF-BKFs, one per
// candidate parameter vector, selected online by running log-likelihood.

struct BankStep {
  int selected = 0;
  BooleanState estimate;
  double mse = 0.0;
  std::vector<double> log_likelihoods;
};

class CandidateBank {
public:
  CandidateBank(const GrnModel& base_grn, const RnaSeqModel& base_obs,
                std::span<const ParameterVector> candidates, int particle_count,
                std::uint64_t seed, std::vector<std::string> labels = {},
                const ApfOptions& options = {});
  // Explicit per-candidate RNG seeds (identical candidates with identical
  // seeds produce identical trajectories).
  CandidateBank(const GrnModel& base_grn, const RnaSeqModel& base_obs,
                std::span<const ParameterVector> candidates, int particle_count,
                std::span<const std::uint64_t> seeds, std::vector<std::string> labels = {},
                const ApfOptions& options = {});

  int size() const { return static_cast<int>(candidates_.size()); }
  const std::string& label(int i) const { return labels_[i]; }
  const std::vector<double>& log_likelihoods() const { return log_likelihoods_; }
  int selected() const { return selected_; }
  bool failed(int i) const { return failed_[i]; }

  // Advance every candidate filter one observation; candidates whose filter
  // degenerates drop to -inf likelihood and are excluded. Returns the argmax
  // candidate (ties break to the lowest index) and its MMSE state estimate.
  BankStep step(const ReadCountVector& y);

private:
  struct Candidate {
    GrnModel grn;
    RnaSeqModel obs;
    ParticleEnsemble ensemble;
    Rng rng;
    BooleanState estimate;
    double mse = 0.0;
  };

  void init(const GrnModel& base_grn, const RnaSeqModel& base_obs,
            std::span<const ParameterVector> candidates, int particle_count,
            std::span<const std::uint64_t> seeds, const ApfOptions& options);

  std::vector<Candidate> candidates_;
  std::vector<std::string> labels_;
  std::vector<double> log_likelihoods_;
  std::vector<bool> failed_;
  ResamplingScheme resampling_ = ResamplingScheme::Multinomial;
  int selected_ = 0;
};

// ---------------------------------------------------------------------------
// Forward-filter backward-simulation and the Monte-Carlo EM machinery.

// N complete state paths x_{0:T} drawn from the joint smoothing distribution.
class SmoothedTrajectorySet {
public:
  SmoothedTrajectorySet(int dim, int horizon, int path_count)
      : dim_(dim), horizon_(horizon),
        words_(static_cast<std::size_t>(path_count) * (horizon + 1), 0) {}

  int dim() const { return dim_; }
  int horizon() const { return horizon_; }
  int paths() const {
    return static_cast<int>(words_.size() / (static_cast<std::size_t>(horizon_) + 1));
  }

  BooleanState state(int path, int step) const {
    return {words_[index(path, step)], dim_};
  }
  void set_state(int path, int step, const BooleanState& x) {
    words_[index(path, step)] = x.encode();
  }

private:
  std::size_t index(int path, int step) const {
    return static_cast<std::size_t>(path) * (horizon_ + 1) + step;
  }

  int dim_;
  int horizon_;
  std::vector<std::uint64_t> words_;
};

// Backward ancestor simulation over the unique forward particles; draws
// grouped per unique smoothed successor, O(S_s x F_s) per step.
SmoothedTrajectorySet ffbsi(const ApfTrace& forward, const GrnModel& model,
                            int path_count, Rng& rng);

// Sufficient statistics of the complete-data log-likelihood: total
// transition flips and per-step per-gene activity counts. Fractional counts
// are allowed so exact (expectation-based) EM variants can reuse the M-step.
struct TrajectoryStats {
  int dim = 0;
  int horizon = 0;
  double path_count = 0.0;
  double flip_count = 0.0;      // sum over paths and s=1..T of |x_s xor f(x_{s-1})|
  std::vector<double> active;   // [(T+1) * d], summed activity per step and gene

  double active_at(int step, int gene) const {
    return active[static_cast<std::size_t>(step) * dim + gene];
  }
};

TrajectoryStats trajectory_stats(const SmoothedTrajectorySet& trajectories,
                                 const GrnModel& model);

// Monte-Carlo EM surrogate: mean over trajectories of the complete-data
// log-likelihood (uniform initial prior included as a constant).
double q_hat(const TrajectoryStats& stats, const GrnModel& grn, const RnaSeqModel& obs,
             std::span<const ReadCountVector> ys);
double q_hat(const SmoothedTrajectorySet& trajectories, const ParameterVector& theta,
             const GrnModel& base_grn, const RnaSeqModel& base_obs,
             std::span<const ReadCountVector> ys);

// Analytic gradient of q_hat with respect to the continuous components of
// theta, in component order.
std::vector<double> q_hat_gradient(const TrajectoryStats& stats,
                                   const ParameterVector& theta, const GrnModel& base_grn,
                                   const RnaSeqModel& base_obs,
                                   std::span<const ReadCountVector> ys);

struct MStepError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmOptions {
  int max_iterations = 200;
  int m_step_max_iterations = 500;
  double m_step_step_tolerance = 1e-10;
  ResamplingScheme resampling = ResamplingScheme::Multinomial;
};

struct EmIterationRecord {
  std::vector<double> theta;      // theta^(n+1)
  double q_value = 0.0;           // Q_hat(theta^(n+1), theta^(n))
  double max_abs_change = 0.0;
  double forward_log_likelihood = 0.0;  // APF estimate at theta^(n)
};

struct EmResult {
  ParameterVector theta;
  bool converged = false;
  std::vector<EmIterationRecord> history;
  ApfSmootherResult smoothed;     // APF-BKS at the final parameter
};

// Box-constrained M-step on frozen trajectory statistics: closed-form update
// for p (flip rate), projected gradient ascent with backtracking for the
// observation parameters.
ParameterVector m_step(const TrajectoryStats& stats, const ParameterVector& theta,
                       const GrnModel& base_grn, const RnaSeqModel& base_obs,
                       std::span<const ReadCountVector> ys, const EmOptions& options = {});

EmResult em_fit(const GrnModel& base_grn, const RnaSeqModel& base_obs,
                std::span<const ReadCountVector> ys, const ParameterVector& theta0,
                int particle_count, double epsilon, Rng& rng,
                const EmOptions& options = {});

}  // namespace pobds
