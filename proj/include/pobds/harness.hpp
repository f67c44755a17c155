#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pobds/adaptive.hpp"
#include "pobds/exact.hpp"
#include "pobds/grn_model.hpp"
#include "pobds/particle.hpp"
#include "pobds/rnaseq_model.hpp"

namespace pobds {

struct SimulationResult {
  std::vector<BooleanState> states;          // X_0..X_T
  std::vector<ReadCountVector> observations; // Y_1..Y_T
};

// X_0 uniform over {0,1}^d, then X_k = f(X_{k-1}) xor n_k, Y_k ~ p(.|X_k).
SimulationResult simulate(const GrnModel& model, const RnaSeqModel& obs, int horizon,
                          Rng& rng);

// Percentage of per-gene per-step state decisions that match the truth.
double correct_state_rate(std::span<const BooleanState> truth,
                          std::span<const BooleanState> estimates);
// Percentage of steps whose whole state vector matches (companion metric).
double whole_vector_rate(std::span<const BooleanState> truth,
                         std::span<const BooleanState> estimates);

// Runs fn(0..count-1) on a work queue; thread count from POBDS_THREADS or
// hardware concurrency. Callers derive per-run seeds from the run index, so
// results do not depend on scheduling.
void parallel_runs(int count, const std::function<void(int)>& fn);

// ---------------------------------------------------------------------------
// Experiment 1: state estimation, exact vs particle, across (p, phi) cells.

struct Experiment1Config {
  GrnModel network;
  RnaSeqModel observation;
  std::vector<std::pair<double, double>> cells;  // (p, phi)
  std::vector<int> particle_counts;
  int horizon = 100;
  int runs = 200;
  std::uint64_t seed = 1;
  bool run_exact = true;
  bool run_particle = true;
};

struct Experiment1Row {
  double p = 0.0;
  double phi = 0.0;
  int particles = 0;  // 0 for exact estimators
  std::string estimator;
  double rate_per_gene = 0.0;
  double rate_whole_vector = 0.0;
  double mean_runtime_seconds = 0.0;
  int runs_used = 0;
  int runs_excluded = 0;
  bool valid = true;  // false when exclusions exceed 1% of runs
};

struct Experiment1Result {
  std::vector<Experiment1Row> rows;
};

Experiment1Result experiment1(const Experiment1Config& config);

// ---------------------------------------------------------------------------
// Experiment 2: discrete-parameter bank over a candidate interaction entry.

struct Experiment2Config {
  GrnModel network;  // truth; candidates override entries of this model
  RnaSeqModel observation;
  std::vector<ParameterVector> candidates;
  std::vector<std::string> labels;
  int true_candidate = 0;
  std::vector<int> horizons;
  std::vector<double> noise_intensities;
  std::vector<double> dispersions;  // applied to every phi_j
  std::vector<int> particle_counts;
  int runs = 100;
  std::uint64_t seed = 1;
};

struct Experiment2Row {
  int horizon = 0;
  double p = 0.0;
  double phi = 0.0;
  int particles = 0;
  double accuracy = 0.0;
  int runs_used = 0;
  int runs_excluded = 0;
  bool valid = true;
};

struct Experiment2TracePoint {
  int horizon = 0;
  double p = 0.0;
  double phi = 0.0;
  int particles = 0;
  int run = 0;
  int step = 0;
  int selected = 0;
  std::vector<double> log_likelihoods;
};

struct Experiment2Result {
  std::vector<Experiment2Row> rows;
  std::vector<Experiment2TracePoint> traces;
  std::vector<std::string> labels;
};

Experiment2Result experiment2(const Experiment2Config& config);

// ---------------------------------------------------------------------------
// Experiment 3: EM estimation of continuous parameters, accuracy vs T.

struct Experiment3Config {
  GrnModel network;      // truth
  RnaSeqModel observation;
  ParameterVector theta0;  // estimated set: starting values and boxes
  ParameterVector truth;   // aligned true values
  std::vector<int> horizons;
  std::vector<int> particle_counts;
  int runs = 20;
  std::uint64_t seed = 1;
  double epsilon = 1e-4;
  EmOptions em;
};

struct Experiment3Row {
  int horizon = 0;
  int particles = 0;
  std::string parameter;
  double mean_relative_distance = 0.0;
  int runs_used = 0;
  int runs_excluded = 0;
  bool valid = true;
};

struct Experiment3Result {
  std::vector<Experiment3Row> rows;
  // Per-run estimates, for inspection: [horizon][particles][run] -> values.
  struct RunRecord {
    int horizon;
    int particles;
    int run;
    bool converged;
    std::vector<double> theta;
    std::vector<double> rel_distance;
  };
  std::vector<RunRecord> run_records;
};

Experiment3Result experiment3(const Experiment3Config& config);

}  // namespace pobds
