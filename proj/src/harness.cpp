#include "pobds/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace pobds {

SimulationResult simulate(const GrnModel& model, const RnaSeqModel& obs, int horizon,
                          Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("simulate: horizon must be >= 1");
  if (model.dim() != obs.dim()) throw std::invalid_argument("simulate: dimension mismatch");
  const int d = model.dim();
  const std::uint64_t mask = d == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << d) - 1;

  SimulationResult out;
  out.states.reserve(horizon + 1);
  out.observations.reserve(horizon);
  out.states.emplace_back(rng.next_u64() & mask, d);
  for (int k = 1; k <= horizon; ++k) {
    out.states.push_back(model.sample_transition(out.states.back(), rng));
    out.observations.push_back(obs.sample_observation(out.states.back(), rng));
  }
  return out;
}

double correct_state_rate(std::span<const BooleanState> truth,
                          std::span<const BooleanState> estimates) {
  if (truth.size() != estimates.size() || truth.empty())
    throw std::invalid_argument("correct_state_rate: length mismatch");
  const int d = truth[0].dim();
  std::uint64_t matches = 0;
  for (std::size_t k = 0; k < truth.size(); ++k)
    matches += d - truth[k].hamming_distance(estimates[k]);
  return 100.0 * static_cast<double>(matches) / (static_cast<double>(truth.size()) * d);
}

double whole_vector_rate(std::span<const BooleanState> truth,
                         std::span<const BooleanState> estimates) {
  if (truth.size() != estimates.size() || truth.empty())
    throw std::invalid_argument("whole_vector_rate: length mismatch");
  std::uint64_t matches = 0;
  for (std::size_t k = 0; k < truth.size(); ++k)
    if (truth[k] == estimates[k]) ++matches;
  return 100.0 * static_cast<double>(matches) / static_cast<double>(truth.size());
}

void parallel_runs(int count, const std::function<void(int)>& fn) {
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("POBDS_THREADS")) {
    const int requested = std::atoi(env);
    if (requested > 0) threads = requested;
  }
  threads = std::max(1, std::min(threads, count));

  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Experiment 1.

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct EstimatorTally {
  std::uint64_t gene_matches = 0;
  std::uint64_t vector_matches = 0;
  double seconds = 0.0;
};

std::uint64_t gene_matches(std::span<const BooleanState> truth,
                           std::span<const BooleanState> estimates) {
  const int d = truth[0].dim();
  std::uint64_t m = 0;
  for (std::size_t k = 0; k < truth.size(); ++k)
    m += d - truth[k].hamming_distance(estimates[k]);
  return m;
}

std::uint64_t vector_matches(std::span<const BooleanState> truth,
                             std::span<const BooleanState> estimates) {
  std::uint64_t m = 0;
  for (std::size_t k = 0; k < truth.size(); ++k)
    if (truth[k] == estimates[k]) ++m;
  return m;
}

RnaSeqModel with_dispersion(const RnaSeqModel& base, double phi) {
  return {base.depth(), base.baseline(), base.differentials(),
          std::vector<double>(base.dim(), phi)};
}

}  // namespace

Experiment1Result experiment1(const Experiment1Config& config) {
  Experiment1Result result;
  const int T = config.horizon;
  const int runs = config.runs;

  // Estimator slots: exact pair, then one filter/smoother pair per N.
  struct Slot {
    std::string name;
    int particles;
  };
  std::vector<Slot> slots;
  if (config.run_exact) {
    slots.push_back({"bkf", 0});
    slots.push_back({"bks", 0});
  }
  if (config.run_particle) {
    for (const int n : config.particle_counts) {
      slots.push_back({"apf-bkf", n});
      slots.push_back({"apf-bks", n});
    }
  }

  for (std::size_t ci = 0; ci < config.cells.size(); ++ci) {
    const auto [p, phi] = config.cells[ci];
    const GrnModel model = config.network.with_noise(p);
    const RnaSeqModel obs = with_dispersion(config.observation, phi);
    const std::uint64_t cell_seed = Rng::derive_seed(config.seed, ci);

    std::vector<std::vector<EstimatorTally>> tallies(
        runs, std::vector<EstimatorTally>(slots.size()));
    std::vector<char> excluded(runs, 0);

    parallel_runs(runs, [&](int r) {
      const std::uint64_t run_seed = Rng::derive_seed(cell_seed, r);
      Rng rng_sim(Rng::derive_seed(run_seed, 0));
      const SimulationResult sim = simulate(model, obs, T, rng_sim);
      const std::span<const BooleanState> truth(sim.states.data() + 1, T);
      const std::span<const ReadCountVector> ys(sim.observations);
      const StateDistribution pi0 = StateDistribution::uniform(model.dim());

      try {
        std::size_t slot = 0;
        if (config.run_exact) {
          auto t0 = Clock::now();
          const FilterTrace filter = run_bkf(model, obs, ys, pi0);
          const double bkf_seconds = seconds_since(t0);
          std::vector<BooleanState> est;
          est.reserve(T);
          for (const FilterStep& step : filter.steps) est.push_back(step.estimate);
          tallies[r][slot++] = {gene_matches(truth, est), vector_matches(truth, est),
                                bkf_seconds};

          t0 = Clock::now();
          const SmootherTrace smoother = run_bks(model, obs, ys, pi0);
          tallies[r][slot++] = {gene_matches(truth, smoother.estimates),
                                vector_matches(truth, smoother.estimates),
                                seconds_since(t0)};
        }
        if (config.run_particle) {
          for (std::size_t ni = 0; ni < config.particle_counts.size(); ++ni) {
            Rng rng_apf(Rng::derive_seed(run_seed, 1000 + ni));
            auto t0 = Clock::now();
            const ApfTrace forward =
                run_apf_bkf(model, obs, ys, config.particle_counts[ni], rng_apf);
            const double filter_seconds = seconds_since(t0);
            std::vector<BooleanState> est;
            est.reserve(T);
            for (const ApfStep& step : forward.steps) est.push_back(step.estimate);
            tallies[r][slot++] = {gene_matches(truth, est), vector_matches(truth, est),
                                  filter_seconds};

            t0 = Clock::now();
            const ApfSmootherResult smoother = apf_bks_backward(model, forward);
            const std::span<const BooleanState> sm_est(smoother.estimates.data() + 1, T);
            tallies[r][slot++] = {gene_matches(truth, sm_est),
                                  vector_matches(truth, sm_est),
                                  filter_seconds + seconds_since(t0)};
          }
        }
      } catch (const std::exception&) {
        excluded[r] = 1;
      }
    });

    int n_excluded = 0;
    for (const char e : excluded) n_excluded += e;
    const int used = runs - n_excluded;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      Experiment1Row row;
      row.p = p;
      row.phi = phi;
      row.particles = slots[s].particles;
      row.estimator = slots[s].name;
      row.runs_used = used;
      row.runs_excluded = n_excluded;
      row.valid = n_excluded <= runs / 100;
      std::uint64_t genes = 0, vecs = 0;
      double secs = 0.0;
      for (int r = 0; r < runs; ++r) {
        if (excluded[r]) continue;
        genes += tallies[r][s].gene_matches;
        vecs += tallies[r][s].vector_matches;
        secs += tallies[r][s].seconds;
      }
      const double denom = static_cast<double>(used) * T;
      row.rate_per_gene = used ? 100.0 * static_cast<double>(genes) / (denom * model.dim()) : 0.0;
      row.rate_whole_vector = used ? 100.0 * static_cast<double>(vecs) / denom : 0.0;
      row.mean_runtime_seconds = used ? secs / used : 0.0;
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Experiment 2.

Experiment2Result experiment2(const Experiment2Config& config) {
  Experiment2Result result;
  result.labels = config.labels;

  std::size_t cell_index = 0;
  for (const int horizon : config.horizons) {
    for (const double p : config.noise_intensities) {
      for (const double phi : config.dispersions) {
        const GrnModel model = config.network.with_noise(p);
        const RnaSeqModel obs = with_dispersion(config.observation, phi);
        // Data seeds do not depend on N: every particle count sees the same
        // simulated series (paired comparison).
        const std::uint64_t data_seed =
            Rng::derive_seed(config.seed, 7919 * cell_index + 1);

        for (const int particles : config.particle_counts) {
          std::vector<char> correct(config.runs, 0);
          std::vector<char> excluded(config.runs, 0);
          std::vector<std::vector<Experiment2TracePoint>> traces(config.runs);

          parallel_runs(config.runs, [&](int r) {
            Rng rng_sim(Rng::derive_seed(data_seed, r));
            const SimulationResult sim = simulate(model, obs, horizon, rng_sim);
            const std::uint64_t bank_seed =
                Rng::derive_seed(Rng::derive_seed(config.seed, 104729 * cell_index + 2),
                                 static_cast<std::uint64_t>(r) * 65537 + particles);
            try {
              CandidateBank bank(model, obs, config.candidates, particles, bank_seed,
                                 config.labels);
              int selected = 0;
              for (int k = 0; k < horizon; ++k) {
                const BankStep step = bank.step(sim.observations[k]);
                selected = step.selected;
                traces[r].push_back({horizon, p, phi, particles, r, k + 1, selected,
                                     step.log_likelihoods});
              }
              correct[r] = selected == config.true_candidate ? 1 : 0;
            } catch (const std::exception&) {
              excluded[r] = 1;
            }
          });

          Experiment2Row row;
          row.horizon = horizon;
          row.p = p;
          row.phi = phi;
          row.particles = particles;
          int n_correct = 0, n_excluded = 0;
          for (int r = 0; r < config.runs; ++r) {
            n_correct += excluded[r] ? 0 : correct[r];
            n_excluded += excluded[r];
          }
          row.runs_used = config.runs - n_excluded;
          row.runs_excluded = n_excluded;
          row.valid = n_excluded <= config.runs / 100;
          row.accuracy = row.runs_used
                             ? static_cast<double>(n_correct) / row.runs_used
                             : 0.0;
          result.rows.push_back(row);

          for (auto& per_run : traces)
            for (auto& point : per_run) result.traces.push_back(std::move(point));
        }
        ++cell_index;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Experiment 3.

Experiment3Result experiment3(const Experiment3Config& config) {
  Experiment3Result result;
  if (config.horizons.empty()) throw std::invalid_argument("experiment3: no horizons");
  const int max_horizon = *std::max_element(config.horizons.begin(), config.horizons.end());
  const int n_params = config.theta0.size();

  for (const int particles : config.particle_counts) {
    // rel[h][run] -> per-component relative distances (empty when excluded).
    std::vector<std::vector<std::vector<double>>> rel(
        config.horizons.size(), std::vector<std::vector<double>>(config.runs));
    std::vector<Experiment3Result::RunRecord> records(config.horizons.size() * config.runs);

    parallel_runs(config.runs, [&](int r) {
      const std::uint64_t run_seed = Rng::derive_seed(config.seed, r);
      Rng rng_sim(Rng::derive_seed(run_seed, 0));
      // One series per run; shorter horizons reuse its prefix so the
      // T-comparison is paired.
      const SimulationResult sim =
          simulate(config.network, config.observation, max_horizon, rng_sim);

      for (std::size_t hi = 0; hi < config.horizons.size(); ++hi) {
        const int T = config.horizons[hi];
        const std::span<const ReadCountVector> ys(sim.observations.data(),
                                                  static_cast<std::size_t>(T));
        Rng rng_em(Rng::derive_seed(run_seed, 1 + hi * 131 + particles));
        Experiment3Result::RunRecord record;
        record.horizon = T;
        record.particles = particles;
        record.run = r;
        try {
          const EmResult em = em_fit(config.network, config.observation, ys,
                                     config.theta0, particles, config.epsilon, rng_em,
                                     config.em);
          record.converged = em.converged;
          record.theta = em.theta.values();
          record.rel_distance = relative_distance(em.theta, config.truth);
          rel[hi][r] = record.rel_distance;
        } catch (const std::exception&) {
          record.converged = false;
        }
        records[hi * config.runs + r] = std::move(record);
      }
    });

    for (std::size_t hi = 0; hi < config.horizons.size(); ++hi) {
      int used = 0;
      std::vector<double> sums(n_params, 0.0);
      for (int r = 0; r < config.runs; ++r) {
        if (rel[hi][r].empty()) continue;
        ++used;
        for (int c = 0; c < n_params; ++c) sums[c] += rel[hi][r][c];
      }
      const int n_excluded = config.runs - used;
      for (int c = 0; c < n_params; ++c) {
        Experiment3Row row;
        row.horizon = config.horizons[hi];
        row.particles = particles;
        row.parameter = config.theta0.name(c);
        row.mean_relative_distance = used ? sums[c] / used : 0.0;
        row.runs_used = used;
        row.runs_excluded = n_excluded;
        row.valid = n_excluded <= config.runs / 100;
        result.rows.push_back(std::move(row));
      }
    }
    for (auto& rec : records) result.run_records.push_back(std::move(rec));
  }
  return result;
}

}  // namespace pobds
