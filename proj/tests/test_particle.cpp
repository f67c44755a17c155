#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "pobds/exact.hpp"
#include "pobds/harness.hpp"
#include "pobds/particle.hpp"

using namespace pobds;
using namespace pobds::testing;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

}  // namespace

TEST_CASE("compact") {
  const BooleanState a(3, 3), b(5, 3);

  SUBCASE("all particles identical") {
    ParticleEnsemble e{3, {a, a, a, a}, {0.25, 0.25, 0.25, 0.25}};
    const UniqueEnsemble u = compact(e);
    REQUIRE(u.size() == 1);
    CHECK(u.particles[0] == a);
    CHECK(u.weights[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(u.multiplicities[0] == 4);
  }

  SUBCASE("all distinct") {
    ParticleEnsemble e{3, {b, a}, {0.7, 0.3}};
    const UniqueEnsemble u = compact(e);
    REQUIRE(u.size() == 2);
    // Ordered by canonical encoding.
    CHECK(u.particles[0] == a);
    CHECK(u.weights[0] == 0.3);
    CHECK(u.particles[1] == b);
    CHECK(u.weights[1] == 0.7);
    CHECK(u.unique_of_raw[0] == 1);
    CHECK(u.unique_of_raw[1] == 0);
  }

  SUBCASE("weights aggregate per distinct state") {
    ParticleEnsemble e{3, {a, b, a}, {0.3, 0.2, 0.5}};
    const UniqueEnsemble u = compact(e);
    REQUIRE(u.size() == 2);
    CHECK(u.weights[0] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(u.weights[1] == doctest::Approx(0.2).epsilon(1e-14));
  }

  SUBCASE("round-trips total weight and bounds F") {
    Rng rng(71);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_below(200));
      ParticleEnsemble e;
      e.dim = 3;
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        e.particles.emplace_back(rng.uniform_below(8), 3);
        e.weights.push_back(rng.uniform01());
        total += e.weights.back();
      }
      for (double& w : e.weights) w /= total;
      const UniqueEnsemble u = compact(e);
      CHECK(u.size() <= std::min(n, 8));
      double unique_total = 0.0;
      for (const double w : u.weights) unique_total += w;
      CHECK(unique_total == doctest::Approx(1.0).epsilon(1e-12));
      for (int i = 0; i < n; ++i)
        CHECK(u.particles[u.unique_of_raw[i]] == e.particles[i]);
    }
  }
}

TEST_CASE("apf_bkf_step") {
  Rng model_rng(73);
  const GrnModel model = random_grn(3, model_rng);
  const RnaSeqModel obs = random_rnaseq(3, model_rng);

  SUBCASE("p = 0 gives uniform second-stage weights") {
    const GrnModel det = model.with_noise(0.0);
    Rng rng(1);
    ParticleEnsemble e = sample_initial_ensemble(3, 64, rng, std::nullopt);
    Rng sim(2);
    const ReadCountVector y = obs.sample_observation(BooleanState(1, 3), sim);
    const ApfStepResult step = apf_bkf_step(det, obs, y, e, rng);
    for (const double w : step.ensemble.weights)
      CHECK(w == doctest::Approx(1.0 / 64).epsilon(1e-12));
  }

  SUBCASE("N = 1 single-path importance estimate") {
    Rng rng(5);
    ParticleEnsemble e{3, {BooleanState(4, 3)}, {1.0}};
    Rng sim(6);
    const ReadCountVector y = obs.sample_observation(BooleanState(2, 3), sim);
    const ApfStepResult step = apf_bkf_step(model, obs, y, e, rng);
    // ||beta_hat||_1 = V_1 * W~_1 = p(y | x_{k,1}) * W_{0,1}.
    CHECK(step.log_beta_hat ==
          doctest::Approx(obs.log_likelihood(y, step.ensemble.particles[0])).epsilon(1e-12));
  }

  SUBCASE("one step approaches the exact posterior mean and likelihood") {
    const std::vector<ReadCountVector> ys = [&] {
      Rng sim(7);
      return simulate(model, obs, 1, sim).observations;
    }();
    const StateDistribution pi0 = StateDistribution::uniform(3);
    const PathSumResult oracle = oracle_path_sum(model, obs, ys, pi0);
    const StateDistribution exact1 = StateDistribution::from_values(3, oracle.marginals[1]);
    const std::vector<double> exact_mean = exact1.mean();

    Rng rng(8);
    ParticleEnsemble e = sample_initial_ensemble(3, 50000, rng, std::nullopt);
    const ApfStepResult step = apf_bkf_step(model, obs, ys[0], e, rng);
    CHECK(max_abs_diff(step.mean, exact_mean) < 0.01);

    // Unbiasedness of ||beta_hat_1||: mean over 200 independent one-step runs
    // within 3 standard errors of the exact one-step likelihood.
    const double exact_beta = std::exp(oracle.log_likelihood);
    const int reps = 200;
    std::vector<double> estimates(reps);
    double mean = 0.0;
    for (int r = 0; r < reps; ++r) {
      Rng rr(Rng::derive_seed(99, r));
      ParticleEnsemble er = sample_initial_ensemble(3, 500, rr, std::nullopt);
      estimates[r] = std::exp(apf_bkf_step(model, obs, ys[0], er, rr).log_beta_hat);
      mean += estimates[r];
    }
    mean /= reps;
    double var = 0.0;
    for (const double v : estimates) var += (v - mean) * (v - mean);
    var /= (reps - 1);
    const double se = std::sqrt(var / reps);
    CHECK(std::abs(mean - exact_beta) < 3 * se);
  }
}

TEST_CASE("run_apf_bkf") {
  Rng model_rng(79);
  const GrnModel model = random_grn(3, model_rng);
  const RnaSeqModel obs = random_rnaseq(3, model_rng);
  const std::vector<ReadCountVector> ys = [&] {
    Rng sim(9);
    return simulate(model, obs, 10, sim).observations;
  }();

  SUBCASE("deterministic given the seed") {
    Rng rng_a(42), rng_b(42);
    const ApfTrace a = run_apf_bkf(model, obs, ys, 300, rng_a);
    const ApfTrace b = run_apf_bkf(model, obs, ys, 300, rng_b);
    CHECK(a.log_likelihood == b.log_likelihood);
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
      CHECK(a.steps[k].estimate == b.steps[k].estimate);
      CHECK(a.steps[k].log_beta_hat == b.steps[k].log_beta_hat);
    }
  }

  SUBCASE("tracks the exact filter at large N") {
    const StateDistribution pi0 = StateDistribution::uniform(3);
    const FilterTrace exact = run_bkf(model, obs, ys, pi0);
    Rng rng(43);
    const ApfTrace trace = run_apf_bkf(model, obs, ys, 50000, rng);
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
      const std::vector<double> exact_mean = exact.steps[k].posterior.mean();
      CHECK(max_abs_diff(trace.steps[k].mean, exact_mean) < 0.02);
    }
  }
}

TEST_CASE("apf_bks backward pass") {
  Rng model_rng(83);
  const GrnModel model = random_grn(3, model_rng, 0.15, 0.25);
  const RnaSeqModel obs = random_rnaseq(3, model_rng);

  SUBCASE("s = T smoothed estimate equals the filter estimate") {
    const std::vector<ReadCountVector> ys = [&] {
      Rng sim(10);
      return simulate(model, obs, 6, sim).observations;
    }();
    Rng rng(11);
    const ApfBksResult result = apf_bks(model, obs, ys, 2000, rng);
    CHECK(result.smoother.estimates.back() == result.forward.steps.back().estimate);
    CHECK(result.smoother.mses.back() ==
          doctest::Approx(result.forward.steps.back().mse).epsilon(1e-12));
  }

  SUBCASE("smoothed weights stay normalized") {
    const std::vector<ReadCountVector> ys = [&] {
      Rng sim(12);
      return simulate(model, obs, 15, sim).observations;
    }();
    Rng rng(13);
    const ApfBksResult result = apf_bks(model, obs, ys, 1000, rng);
    for (const auto& weights : result.smoother.smoothed_weights) {
      double sum = 0.0;
      for (const double w : weights) sum += w;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-8));
    }
  }

  SUBCASE("uninformative future is a fixed point on a model-consistent trace") {
    // Hand-built forward trace whose unique weights follow the predict-only
    // chain Pi_s = M^s Pi_0 exactly; with no information in the future the
    // backward recursion must return the forward weights unchanged.
    const int T = 5;
    const TransitionOperator op(model);
    ApfTrace trace;
    trace.dim = 3;
    std::vector<double> pi(8, 1.0 / 8.0), next(8);
    const auto ensemble_from = [&](const std::vector<double>& w) {
      ParticleEnsemble e;
      e.dim = 3;
      for (std::uint64_t i = 0; i < 8; ++i) {
        e.particles.emplace_back(i, 3);
        e.weights.push_back(w[i]);
      }
      return e;
    };
    trace.initial = ensemble_from(pi);
    trace.initial_unique = compact(trace.initial);
    for (int s = 1; s <= T; ++s) {
      op.apply(pi, next);
      pi = next;
      ApfStep step;
      step.ensemble = ensemble_from(pi);
      step.unique = compact(step.ensemble);
      step.log_beta_hat = 0.0;
      step.mean = std::vector<double>(3, 0.0);
      step.estimate = BooleanState(0, 3);
      step.mse = 0.0;
      trace.steps.push_back(std::move(step));
    }
    const ApfSmootherResult smoother = apf_bks_backward(model, trace);
    for (int s = 0; s <= T; ++s) {
      const UniqueEnsemble& u = s == 0 ? trace.initial_unique : trace.steps[s - 1].unique;
      CHECK(max_abs_diff(smoother.smoothed_weights[s], u.weights) < 1e-10);
    }
  }

  SUBCASE("tracks the exact smoother at large N") {
    const std::vector<ReadCountVector> ys = [&] {
      Rng sim(14);
      return simulate(model, obs, 10, sim).observations;
    }();
    const StateDistribution pi0 = StateDistribution::uniform(3);
    const SmootherTrace exact = run_bks(model, obs, ys, pi0);
    Rng rng(15);
    const ApfBksResult result = apf_bks(model, obs, ys, 50000, rng);
    for (int s = 0; s <= 10; ++s) {
      const std::vector<double> exact_mean = exact.smoothed[s].mean();
      CHECK(max_abs_diff(result.smoother.means[s], exact_mean) < 0.02);
    }
  }

  SUBCASE("naive N^2 reference agrees with the compacted pass") {
    const std::vector<ReadCountVector> ys = [&] {
      Rng sim(16);
      return simulate(model, obs, 6, sim).observations;
    }();
    Rng rng(17);
    const ApfTrace forward = run_apf_bkf(model, obs, ys, 200, rng);
    const ApfSmootherResult compacted = apf_bks_backward(model, forward);
    const std::vector<std::vector<double>> naive = apf_bks_backward_naive(model, forward);

    for (int s = 0; s <= 6; ++s) {
      const UniqueEnsemble& u = s == 0 ? forward.initial_unique : forward.steps[s - 1].unique;
      std::vector<double> aggregated(u.size(), 0.0);
      const ParticleEnsemble& raw = s == 0 ? forward.initial : forward.steps[s - 1].ensemble;
      for (int i = 0; i < raw.size(); ++i) aggregated[u.unique_of_raw[i]] += naive[s][i];
      CHECK(max_abs_diff(aggregated, compacted.smoothed_weights[s]) < 1e-12);
    }
  }

  SUBCASE("unreachable smoothed particle raises") {
    const GrnModel det = model.with_noise(0.0);
    ApfTrace trace;
    trace.dim = 3;
    const BooleanState a(1, 3);
    const std::uint64_t image = det.network_function(a).encode();
    const BooleanState unreachable(image ^ 0b101, 3);
    trace.initial = {3, {a}, {1.0}};
    trace.initial_unique = compact(trace.initial);
    ApfStep step;
    step.ensemble = {3, {unreachable}, {1.0}};
    step.unique = compact(step.ensemble);
    step.log_beta_hat = 0.0;
    step.mean = std::vector<double>(3, 0.0);
    step.estimate = BooleanState(0, 3);
    step.mse = 0.0;
    trace.steps.push_back(std::move(step));
    CHECK_THROWS_AS(apf_bks_backward(det, trace), SmootherDegeneracyError);
  }
}

TEST_CASE("systematic resampling variant") {
  Rng model_rng(89);
  const GrnModel model = random_grn(3, model_rng);
  const RnaSeqModel obs = random_rnaseq(3, model_rng);
  const std::vector<ReadCountVector> ys = [&] {
    Rng sim(18);
    return simulate(model, obs, 8, sim).observations;
  }();

  ApfOptions options;
  options.resampling = ResamplingScheme::Systematic;
  Rng rng(19);
  const ApfTrace trace = run_apf_bkf(model, obs, ys, 5000, rng, options);
  const StateDistribution pi0 = StateDistribution::uniform(3);
  const FilterTrace exact = run_bkf(model, obs, ys, pi0);
  for (std::size_t k = 0; k < trace.steps.size(); ++k)
    CHECK(max_abs_diff(trace.steps[k].mean, exact.steps[k].posterior.mean()) < 0.05);
}

TEST_CASE("initial ensembles follow the requested prior") {
  SUBCASE("uniform default") {
    Rng rng(101);
    const ParticleEnsemble e = sample_initial_ensemble(3, 80000, rng, std::nullopt);
    std::array<int, 8> counts{};
    for (const BooleanState& x : e.particles) ++counts[x.encode()];
    for (const int c : counts)
      CHECK(std::abs(c / 80000.0 - 0.125) < 3 * std::sqrt(0.125 * 0.875 / 80000.0));
  }

  SUBCASE("explicit prior") {
    StateDistribution pi0(2);
    pi0[0] = 0.5;
    pi0[1] = 0.5;
    pi0.normalize();
    Rng rng(103);
    const ParticleEnsemble e = sample_initial_ensemble(2, 50000, rng, pi0);
    int ones = 0;
    for (const BooleanState& x : e.particles) {
      CHECK(x.encode() <= 1);
      ones += x.encode() == 1;
    }
    CHECK(std::abs(ones / 50000.0 - 0.5) < 3 * std::sqrt(0.25 / 50000.0));
  }
}
