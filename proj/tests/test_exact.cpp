#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pobds/exact.hpp"
#include "pobds/harness.hpp"

using namespace pobds;
using namespace pobds::testing;

namespace {

// delta = 1e-300 vanishes inside exp(), so active and inactive states emit
// identical likelihoods: an exactly uninformative channel that still
// satisfies the delta > 0 contract.
RnaSeqModel uninformative_obs(int d) {
  return {1.0, 0.1, std::vector<double>(d, 1e-300), std::vector<double>(d, 5.0)};
}

std::vector<ReadCountVector> simulate_counts(const GrnModel& model, const RnaSeqModel& obs,
                                             int horizon, std::uint64_t seed) {
  Rng rng(seed);
  return simulate(model, obs, horizon, rng).observations;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

}  // namespace

TEST_CASE("transition matrix construction") {
  SUBCASE("p = 0 gives a 0/1 matrix with one unit entry per column") {
    Rng rng(3);
    const GrnModel model = random_grn(3, rng).with_noise(0.0);
    const TransitionMatrix m = TransitionMatrix::build(model);
    for (std::size_t j = 0; j < 8; ++j) {
      const std::uint64_t image = model.network_function(BooleanState(j, 3)).encode();
      for (std::size_t i = 0; i < 8; ++i)
        CHECK(m(i, j) == (i == image ? 1.0 : 0.0));
    }
  }

  SUBCASE("d = 2 identity network at p = 0.1") {
    // f = identity: each gene activated only by itself.
    GrnModel model({{1, 0}, {0, 1}}, {-0.5, -0.5}, 0.1);
    const TransitionMatrix m = TransitionMatrix::build(model);
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t i = 0; i < 4; ++i) {
        const int h = std::popcount(i ^ j);
        const double expected = h == 0 ? 0.81 : (h == 1 ? 0.09 : 0.01);
        CHECK(m(i, j) == doctest::Approx(expected).epsilon(1e-14));
      }
    }
  }

  SUBCASE("columns sum to one for random models") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      const GrnModel model = random_grn(4, rng);
      const TransitionMatrix m = TransitionMatrix::build(model);
      for (std::size_t j = 0; j < 16; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < 16; ++i) sum += m(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("dense matrix and kernel operator are the same linear map") {
  Rng rng(29);
  for (int trial = 0; trial < 8; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_below(5));  // 2..6
    const GrnModel model = random_grn(d, rng);
    const TransitionMatrix dense = TransitionMatrix::build(model);
    const TransitionOperator op(model);
    const std::size_t n = std::size_t{1} << d;

    std::vector<double> v(n), a(n), b(n);
    for (double& x : v) x = rng.uniform01();

    dense.apply(v, a);
    op.apply(v, b);
    CHECK(max_abs_diff(a, b) < 1e-12);

    dense.apply_transpose(v, a);
    op.apply_transpose(v, b);
    CHECK(max_abs_diff(a, b) < 1e-12);
  }
}

TEST_CASE("bkf_step") {
  Rng rng(31);
  const GrnModel model = random_grn(3, rng);
  const RnaSeqModel obs = random_rnaseq(3, rng);
  const TransitionOperator op(model);

  SUBCASE("single step matches direct Bayes enumeration") {
    const std::vector<ReadCountVector> ys = simulate_counts(model, obs, 1, 5);
    const StateDistribution prior = StateDistribution::uniform(3);
    const auto [posterior, log_beta] = bkf_step(op, obs, ys[0], prior);

    const PathSumResult oracle = oracle_path_sum(model, obs, ys, prior);
    CHECK(max_abs_diff(posterior.values(), oracle.marginals[1]) < 1e-12);
    CHECK(log_beta == doctest::Approx(oracle.log_likelihood).epsilon(1e-12));
  }

  SUBCASE("uninformative update reduces to prediction") {
    const RnaSeqModel flat = uninformative_obs(3);
    const ReadCountVector y(std::vector<std::uint32_t>{2, 0, 7});
    StateDistribution prior(3);
    for (std::size_t i = 0; i < 8; ++i) prior[i] = (i + 1) / 36.0;
    prior.normalize();
    const auto [posterior, log_beta] = bkf_step(op, flat, y, prior);
    std::vector<double> predicted(8);
    op.apply(prior.values(), predicted);
    CHECK(max_abs_diff(posterior.values(), predicted) < 1e-14);
  }

  SUBCASE("noiseless delta prior propagates through f") {
    const GrnModel det = model.with_noise(0.0);
    const TransitionOperator det_op(det);
    const RnaSeqModel flat = uninformative_obs(3);
    const BooleanState x0(5, 3);
    const auto [posterior, log_beta] =
        bkf_step(det_op, flat, ReadCountVector({1, 1, 1}), StateDistribution::delta(x0));
    const std::uint64_t image = det.network_function(x0).encode();
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(posterior[i] == (i == image ? 1.0 : 0.0));
  }

  SUBCASE("degenerate observation raises") {
    // p = 0 pins the predicted mass on one state; a hand-built update that
    // vanishes there starves beta.
    const GrnModel det = model.with_noise(0.0);
    const TransitionOperator det_op(det);
    const BooleanState x0(2, 3);
    const std::uint64_t image = det.network_function(x0).encode();
    UpdateDiagonal update;
    update.max_log = 0.0;
    update.scaled.assign(8, 1.0);
    update.scaled[image] = 0.0;
    CHECK_THROWS_AS(bkf_step(det_op, update, StateDistribution::delta(x0)),
                    DegenerateObservationError);
  }
}

TEST_CASE("run_bkf matches the brute-force filter oracle") {
  Rng rng(37);
  for (int trial = 0; trial < 3; ++trial) {
    const GrnModel model = random_grn(3, rng);
    const RnaSeqModel obs = random_rnaseq(3, rng);
    const std::vector<ReadCountVector> ys = simulate_counts(model, obs, 4, 100 + trial);
    const StateDistribution pi0 = StateDistribution::uniform(3);

    const FilterTrace trace = run_bkf(model, obs, ys, pi0);
    const auto oracle = oracle_filter_marginals(model, obs, ys, pi0);
    for (int k = 1; k <= 4; ++k)
      CHECK(max_abs_diff(trace.steps[k - 1].posterior.values(), oracle[k]) < 1e-10);

    const PathSumResult joint = oracle_path_sum(model, obs, ys, pi0);
    CHECK(trace.log_likelihood == doctest::Approx(joint.log_likelihood).epsilon(1e-10));

    // T = 1 reduces to a single bkf_step.
    const TransitionOperator op(model);
    const auto [posterior, log_beta] = bkf_step(op, obs, ys[0], pi0);
    const FilterTrace one = run_bkf(model, obs, std::span(ys.data(), 1), pi0);
    CHECK(max_abs_diff(one.steps[0].posterior.values(), posterior.values()) < 1e-14);
  }
}

TEST_CASE("repeated uninformative observations converge to the stationary law") {
  Rng rng(41);
  const GrnModel model = random_grn(3, rng).with_noise(0.2);
  const RnaSeqModel flat = uninformative_obs(3);
  const std::vector<ReadCountVector> ys(60, ReadCountVector({1, 2, 3}));
  const FilterTrace trace = run_bkf(model, flat, ys, StateDistribution::uniform(3));

  // Power iteration of M from the uniform vector.
  const TransitionOperator op(model);
  std::vector<double> pi(8, 1.0 / 8.0), next(8);
  for (int it = 0; it < 60; ++it) {
    op.apply(pi, next);
    pi = next;
  }
  CHECK(max_abs_diff(trace.steps.back().posterior.values(), pi) < 1e-8);
}

TEST_CASE("log-likelihood invariant to normalization algebra") {
  Rng rng(43);
  const GrnModel model = random_grn(3, rng);
  const RnaSeqModel obs = random_rnaseq(3, rng);
  const std::vector<ReadCountVector> ys = simulate_counts(model, obs, 5, 11);
  const StateDistribution pi0 = StateDistribution::uniform(3);
  const FilterTrace trace = run_bkf(model, obs, ys, pi0);

  // Fully unnormalized recursion: beta_k = T_k M beta_{k-1}, no per-step
  // normalization; the joint likelihood is the final L1 mass.
  const TransitionOperator op(model);
  std::vector<double> beta(pi0.values().begin(), pi0.values().end()), tmp(8);
  double log_scale = 0.0;
  for (const ReadCountVector& y : ys) {
    op.apply(beta, tmp);
    const UpdateDiagonal update = UpdateDiagonal::build(obs, y, 3);
    for (std::size_t i = 0; i < 8; ++i) beta[i] = update.scaled[i] * tmp[i];
    log_scale += update.max_log;
  }
  double mass = 0.0;
  for (const double v : beta) mass += v;
  CHECK(trace.log_likelihood == doctest::Approx(std::log(mass) + log_scale).epsilon(1e-10));
}

TEST_CASE("run_bks") {
  Rng rng(47);
  const GrnModel model = random_grn(3, rng);
  const RnaSeqModel obs = random_rnaseq(3, rng);
  const std::vector<ReadCountVector> ys = simulate_counts(model, obs, 4, 21);
  const StateDistribution pi0 = StateDistribution::uniform(3);
  const SmootherTrace trace = run_bks(model, obs, ys, pi0);

  SUBCASE("k = T smoothed equals the filter posterior") {
    CHECK(max_abs_diff(trace.smoothed[4].values(),
                       trace.filter.steps[3].posterior.values()) < 1e-12);
  }

  SUBCASE("marginals match the brute-force smoother oracle at every k") {
    const PathSumResult oracle = oracle_path_sum(model, obs, ys, pi0);
    for (int k = 0; k <= 4; ++k)
      CHECK(max_abs_diff(trace.smoothed[k].values(), oracle.marginals[k]) < 1e-10);
  }

  SUBCASE("uninformative future reduces smoothing to filtering") {
    const TransitionOperator op(model);
    std::vector<UpdateDiagonal> updates;
    for (int k = 0; k < 4; ++k) updates.push_back(UpdateDiagonal::build(obs, ys[k], 3));
    // Steps 3 and 4 carry constant diagonals.
    for (int k = 2; k < 4; ++k) {
      updates[k].max_log = 0.0;
      updates[k].scaled.assign(8, 1.0);
    }
    const SmootherTrace mixed = run_bks(op, updates, pi0);
    CHECK(max_abs_diff(mixed.smoothed[2].values(),
                       mixed.filter.steps[1].posterior.values()) < 1e-12);
  }
}

TEST_CASE("smoother beats the filter on average") {
  Rng rng(53);
  const GrnModel model = random_grn(3, rng, 0.08, 0.15);
  const RnaSeqModel obs = random_rnaseq(3, rng);
  const StateDistribution pi0 = StateDistribution::uniform(3);

  double filter_mse = 0.0, smoother_mse = 0.0;
  const int runs = 200, T = 10;
  for (int r = 0; r < runs; ++r) {
    Rng sim_rng(Rng::derive_seed(1234, r));
    const SimulationResult sim = simulate(model, obs, T, sim_rng);
    const SmootherTrace trace = run_bks(model, obs, sim.observations, pi0);
    for (int k = 1; k <= T; ++k) {
      filter_mse += trace.filter.steps[k - 1].mse;
      smoother_mse += trace.mses[k - 1];
    }
  }
  CHECK(smoother_mse <= filter_mse);
}

TEST_CASE("filter posteriors are invariant under gene relabeling") {
  Rng rng(59);
  const GrnModel model = random_grn(3, rng);
  const RnaSeqModel obs = random_rnaseq(3, rng);
  const std::vector<ReadCountVector> ys = simulate_counts(model, obs, 3, 77);

  // Permutation sigma: gene g of the original becomes gene perm[g].
  const std::array<int, 3> perm{2, 0, 1};
  const auto permute_state = [&](std::uint64_t word) {
    std::uint64_t out = 0;
    for (int g = 0; g < 3; ++g)
      if ((word >> g) & 1u) out |= std::uint64_t{1} << perm[g];
    return out;
  };

  std::vector<std::vector<int>> a(3, std::vector<int>(3));
  std::vector<double> b(3);
  std::vector<double> delta(3), phi(3);
  for (int i = 0; i < 3; ++i) {
    b[perm[i]] = model.bias(i);
    delta[perm[i]] = obs.differential(i);
    phi[perm[i]] = obs.inverse_dispersion(i);
    for (int j = 0; j < 3; ++j) a[perm[i]][perm[j]] = model.interaction(i, j);
  }
  const GrnModel permuted_model(a, b, model.noise_intensity());
  const RnaSeqModel permuted_obs(obs.depth(), obs.baseline(), delta, phi);

  std::vector<ReadCountVector> permuted_ys;
  for (const ReadCountVector& y : ys) {
    std::vector<std::uint32_t> counts(3);
    for (int g = 0; g < 3; ++g) counts[perm[g]] = y[g];
    permuted_ys.emplace_back(std::move(counts));
  }

  const StateDistribution pi0 = StateDistribution::uniform(3);
  const FilterTrace base = run_bkf(model, obs, ys, pi0);
  const FilterTrace relabeled = run_bkf(permuted_model, permuted_obs, permuted_ys, pi0);
  for (std::size_t k = 0; k < base.steps.size(); ++k) {
    for (std::uint64_t i = 0; i < 8; ++i) {
      CHECK(base.steps[k].posterior[i] ==
            doctest::Approx(relabeled.steps[k].posterior[permute_state(i)]).epsilon(1e-11));
    }
  }
}

TEST_CASE("dense and operator filter paths agree") {
  Rng rng(61);
  const GrnModel model = random_grn(4, rng);
  const RnaSeqModel obs = random_rnaseq(4, rng);
  const std::vector<ReadCountVector> ys = simulate_counts(model, obs, 5, 33);
  const StateDistribution pi0 = StateDistribution::uniform(4);
  const FilterTrace dense = run_bkf(model, obs, ys, pi0, BkfMethod::DenseMatrix);
  const FilterTrace op = run_bkf(model, obs, ys, pi0, BkfMethod::KernelOperator);
  for (std::size_t k = 0; k < dense.steps.size(); ++k) {
    CHECK(max_abs_diff(dense.steps[k].posterior.values(), op.steps[k].posterior.values()) <
          1e-12);
    CHECK(dense.steps[k].log_beta_norm ==
          doctest::Approx(op.steps[k].log_beta_norm).epsilon(1e-12));
  }
}

TEST_CASE("memory guard on dense construction") {
  std::vector<std::vector<int>> a(15, std::vector<int>(15, 0));
  const GrnModel model(a, std::vector<double>(15, -0.5), 0.1);
  CHECK_THROWS_AS(TransitionMatrix::build(model), std::invalid_argument);
}
