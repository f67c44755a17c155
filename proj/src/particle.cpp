#include "pobds/particle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pobds/special_functions.hpp"

namespace pobds {

UniqueEnsemble compact(const ParticleEnsemble& ensemble) {
  const int n = ensemble.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return ensemble.particles[a].encode() < ensemble.particles[b].encode();
  });

  UniqueEnsemble out;
  out.dim = ensemble.dim;
  out.unique_of_raw.resize(n);
  for (int k = 0; k < n; ++k) {
    const std::uint32_t raw = order[k];
    if (out.particles.empty() ||
        out.particles.back().encode() != ensemble.particles[raw].encode()) {
      out.particles.push_back(ensemble.particles[raw]);
      out.weights.push_back(0.0);
      out.multiplicities.push_back(0);
    }
    out.weights.back() += ensemble.weights[raw];
    out.multiplicities.back() += 1;
    out.unique_of_raw[raw] = static_cast<std::uint32_t>(out.particles.size() - 1);
  }
  return out;
}

namespace {

std::vector<std::uint32_t> draw_ancestors(std::span<const double> cumulative, int count,
                                          ResamplingScheme scheme, Rng& rng) {
  std::vector<std::uint32_t> idx(count);
  if (scheme == ResamplingScheme::Multinomial) {
    for (int i = 0; i < count; ++i)
      idx[i] = static_cast<std::uint32_t>(sample_cumulative(cumulative, rng.uniform01()));
  } else {
    // Systematic: one uniform offset, stratified points (i + u)/count.
    const double u = rng.uniform01();
    const double total = cumulative.back();
    std::size_t j = 0;
    for (int i = 0; i < count; ++i) {
      const double target = (static_cast<double>(i) + u) / count * total;
      while (j + 1 < cumulative.size() && cumulative[j] <= target) ++j;
      idx[i] = static_cast<std::uint32_t>(j);
    }
  }
  return idx;
}

}  // namespace

ApfStepResult apf_bkf_step(const GrnModel& model, const RnaSeqModel& obs,
                           const ReadCountVector& y, const ParticleEnsemble& ensemble,
                           Rng& rng, ResamplingScheme resampling) {
  const int n = ensemble.size();
  if (n < 1) throw std::invalid_argument("apf_bkf_step: empty ensemble");
  const GeneLogLikTable table = obs.loglik_table(y);

  // First stage: mode look-ahead mu_i = f(x_{k-1,i}), V_i = p(y|mu_i) W_i.
  std::vector<double> mu_loglik(n);
  std::vector<double> log_v(n);
  std::vector<BooleanState> mu;
  mu.reserve(n);
  double v_max = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    mu.push_back(model.network_function(ensemble.particles[i]));
    mu_loglik[i] = table.state_log_likelihood(mu[i]);
    log_v[i] = mu_loglik[i] + std::log(ensemble.weights[i]);
    v_max = std::max(v_max, log_v[i]);
  }
  if (!std::isfinite(v_max))
    throw ApfDegeneracyError(
        "apf_bkf_step: observation incompatible with every propagated particle");

  // Weights that underflow relative to the max drop out of the support here.
  std::vector<double> v_scaled(n);
  for (int i = 0; i < n; ++i) v_scaled[i] = std::exp(log_v[i] - v_max);
  const std::vector<double> cum = cumulative_sum(v_scaled);
  // Input weights sum to one, so sum(V) (not mean) is the first factor of
  // the unbiased one-step likelihood estimate.
  const double log_sum_v = v_max + std::log(cum.back());

  const std::vector<std::uint32_t> zeta = draw_ancestors(cum, n, resampling, rng);

  // Second stage: propagate with fresh noise, correct by likelihood ratio.
  ApfStepResult out;
  out.ensemble.dim = ensemble.dim;
  out.ensemble.particles.reserve(n);
  std::vector<double> log_w(n);
  for (int i = 0; i < n; ++i) {
    out.ensemble.particles.push_back(
        model.sample_transition(ensemble.particles[zeta[i]], rng));
    log_w[i] =
        table.state_log_likelihood(out.ensemble.particles[i]) - mu_loglik[zeta[i]];
  }
  const double log_mean_w = log_sum_exp(log_w.data(), n) - std::log(n);

  out.log_beta_hat = log_sum_v + log_mean_w;
  out.log_first_stage = std::move(log_v);

  double w_max = *std::max_element(log_w.begin(), log_w.end());
  out.ensemble.weights.resize(n);
  double w_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out.ensemble.weights[i] = std::exp(log_w[i] - w_max);
    w_sum += out.ensemble.weights[i];
  }
  for (double& w : out.ensemble.weights) w /= w_sum;

  out.mean.assign(ensemble.dim, 0.0);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t word = out.ensemble.particles[i].encode();
    for (int g = 0; g < ensemble.dim; ++g)
      if ((word >> g) & 1u) out.mean[g] += out.ensemble.weights[i];
  }
  // Convex combination up to roundoff; keep it inside [0, 1].
  for (double& z : out.mean) z = std::clamp(z, 0.0, 1.0);
  return out;
}

ParticleEnsemble sample_initial_ensemble(int dim, int count, Rng& rng,
                                         const std::optional<StateDistribution>& initial) {
  if (count < 1) throw std::invalid_argument("sample_initial_ensemble: need N >= 1");
  ParticleEnsemble out;
  out.dim = dim;
  out.particles.reserve(count);
  out.weights.assign(count, 1.0 / count);
  if (initial) {
    if (initial->dim() != dim)
      throw std::invalid_argument("sample_initial_ensemble: prior dimension mismatch");
    const std::vector<double> cum =
        cumulative_sum(std::span<const double>(initial->values()));
    for (int i = 0; i < count; ++i)
      out.particles.emplace_back(sample_cumulative(cum, rng.uniform01()), dim);
  } else {
    const std::uint64_t mask =
        dim == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << dim) - 1;
    for (int i = 0; i < count; ++i) out.particles.emplace_back(rng.next_u64() & mask, dim);
  }
  return out;
}

ApfTrace run_apf_bkf(const GrnModel& model, const RnaSeqModel& obs,
                     std::span<const ReadCountVector> ys, int particle_count, Rng& rng,
                     const ApfOptions& options) {
  if (ys.empty()) throw std::invalid_argument("run_apf_bkf: need at least one observation");
  ApfTrace trace;
  trace.dim = model.dim();
  trace.initial = sample_initial_ensemble(model.dim(), particle_count, rng, options.initial);
  trace.initial_unique = compact(trace.initial);

  const ParticleEnsemble* current = &trace.initial;
  for (const ReadCountVector& y : ys) {
    ApfStepResult step = apf_bkf_step(model, obs, y, *current, rng, options.resampling);
    const MmseEstimate est = mmse_from_mean(step.mean);
    trace.log_likelihood += step.log_beta_hat;
    trace.steps.push_back({std::move(step.ensemble), {}, std::move(step.log_first_stage),
                           step.log_beta_hat, std::move(step.mean), est.state, est.mse});
    trace.steps.back().unique = compact(trace.steps.back().ensemble);
    current = &trace.steps.back().ensemble;
  }
  return trace;
}

namespace {

const UniqueEnsemble& unique_at(const ApfTrace& trace, int s) {
  return s == 0 ? trace.initial_unique : trace.steps[s - 1].unique;
}

std::vector<double> weighted_mean(const UniqueEnsemble& unique,
                                  std::span<const double> weights, int dim) {
  std::vector<double> mean(dim, 0.0);
  for (int i = 0; i < unique.size(); ++i) {
    const std::uint64_t word = unique.particles[i].encode();
    for (int g = 0; g < dim; ++g)
      if ((word >> g) & 1u) mean[g] += weights[i];
  }
  for (double& z : mean) z = std::clamp(z, 0.0, 1.0);
  return mean;
}

}  // namespace

ApfSmootherResult apf_bks_backward(const GrnModel& model, const ApfTrace& forward) {
  const int T = static_cast<int>(forward.steps.size());
  const int d = forward.dim;
  const std::vector<double> kernel = model.kernel_table();

  ApfSmootherResult out;
  out.smoothed_weights.resize(T + 1);
  out.means.resize(T + 1);
  out.estimates.reserve(T + 1);
  out.mses.resize(T + 1);

  // W_{T|T} = forward unique weights at T.
  out.smoothed_weights[T] = unique_at(forward, T).weights;

  for (int s = T - 1; s >= 0; --s) {
    const UniqueEnsemble& cur = unique_at(forward, s);
    const UniqueEnsemble& next = unique_at(forward, s + 1);
    const std::vector<double>& next_smoothed = out.smoothed_weights[s + 1];
    const int f_cur = cur.size();
    const int f_next = next.size();

    std::vector<std::uint64_t> f_of_cur(f_cur);
    for (int l = 0; l < f_cur; ++l)
      f_of_cur[l] = model.network_function(cur.particles[l]).encode();

    // ratio_i = W_{s+1|T,i} / sum_l P(x^u_{s+1,i} | x^u_{s,l}) W^u_{s,l}
    std::vector<double> ratio(f_next);
    for (int i = 0; i < f_next; ++i) {
      const std::uint64_t target = next.particles[i].encode();
      double denom = 0.0;
      for (int l = 0; l < f_cur; ++l)
        denom += kernel[std::popcount(f_of_cur[l] ^ target)] * cur.weights[l];
      if (denom <= 0.0) {
        if (next_smoothed[i] > 0.0)
          throw SmootherDegeneracyError(
              "apf_bks: no forward particle can reach a smoothed particle");
        ratio[i] = 0.0;
      } else {
        ratio[i] = next_smoothed[i] / denom;
      }
    }

    std::vector<double>& smoothed = out.smoothed_weights[s];
    smoothed.assign(f_cur, 0.0);
    for (int j = 0; j < f_cur; ++j) {
      double acc = 0.0;
      for (int i = 0; i < f_next; ++i)
        acc += kernel[std::popcount(f_of_cur[j] ^ next.particles[i].encode())] * ratio[i];
      smoothed[j] = cur.weights[j] * acc;
    }
  }

  for (int s = 0; s <= T; ++s) {
    out.means[s] = weighted_mean(unique_at(forward, s), out.smoothed_weights[s], d);
    const MmseEstimate est = mmse_from_mean(out.means[s]);
    out.estimates.push_back(est.state);
    out.mses[s] = est.mse;
  }
  return out;
}

std::vector<std::vector<double>> apf_bks_backward_naive(const GrnModel& model,
                                                        const ApfTrace& forward) {
  const int T = static_cast<int>(forward.steps.size());
  const std::vector<double> kernel = model.kernel_table();
  const auto raw_at = [&](int s) -> const ParticleEnsemble& {
    return s == 0 ? forward.initial : forward.steps[s - 1].ensemble;
  };

  std::vector<std::vector<double>> smoothed(T + 1);
  smoothed[T] = raw_at(T).weights;
  for (int s = T - 1; s >= 0; --s) {
    const ParticleEnsemble& cur = raw_at(s);
    const ParticleEnsemble& next = raw_at(s + 1);
    const int n_cur = cur.size();
    const int n_next = next.size();

    std::vector<std::uint64_t> f_of_cur(n_cur);
    for (int l = 0; l < n_cur; ++l)
      f_of_cur[l] = model.network_function(cur.particles[l]).encode();

    std::vector<double> ratio(n_next);
    for (int i = 0; i < n_next; ++i) {
      const std::uint64_t target = next.particles[i].encode();
      double denom = 0.0;
      for (int l = 0; l < n_cur; ++l)
        denom += kernel[std::popcount(f_of_cur[l] ^ target)] * cur.weights[l];
      if (denom <= 0.0) {
        if (smoothed[s + 1][i] > 0.0)
          throw SmootherDegeneracyError(
              "apf_bks (naive): no forward particle can reach a smoothed particle");
        ratio[i] = 0.0;
      } else {
        ratio[i] = smoothed[s + 1][i] / denom;
      }
    }

    smoothed[s].assign(n_cur, 0.0);
    for (int j = 0; j < n_cur; ++j) {
      double acc = 0.0;
      for (int i = 0; i < n_next; ++i)
        acc += kernel[std::popcount(f_of_cur[j] ^ next.particles[i].encode())] * ratio[i];
      smoothed[s][j] = cur.weights[j] * acc;
    }
  }
  return smoothed;
}

ApfBksResult apf_bks(const GrnModel& model, const RnaSeqModel& obs,
                     std::span<const ReadCountVector> ys, int particle_count, Rng& rng,
                     const ApfOptions& options) {
  ApfBksResult out;
  out.forward = run_apf_bkf(model, obs, ys, particle_count, rng, options);
  out.smoother = apf_bks_backward(model, out.forward);
  return out;
}

}  // namespace pobds
