#include "pobds/exact.hpp"

#include <cmath>
#include <limits>

namespace pobds {

UpdateDiagonal UpdateDiagonal::build(const RnaSeqModel& obs, const ReadCountVector& y,
                                     int dim) {
  if (obs.dim() != dim || y.dim() != dim)
    throw std::invalid_argument("UpdateDiagonal: dimension mismatch");
  const GeneLogLikTable table = obs.loglik_table(y);
  const std::size_t n = std::size_t{1} << dim;

  // loglik(x) = sum_j table(j, x_j); fill incrementally, flipping one gene
  // between Gray-adjacent indices.
  std::vector<double> loglik(n);
  double base = 0.0;
  std::vector<double> delta(dim);
  for (int j = 0; j < dim; ++j) {
    base += table.entry(j, 0);
    delta[j] = table.entry(j, 1) - table.entry(j, 0);
  }
  loglik[0] = base;
  for (std::size_t i = 1; i < n; ++i) {
    const int g = std::countr_zero(i);
    const std::size_t prev = i ^ (std::size_t{1} << g);
    loglik[i] = loglik[prev] + (((i >> g) & 1u) ? delta[g] : -delta[g]);
  }

  double max_log = -std::numeric_limits<double>::infinity();
  for (const double v : loglik) max_log = std::max(max_log, v);
  if (!std::isfinite(max_log))
    throw DegenerateObservationError("UpdateDiagonal: all state likelihoods vanish");

  UpdateDiagonal out;
  out.max_log = max_log;
  out.scaled.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.scaled[i] = std::exp(loglik[i] - max_log);
  return out;
}

TransitionMatrix TransitionMatrix::build(const GrnModel& model) {
  const int d = model.dim();
  if (d > 14)
    throw std::invalid_argument("TransitionMatrix: dense storage limited to d <= 14");
  const std::size_t n = std::size_t{1} << d;
  const std::vector<double> kernel = model.kernel_table();
  std::vector<double> m(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::uint64_t fj = model.network_function(BooleanState(j, d)).encode();
    double* col = m.data() + j * n;
    for (std::size_t i = 0; i < n; ++i) col[i] = kernel[std::popcount(fj ^ i)];
  }
  return TransitionMatrix(d, std::move(m));
}

void TransitionMatrix::apply(std::span<const double> in, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < n_; ++j) {
    const double w = in[j];
    if (w == 0.0) continue;
    const double* col = m_.data() + j * n_;
    for (std::size_t i = 0; i < n_; ++i) out[i] += w * col[i];
  }
}

void TransitionMatrix::apply_transpose(std::span<const double> in,
                                       std::span<double> out) const {
  for (std::size_t j = 0; j < n_; ++j) {
    const double* col = m_.data() + j * n_;
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) acc += col[i] * in[i];
    out[j] = acc;
  }
}

TransitionOperator::TransitionOperator(const GrnModel& model)
    : d_(model.dim()), p_(model.noise_intensity()) {
  if (d_ > 20)
    throw std::invalid_argument("TransitionOperator: limited to d <= 20");
  const std::size_t n = std::size_t{1} << d_;
  f_image_.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    f_image_[j] =
        static_cast<std::uint32_t>(model.network_function(BooleanState(j, d_)).encode());
}

void TransitionOperator::convolve_noise(std::span<double> v) const {
  const double q = 1.0 - p_;
  for (int g = 0; g < d_; ++g) {
    const std::size_t bit = std::size_t{1} << g;
    for (std::size_t base = 0; base < v.size(); base += 2 * bit) {
      for (std::size_t i = base; i < base + bit; ++i) {
        const double lo = v[i];
        const double hi = v[i + bit];
        v[i] = q * lo + p_ * hi;
        v[i + bit] = p_ * lo + q * hi;
      }
    }
  }
}

void TransitionOperator::apply(std::span<const double> in, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < f_image_.size(); ++j) out[f_image_[j]] += in[j];
  convolve_noise(out);
}

void TransitionOperator::apply_transpose(std::span<const double> in,
                                         std::span<double> out) const {
  std::vector<double> tmp(in.begin(), in.end());
  convolve_noise(tmp);
  for (std::size_t j = 0; j < f_image_.size(); ++j) out[j] = tmp[f_image_[j]];
}

namespace {

template <class Transition>
std::pair<StateDistribution, double> bkf_step_impl(const Transition& m,
                                                   const UpdateDiagonal& update,
                                                   const StateDistribution& prior) {
  StateDistribution beta(prior.dim());
  std::vector<double> predicted(prior.size());
  m.apply(prior.values(), predicted);
  for (std::size_t i = 0; i < predicted.size(); ++i) beta[i] = update.scaled[i] * predicted[i];
  double norm;
  try {
    norm = beta.normalize();
  } catch (const DegenerateDistributionError&) {
    throw DegenerateObservationError(
        "bkf_step: observation has zero likelihood under every state (model/data mismatch)");
  }
  return {std::move(beta), std::log(norm) + update.max_log};
}

// UpdateAt: callable giving the step-k update diagonal, k = 1..T.
template <class Transition, class UpdateAt>
FilterTrace run_bkf_impl(const Transition& m, int steps, const StateDistribution& pi0,
                         UpdateAt&& update_at) {
  if (steps < 1) throw std::invalid_argument("run_bkf: need at least one observation");

  FilterTrace trace{pi0, {}, 0.0};
  StateDistribution current = pi0;
  std::vector<double> predicted(pi0.size());
  for (int k = 1; k <= steps; ++k) {
    const UpdateDiagonal& update = update_at(k);
    m.apply(current.values(), predicted);
    StateDistribution pred = StateDistribution::from_values(pi0.dim(), predicted);
    StateDistribution posterior(pi0.dim());
    for (std::size_t i = 0; i < predicted.size(); ++i)
      posterior[i] = update.scaled[i] * predicted[i];
    double norm;
    try {
      norm = posterior.normalize();
    } catch (const DegenerateDistributionError&) {
      throw DegenerateObservationError(
          "run_bkf: observation has zero likelihood under every state (model/data mismatch)");
    }
    const double log_beta = std::log(norm) + update.max_log;
    const MmseEstimate est = mmse_from_mean(posterior.mean());
    trace.log_likelihood += log_beta;
    trace.steps.push_back(
        {std::move(pred), std::move(posterior), log_beta, est.state, est.mse});
    current = trace.steps.back().posterior;
  }
  return trace;
}

template <class Transition, class UpdateAt>
SmootherTrace run_bks_impl(const Transition& m, int steps, const StateDistribution& pi0,
                           UpdateAt&& update_at) {
  SmootherTrace trace{run_bkf_impl(m, steps, pi0, update_at), {}, {}, {}, {}};
  const int T = steps;
  const std::size_t n = pi0.size();

  trace.smoothed.assign(static_cast<std::size_t>(T) + 1, StateDistribution(pi0.dim()));
  trace.backward.assign(static_cast<std::size_t>(T) + 1, StateDistribution(pi0.dim()));

  // Delta_{T|T} = 1; each Delta is renormalized per step (the smoothing
  // combine is scale-invariant), so no log bookkeeping is needed.
  StateDistribution delta(pi0.dim());
  for (std::size_t i = 0; i < n; ++i) delta[i] = 1.0;
  delta.normalize();
  trace.backward[T] = delta;

  std::vector<double> scratch(n);
  for (int s = T; s >= 1; --s) {
    const UpdateDiagonal& update = update_at(s);
    // Delta_{s|s-1} = T_s(Y_s) Delta_{s|s}
    StateDistribution delta_pred(pi0.dim());
    for (std::size_t i = 0; i < n; ++i) delta_pred[i] = update.scaled[i] * delta[i];

    // Pi_{s|T} proportional to Pi_{s|s-1} .* Delta_{s|s-1}
    StateDistribution smoothed(pi0.dim());
    const StateDistribution& pred = trace.filter.steps[s - 1].predicted;
    for (std::size_t i = 0; i < n; ++i) smoothed[i] = pred[i] * delta_pred[i];
    try {
      smoothed.normalize();
    } catch (const DegenerateDistributionError&) {
      throw DegenerateObservationError("run_bks: degenerate smoothing combine");
    }
    trace.smoothed[s] = std::move(smoothed);

    // Delta_{s-1|s-1} = M^T Delta_{s|s-1}
    m.apply_transpose(delta_pred.values(), scratch);
    StateDistribution next(pi0.dim());
    for (std::size_t i = 0; i < n; ++i) next[i] = scratch[i];
    next.normalize();
    delta = std::move(next);
    trace.backward[s - 1] = delta;
  }

  // Pi_{0|T} proportional to Pi_{0|0} .* Delta_{0|0}
  StateDistribution smoothed0(pi0.dim());
  for (std::size_t i = 0; i < n; ++i) smoothed0[i] = pi0[i] * delta[i];
  smoothed0.normalize();
  trace.smoothed[0] = std::move(smoothed0);

  trace.estimates.reserve(T);
  trace.mses.reserve(T);
  for (int k = 1; k <= T; ++k) {
    const MmseEstimate est = mmse_from_mean(trace.smoothed[k].mean());
    trace.estimates.push_back(est.state);
    trace.mses.push_back(est.mse);
  }
  return trace;
}

// Builds the step-k diagonal from the observation model on demand.
struct ModelUpdates {
  const RnaSeqModel& obs;
  std::span<const ReadCountVector> ys;
  int dim;
  mutable UpdateDiagonal cache;
  mutable int cached_step = -1;

  const UpdateDiagonal& operator()(int k) const {
    if (cached_step != k) {
      cache = UpdateDiagonal::build(obs, ys[k - 1], dim);
      cached_step = k;
    }
    return cache;
  }
};

bool use_dense(const GrnModel& model, BkfMethod method) {
  return method == BkfMethod::DenseMatrix ||
         (method == BkfMethod::Auto && model.dim() <= 10);
}

}  // namespace

std::pair<StateDistribution, double> bkf_step(const TransitionMatrix& m,
                                              const UpdateDiagonal& update,
                                              const StateDistribution& prior) {
  return bkf_step_impl(m, update, prior);
}

std::pair<StateDistribution, double> bkf_step(const TransitionOperator& m,
                                              const UpdateDiagonal& update,
                                              const StateDistribution& prior) {
  return bkf_step_impl(m, update, prior);
}

std::pair<StateDistribution, double> bkf_step(const TransitionOperator& m,
                                              const RnaSeqModel& obs,
                                              const ReadCountVector& y,
                                              const StateDistribution& prior) {
  return bkf_step_impl(m, UpdateDiagonal::build(obs, y, m.dim()), prior);
}

FilterTrace run_bkf(const GrnModel& model, const RnaSeqModel& obs,
                    std::span<const ReadCountVector> ys, const StateDistribution& pi0,
                    BkfMethod method) {
  if (pi0.dim() != model.dim())
    throw std::invalid_argument("run_bkf: prior dimension mismatch");
  const ModelUpdates updates{obs, ys, model.dim(), UpdateDiagonal{}, -1};
  const int T = static_cast<int>(ys.size());
  if (use_dense(model, method))
    return run_bkf_impl(TransitionMatrix::build(model), T, pi0, updates);
  return run_bkf_impl(TransitionOperator(model), T, pi0, updates);
}

SmootherTrace run_bks(const GrnModel& model, const RnaSeqModel& obs,
                      std::span<const ReadCountVector> ys, const StateDistribution& pi0,
                      BkfMethod method) {
  if (pi0.dim() != model.dim())
    throw std::invalid_argument("run_bks: prior dimension mismatch");
  const ModelUpdates updates{obs, ys, model.dim(), UpdateDiagonal{}, -1};
  const int T = static_cast<int>(ys.size());
  if (use_dense(model, method))
    return run_bks_impl(TransitionMatrix::build(model), T, pi0, updates);
  return run_bks_impl(TransitionOperator(model), T, pi0, updates);
}

FilterTrace run_bkf(const TransitionOperator& m, std::span<const UpdateDiagonal> updates,
                    const StateDistribution& pi0) {
  return run_bkf_impl(m, static_cast<int>(updates.size()), pi0,
                      [&](int k) -> const UpdateDiagonal& { return updates[k - 1]; });
}

SmootherTrace run_bks(const TransitionOperator& m, std::span<const UpdateDiagonal> updates,
                      const StateDistribution& pi0) {
  return run_bks_impl(m, static_cast<int>(updates.size()), pi0,
                      [&](int k) -> const UpdateDiagonal& { return updates[k - 1]; });
}

}  // namespace pobds
