#include "oracles.hpp"

#include <cmath>
#include <functional>

namespace pobds::testing {

namespace {

struct PathContext {
  const GrnModel& model;
  std::span<const ReadCountVector> ys;
  const StateDistribution& pi0;
  std::vector<std::vector<double>> likelihood;  // [k][state], k = 1..T
  int T;
  std::size_t n;
};

PathContext make_context(const GrnModel& model, const RnaSeqModel& obs,
                         std::span<const ReadCountVector> ys,
                         const StateDistribution& pi0) {
  PathContext ctx{model, ys, pi0, {}, static_cast<int>(ys.size()),
                  std::size_t{1} << model.dim()};
  ctx.likelihood.resize(ctx.T);
  for (int k = 0; k < ctx.T; ++k) {
    ctx.likelihood[k].resize(ctx.n);
    for (std::size_t i = 0; i < ctx.n; ++i)
      ctx.likelihood[k][i] =
          std::exp(obs.log_likelihood(ys[k], BooleanState(i, model.dim())));
  }
  return ctx;
}

}  // namespace

PathSumResult oracle_path_sum(const GrnModel& model, const RnaSeqModel& obs,
                              std::span<const ReadCountVector> ys,
                              const StateDistribution& pi0) {
  const PathContext ctx = make_context(model, obs, ys, pi0);
  std::vector<std::vector<long double>> marg(
      ctx.T + 1, std::vector<long double>(ctx.n, 0.0L));
  long double total = 0.0L;
  std::vector<std::size_t> path(ctx.T + 1, 0);

  // Depth-first over all (2^d)^(T+1) paths, weight accumulated as we go.
  std::function<void(int, long double)> recurse = [&](int k, long double weight) {
    if (weight == 0.0L) return;
    if (k > ctx.T) {
      total += weight;
      for (int s = 0; s <= ctx.T; ++s) marg[s][path[s]] += weight;
      return;
    }
    for (std::size_t i = 0; i < ctx.n; ++i) {
      path[k] = i;
      const long double step =
          static_cast<long double>(ctx.model.transition_probability(
              BooleanState(i, ctx.model.dim()), BooleanState(path[k - 1], ctx.model.dim()))) *
          ctx.likelihood[k - 1][i];
      recurse(k + 1, weight * step);
    }
  };

  for (std::size_t i0 = 0; i0 < ctx.n; ++i0) {
    path[0] = i0;
    recurse(1, static_cast<long double>(pi0[i0]));
  }

  PathSumResult out;
  out.marginals.resize(ctx.T + 1, std::vector<double>(ctx.n));
  for (int s = 0; s <= ctx.T; ++s)
    for (std::size_t i = 0; i < ctx.n; ++i)
      out.marginals[s][i] = static_cast<double>(marg[s][i] / total);
  out.log_likelihood = static_cast<double>(std::log(total));
  return out;
}

std::vector<std::vector<double>> oracle_filter_marginals(
    const GrnModel& model, const RnaSeqModel& obs, std::span<const ReadCountVector> ys,
    const StateDistribution& pi0) {
  std::vector<std::vector<double>> out;
  out.reserve(ys.size() + 1);
  std::vector<double> initial(pi0.values().begin(), pi0.values().end());
  out.push_back(std::move(initial));
  for (std::size_t k = 1; k <= ys.size(); ++k) {
    const PathSumResult prefix = oracle_path_sum(model, obs, ys.subspan(0, k), pi0);
    out.push_back(prefix.marginals.back());
  }
  return out;
}

std::vector<std::vector<double>> oracle_pairwise_marginals(
    const GrnModel& model, const RnaSeqModel& obs, std::span<const ReadCountVector> ys,
    const StateDistribution& pi0, int s) {
  const PathContext ctx = make_context(model, obs, ys, pi0);
  std::vector<std::vector<long double>> pair(ctx.n, std::vector<long double>(ctx.n, 0.0L));
  long double total = 0.0L;
  std::vector<std::size_t> path(ctx.T + 1, 0);

  std::function<void(int, long double)> recurse = [&](int k, long double weight) {
    if (weight == 0.0L) return;
    if (k > ctx.T) {
      total += weight;
      pair[path[s]][path[s + 1]] += weight;
      return;
    }
    for (std::size_t i = 0; i < ctx.n; ++i) {
      path[k] = i;
      const long double step =
          static_cast<long double>(ctx.model.transition_probability(
              BooleanState(i, ctx.model.dim()), BooleanState(path[k - 1], ctx.model.dim()))) *
          ctx.likelihood[k - 1][i];
      recurse(k + 1, weight * step);
    }
  };

  for (std::size_t i0 = 0; i0 < ctx.n; ++i0) {
    path[0] = i0;
    recurse(1, static_cast<long double>(pi0[i0]));
  }

  std::vector<std::vector<double>> out(ctx.n, std::vector<double>(ctx.n));
  for (std::size_t a = 0; a < ctx.n; ++a)
    for (std::size_t b = 0; b < ctx.n; ++b)
      out[a][b] = static_cast<double>(pair[a][b] / total);
  return out;
}

GrnModel random_grn(int dim, Rng& rng, double p_min, double p_max) {
  std::vector<std::vector<int>> a(dim, std::vector<int>(dim, 0));
  std::vector<double> b(dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      const double u = rng.uniform01();
      a[i][j] = u < 0.25 ? -1 : (u < 0.5 ? 1 : 0);
    }
    b[i] = rng.uniform01() < 0.5 ? -0.5 : 0.5;
  }
  const double p = p_min + (p_max - p_min) * rng.uniform01();
  return {std::move(a), std::move(b), p};
}

RnaSeqModel random_rnaseq(int dim, Rng& rng) {
  std::vector<double> delta(dim), phi(dim);
  for (int j = 0; j < dim; ++j) {
    delta[j] = 1.0 + 2.0 * rng.uniform01();
    phi[j] = 1.0 + 7.0 * rng.uniform01();
  }
  const double s = 0.8 + 0.45 * rng.uniform01();
  const double mu = 0.05 + 0.45 * rng.uniform01();
  return {s, mu, std::move(delta), std::move(phi)};
}

}  // namespace pobds::testing
