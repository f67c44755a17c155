#include "pobds/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "pobds/special_functions.hpp"

namespace pobds {

namespace {

// Noise intensity is clamped away from {0, 1} wherever it enters logs or the
// p(1-p) denominator.
double clamp_noise(double p) { return std::clamp(p, 1e-9, 0.5); }

}  // namespace

Parameter ParameterVector::noise_intensity(double value, double lower, double upper) {
  return {ParamKind::NoiseIntensity, -1, -1, -1, value, lower, upper};
}
Parameter ParameterVector::depth(double value, double lower, double upper) {
  return {ParamKind::Depth, -1, -1, -1, value, lower, upper};
}
Parameter ParameterVector::baseline(double value, double lower, double upper) {
  return {ParamKind::Baseline, -1, -1, -1, value, lower, upper};
}
Parameter ParameterVector::differential(int gene, double value, double lower, double upper) {
  return {ParamKind::Differential, gene, -1, -1, value, lower, upper};
}
Parameter ParameterVector::inverse_dispersion(int gene, double value, double lower,
                                              double upper) {
  return {ParamKind::InverseDispersion, gene, -1, -1, value, lower, upper};
}
Parameter ParameterVector::interaction(int target, int source, int value) {
  return {ParamKind::Interaction, -1, target, source, static_cast<double>(value), -1.0, 1.0};
}

ParameterVector::ParameterVector(std::vector<Parameter> components) {
  for (Parameter& c : components) add(std::move(c));
}

void ParameterVector::add(Parameter component) {
  if (!(component.lower < component.upper))
    throw std::invalid_argument("ParameterVector: box must have positive width");
  if (!(component.value >= component.lower && component.value <= component.upper))
    throw std::invalid_argument("ParameterVector: value outside its box");
  components_.push_back(std::move(component));
}

std::vector<double> ParameterVector::values() const {
  std::vector<double> out(components_.size());
  for (std::size_t i = 0; i < components_.size(); ++i) out[i] = components_[i].value;
  return out;
}

void ParameterVector::set_values(std::span<const double> values) {
  if (values.size() != components_.size())
    throw std::invalid_argument("ParameterVector: value count mismatch");
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (!(values[i] >= components_[i].lower && values[i] <= components_[i].upper))
      throw std::invalid_argument("ParameterVector: value outside its box");
    components_[i].value = values[i];
  }
}

void ParameterVector::clamp_to_box(std::span<double> values) const {
  for (std::size_t i = 0; i < components_.size(); ++i)
    values[i] = std::clamp(values[i], components_[i].lower, components_[i].upper);
}

std::vector<double> ParameterVector::widths() const {
  std::vector<double> out(components_.size());
  for (std::size_t i = 0; i < components_.size(); ++i)
    out[i] = components_[i].upper - components_[i].lower;
  return out;
}

std::string ParameterVector::name(int i) const {
  const Parameter& c = components_[i];
  std::ostringstream os;
  switch (c.kind) {
    case ParamKind::NoiseIntensity: os << "p"; break;
    case ParamKind::Depth: os << "s"; break;
    case ParamKind::Baseline: os << "mu"; break;
    case ParamKind::Differential: os << "delta_" << c.gene + 1; break;
    case ParamKind::InverseDispersion: os << "phi_" << c.gene + 1; break;
    case ParamKind::Interaction: os << "a_" << c.target + 1 << "_" << c.source + 1; break;
  }
  return os.str();
}

bool ParameterVector::has(ParamKind kind) const {
  for (const Parameter& c : components_)
    if (c.kind == kind) return true;
  return false;
}

GrnModel ParameterVector::apply(const GrnModel& base) const {
  GrnModel out = base;
  for (const Parameter& c : components_) {
    if (c.kind == ParamKind::NoiseIntensity) out = out.with_noise(c.value);
    if (c.kind == ParamKind::Interaction)
      out = out.with_interaction(c.target, c.source, static_cast<int>(c.value));
  }
  return out;
}

RnaSeqModel ParameterVector::apply(const RnaSeqModel& base) const {
  double s = base.depth();
  double mu = base.baseline();
  std::vector<double> delta = base.differentials();
  std::vector<double> phi = base.inverse_dispersions();
  for (const Parameter& c : components_) {
    switch (c.kind) {
      case ParamKind::Depth: s = c.value; break;
      case ParamKind::Baseline: mu = c.value; break;
      case ParamKind::Differential: delta.at(c.gene) = c.value; break;
      case ParamKind::InverseDispersion: phi.at(c.gene) = c.value; break;
      default: break;
    }
  }
  return {s, mu, std::move(delta), std::move(phi)};
}

std::vector<double> relative_distance(const ParameterVector& estimate,
                                      const ParameterVector& truth) {
  if (estimate.size() != truth.size())
    throw std::invalid_argument("relative_distance: component count mismatch");
  std::vector<double> out(estimate.size());
  for (int i = 0; i < estimate.size(); ++i) {
    const Parameter& a = estimate[i];
    const Parameter& b = truth[i];
    if (a.kind != b.kind || a.gene != b.gene || a.target != b.target ||
        a.source != b.source)
      throw std::invalid_argument("relative_distance: components not aligned");
    const double width = a.upper - a.lower;
    if (!(width > 0.0)) throw std::invalid_argument("relative_distance: zero-width box");
    out[i] = std::abs(a.value - b.value) / width;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate bank.

CandidateBank::CandidateBank(const GrnModel& base_grn, const RnaSeqModel& base_obs,
                             std::span<const ParameterVector> candidates,
                             int particle_count, std::uint64_t seed,
                             std::vector<std::string> labels, const ApfOptions& options) {
  std::vector<std::uint64_t> seeds(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    seeds[i] = Rng::derive_seed(seed, i);
  labels_ = std::move(labels);
  init(base_grn, base_obs, candidates, particle_count, seeds, options);
}

CandidateBank::CandidateBank(const GrnModel& base_grn, const RnaSeqModel& base_obs,
                             std::span<const ParameterVector> candidates,
                             int particle_count, std::span<const std::uint64_t> seeds,
                             std::vector<std::string> labels, const ApfOptions& options) {
  labels_ = std::move(labels);
  init(base_grn, base_obs, candidates, particle_count, seeds, options);
}

void CandidateBank::init(const GrnModel& base_grn, const RnaSeqModel& base_obs,
                         std::span<const ParameterVector> candidates, int particle_count,
                         std::span<const std::uint64_t> seeds, const ApfOptions& options) {
  if (candidates.empty()) throw std::invalid_argument("CandidateBank: empty candidate set");
  if (seeds.size() != candidates.size())
    throw std::invalid_argument("CandidateBank: seed count mismatch");
  resampling_ = options.resampling;
  // Constant offsets to the initial log-likelihoods cannot change the argmax;
  // they start at 0 here.
  log_likelihoods_.assign(candidates.size(), 0.0);
  failed_.assign(candidates.size(), false);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    Rng rng(seeds[i]);
    ParticleEnsemble ensemble =
        sample_initial_ensemble(base_grn.dim(), particle_count, rng, options.initial);
    candidates_.push_back({candidates[i].apply(base_grn), candidates[i].apply(base_obs),
                           std::move(ensemble), std::move(rng), BooleanState(), 0.0});
    if (static_cast<int>(labels_.size()) <= static_cast<int>(i)) {
      std::string label;
      for (int c = 0; c < candidates[i].size(); ++c) {
        if (!label.empty()) label += ",";
        std::ostringstream os;
        os << candidates[i].name(c) << "=" << candidates[i][c].value;
        label += os.str();
      }
      labels_.push_back(label.empty() ? "candidate_" + std::to_string(i) : label);
    }
  }
}

BankStep CandidateBank::step(const ReadCountVector& y) {
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (failed_[i]) continue;
    Candidate& c = candidates_[i];
    try {
      ApfStepResult step = apf_bkf_step(c.grn, c.obs, y, c.ensemble, c.rng, resampling_);
      log_likelihoods_[i] += step.log_beta_hat;
      const MmseEstimate est = mmse_from_mean(step.mean);
      c.estimate = est.state;
      c.mse = est.mse;
      c.ensemble = std::move(step.ensemble);
    } catch (const ApfDegeneracyError&) {
      failed_[i] = true;
      log_likelihoods_[i] = -std::numeric_limits<double>::infinity();
    }
  }

  int best = -1;
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (failed_[i]) continue;
    if (best < 0 || log_likelihoods_[i] > log_likelihoods_[best])
      best = static_cast<int>(i);
  }
  if (best < 0)
    throw ApfDegeneracyError("CandidateBank: every candidate filter degenerated");
  selected_ = best;
  return {best, candidates_[best].estimate, candidates_[best].mse, log_likelihoods_};
}

// ---------------------------------------------------------------------------
// FFBSi.

SmoothedTrajectorySet ffbsi(const ApfTrace& forward, const GrnModel& model,
                            int path_count, Rng& rng) {
  if (path_count < 1) throw std::invalid_argument("ffbsi: need at least one path");
  const int T = static_cast<int>(forward.steps.size());
  const int d = forward.dim;
  const std::vector<double> kernel = model.kernel_table();
  SmoothedTrajectorySet paths(d, T, path_count);

  const auto unique_at = [&](int s) -> const UniqueEnsemble& {
    return s == 0 ? forward.initial_unique : forward.steps[s - 1].unique;
  };

  {
    const UniqueEnsemble& terminal = unique_at(T);
    const std::vector<double> cum = cumulative_sum(terminal.weights);
    for (int i = 0; i < path_count; ++i) {
      const std::size_t eta = sample_cumulative(cum, rng.uniform01());
      paths.set_state(i, T, terminal.particles[eta]);
    }
  }

  std::vector<double> weights;
  for (int s = T - 1; s >= 0; --s) {
    const UniqueEnsemble& cur = unique_at(s);
    const int f_cur = cur.size();
    std::vector<std::uint64_t> f_of_cur(f_cur);
    for (int l = 0; l < f_cur; ++l)
      f_of_cur[l] = model.network_function(cur.particles[l]).encode();

    // Group paths by their (unique) smoothed successor; one categorical
    // table serves every path in a group.
    std::map<std::uint64_t, std::vector<int>> groups;
    for (int i = 0; i < path_count; ++i)
      groups[paths.state(i, s + 1).encode()].push_back(i);

    for (const auto& [successor, members] : groups) {
      weights.assign(f_cur, 0.0);
      for (int l = 0; l < f_cur; ++l)
        weights[l] = cur.weights[l] * kernel[std::popcount(f_of_cur[l] ^ successor)];
      std::vector<double> cum = cumulative_sum(weights);
      if (!(cum.back() > 0.0))
        throw SmootherDegeneracyError("ffbsi: smoothed successor unreachable from forward particles");
      for (const int path : members) {
        const std::size_t eta = sample_cumulative(cum, rng.uniform01());
        paths.set_state(path, s, cur.particles[eta]);
      }
    }
  }
  return paths;
}

// ---------------------------------------------------------------------------
// Q_hat and its gradient.

TrajectoryStats trajectory_stats(const SmoothedTrajectorySet& trajectories,
                                 const GrnModel& model) {
  TrajectoryStats stats;
  stats.dim = trajectories.dim();
  stats.horizon = trajectories.horizon();
  stats.path_count = trajectories.paths();
  stats.active.assign(static_cast<std::size_t>(stats.horizon + 1) * stats.dim, 0.0);

  for (int i = 0; i < trajectories.paths(); ++i) {
    BooleanState prev = trajectories.state(i, 0);
    for (int g = 0; g < stats.dim; ++g)
      if (prev.bit(g)) stats.active[g] += 1.0;
    for (int s = 1; s <= stats.horizon; ++s) {
      const BooleanState cur = trajectories.state(i, s);
      stats.flip_count += model.network_function(prev).hamming_distance(cur);
      for (int g = 0; g < stats.dim; ++g)
        if (cur.bit(g)) stats.active[static_cast<std::size_t>(s) * stats.dim + g] += 1.0;
      prev = cur;
    }
  }
  return stats;
}

double q_hat(const TrajectoryStats& stats, const GrnModel& grn, const RnaSeqModel& obs,
             std::span<const ReadCountVector> ys) {
  if (static_cast<int>(ys.size()) != stats.horizon)
    throw std::invalid_argument("q_hat: observation count != trajectory horizon");
  if (grn.dim() != stats.dim || obs.dim() != stats.dim)
    throw std::invalid_argument("q_hat: dimension mismatch");

  const double n = stats.path_count;
  const double d = stats.dim;
  const double p = clamp_noise(grn.noise_intensity());

  // Initial term: fixed uniform prior, constant in theta.
  double q = -d * std::log(2.0);
  // Transition term: Bernoulli flips.
  q += (stats.flip_count * std::log(p) +
        (n * stats.horizon * d - stats.flip_count) * std::log1p(-p)) /
       n;
  // Observation term via per-step per-gene activity counts.
  for (int s = 1; s <= stats.horizon; ++s) {
    for (int j = 0; j < stats.dim; ++j) {
      const double c1 = stats.active_at(s, j);
      const double c0 = n - c1;
      const std::uint32_t y = ys[s - 1][j];
      q += (c0 * obs.log_pmf(j, y, false) + c1 * obs.log_pmf(j, y, true)) / n;
    }
  }
  return q;
}

double q_hat(const SmoothedTrajectorySet& trajectories, const ParameterVector& theta,
             const GrnModel& base_grn, const RnaSeqModel& base_obs,
             std::span<const ReadCountVector> ys) {
  const GrnModel grn = theta.apply(base_grn);
  return q_hat(trajectory_stats(trajectories, grn), grn, theta.apply(base_obs), ys);
}

std::vector<double> q_hat_gradient(const TrajectoryStats& stats,
                                   const ParameterVector& theta, const GrnModel& base_grn,
                                   const RnaSeqModel& base_obs,
                                   std::span<const ReadCountVector> ys) {
  if (static_cast<int>(ys.size()) != stats.horizon)
    throw std::invalid_argument("q_hat_gradient: observation count != trajectory horizon");
  const GrnModel grn = theta.apply(base_grn);
  const RnaSeqModel obs = theta.apply(base_obs);
  const double n = stats.path_count;
  const double d = stats.dim;

  std::vector<double> grad(theta.size(), 0.0);
  for (int c = 0; c < theta.size(); ++c) {
    const Parameter& comp = theta[c];
    switch (comp.kind) {
      case ParamKind::NoiseIntensity: {
        if (comp.value <= comp.lower || comp.value >= comp.upper)
          throw std::domain_error("q_hat_gradient: p at its box boundary");
        const double p = clamp_noise(comp.value);
        grad[c] = (stats.flip_count - n * stats.horizon * d * p) / (n * p * (1.0 - p));
        break;
      }
      case ParamKind::Depth:
      case ParamKind::Baseline: {
        double acc = 0.0;
        for (int s = 1; s <= stats.horizon; ++s) {
          for (int j = 0; j < stats.dim; ++j) {
            const double y = ys[s - 1][j];
            const double phi = obs.inverse_dispersion(j);
            const double c1 = stats.active_at(s, j);
            const double l0 = obs.mean_count(j, false);
            const double l1 = obs.mean_count(j, true);
            acc += (n - c1) * phi * (y - l0) / (phi + l0);
            acc += c1 * phi * (y - l1) / (phi + l1);
          }
        }
        grad[c] = comp.kind == ParamKind::Depth ? acc / (n * obs.depth()) : acc / n;
        break;
      }
      case ParamKind::Differential: {
        const int j = comp.gene;
        const double phi = obs.inverse_dispersion(j);
        const double l1 = obs.mean_count(j, true);
        double acc = 0.0;
        for (int s = 1; s <= stats.horizon; ++s) {
          const double y = ys[s - 1][j];
          acc += stats.active_at(s, j) * phi * (y - l1) / (phi + l1);
        }
        grad[c] = acc / n;
        break;
      }
      case ParamKind::InverseDispersion: {
        const int j = comp.gene;
        const double phi = obs.inverse_dispersion(j);
        const double l0 = obs.mean_count(j, false);
        const double l1 = obs.mean_count(j, true);
        const double psi_phi = digamma(phi);
        double acc = 0.0;
        for (int s = 1; s <= stats.horizon; ++s) {
          const double y = ys[s - 1][j];
          const double psi_y = digamma(y + phi);
          const double c1 = stats.active_at(s, j);
          acc += (n - c1) * (psi_y - psi_phi + std::log(phi / (l0 + phi)) +
                             (l0 - y) / (l0 + phi));
          acc += c1 * (psi_y - psi_phi + std::log(phi / (l1 + phi)) +
                       (l1 - y) / (l1 + phi));
        }
        grad[c] = acc / n;
        break;
      }
      case ParamKind::Interaction:
        throw std::invalid_argument(
            "q_hat_gradient: discrete interaction entries have no gradient");
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// M-step and EM driver.

namespace {

// Gradient entries at active bounds pointing outward contribute nothing.
double projected_component(double g, double x, double lo, double hi) {
  if (x <= lo && g < 0.0) return 0.0;
  if (x >= hi && g > 0.0) return 0.0;
  return g;
}

}  // namespace

ParameterVector m_step(const TrajectoryStats& stats, const ParameterVector& theta_in,
                       const GrnModel& base_grn, const RnaSeqModel& base_obs,
                       std::span<const ReadCountVector> ys, const EmOptions& options) {
  ParameterVector theta = theta_in;
  std::vector<double> x = theta.values();

  // p is the only transition parameter, so its exact maximizer is the
  // empirical flip rate of the trajectory set (root of the gradient).
  std::vector<int> ascent;  // indices moved by gradient ascent
  for (int c = 0; c < theta.size(); ++c) {
    switch (theta[c].kind) {
      case ParamKind::NoiseIntensity: {
        const double flip_rate =
            stats.flip_count / (stats.path_count * stats.horizon * stats.dim);
        x[c] = std::clamp(clamp_noise(flip_rate), theta[c].lower, theta[c].upper);
        break;
      }
      case ParamKind::Interaction:
        throw std::invalid_argument("m_step: discrete interaction entries not optimizable");
      default:
        ascent.push_back(c);
    }
  }
  theta.clamp_to_box(x);
  theta.set_values(x);
  if (ascent.empty()) return theta;

  const auto eval = [&](const std::vector<double>& v) {
    ParameterVector t = theta;
    t.set_values(v);
    return q_hat(stats, t.apply(base_grn), t.apply(base_obs), ys);
  };
  const auto gradient = [&](const std::vector<double>& v) {
    ParameterVector t = theta;
    t.set_values(v);
    return q_hat_gradient(stats, t, base_grn, base_obs, ys);
  };

  const std::vector<double> widths = theta.widths();
  double obj = eval(x);
  double alpha = 0.0;
  std::vector<double> prev_x, prev_g;
  bool any_progress = false;

  for (int it = 0; it < options.m_step_max_iterations; ++it) {
    const std::vector<double> g_full = gradient(x);
    std::vector<double> g(x.size(), 0.0);
    double stationarity = 0.0;
    for (const int c : ascent) {
      g[c] = g_full[c];
      const double pg = projected_component(g[c], x[c], theta[c].lower, theta[c].upper);
      stationarity = std::max(stationarity, std::abs(pg) * widths[c]);
    }
    if (stationarity <= 1e-7 * (1.0 + std::abs(obj))) break;

    if (it == 0) {
      // Largest step that moves no component more than a quarter box.
      alpha = std::numeric_limits<double>::infinity();
      for (const int c : ascent)
        if (g[c] != 0.0) alpha = std::min(alpha, 0.25 * widths[c] / std::abs(g[c]));
      if (!std::isfinite(alpha)) break;
    } else {
      // Barzilai-Borwein step from the previous pair, backtracked below.
      double num = 0.0, den = 0.0;
      for (const int c : ascent) {
        const double dx = x[c] - prev_x[c];
        const double dg = g[c] - prev_g[c];
        num += dx * dx;
        den += dx * dg;
      }
      if (den != 0.0 && std::isfinite(num / den)) alpha = std::abs(num / den);
      alpha = std::clamp(alpha, 1e-16, 1e12);
    }

    prev_x = x;
    prev_g = g;

    bool accepted = false;
    std::vector<double> trial(x.size());
    while (alpha >= 1e-16) {
      trial = x;
      for (const int c : ascent) trial[c] = x[c] + alpha * g[c];
      theta.clamp_to_box(trial);
      double directional = 0.0;
      for (const int c : ascent) directional += g[c] * (trial[c] - x[c]);
      const double obj_trial = eval(trial);
      if (obj_trial >= obj + 1e-4 * directional && directional > 0.0) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!any_progress)
        throw MStepError("m_step: line search failed to find an ascent step");
      break;
    }
    any_progress = true;

    double step_norm = 0.0;
    for (const int c : ascent) step_norm = std::max(step_norm, std::abs(trial[c] - x[c]));
    obj = eval(trial);
    x = std::move(trial);
    if (step_norm < options.m_step_step_tolerance) break;
  }

  theta.set_values(x);
  return theta;
}

EmResult em_fit(const GrnModel& base_grn, const RnaSeqModel& base_obs,
                std::span<const ReadCountVector> ys, const ParameterVector& theta0,
                int particle_count, double epsilon, Rng& rng, const EmOptions& options) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("em_fit: epsilon must be positive");
  if (theta0.has(ParamKind::Interaction))
    throw std::invalid_argument("em_fit: discrete interaction entries belong to the bank");

  EmResult result;
  result.theta = theta0;
  ApfOptions apf_options;
  apf_options.resampling = options.resampling;

  double best_loglik = -std::numeric_limits<double>::infinity();
  ParameterVector best_theta = theta0;

  for (int n = 0; n < options.max_iterations; ++n) {
    const GrnModel grn = result.theta.apply(base_grn);
    const RnaSeqModel obs = result.theta.apply(base_obs);

    const ApfTrace forward = run_apf_bkf(grn, obs, ys, particle_count, rng, apf_options);
    const SmoothedTrajectorySet trajectories = ffbsi(forward, grn, particle_count, rng);
    const TrajectoryStats stats = trajectory_stats(trajectories, grn);

    if (forward.log_likelihood > best_loglik) {
      best_loglik = forward.log_likelihood;
      best_theta = result.theta;
    }

    const std::vector<double> old_values = result.theta.values();
    ParameterVector updated = m_step(stats, result.theta, base_grn, base_obs, ys, options);

    double change = 0.0;
    const std::vector<double> new_values = updated.values();
    for (std::size_t i = 0; i < new_values.size(); ++i)
      change = std::max(change, std::abs(new_values[i] - old_values[i]));

    result.history.push_back({new_values,
                              q_hat(stats, updated.apply(base_grn), updated.apply(base_obs), ys),
                              change, forward.log_likelihood});
    result.theta = std::move(updated);

    if (change < epsilon) {
      result.converged = true;
      break;
    }
  }

  if (!result.converged) result.theta = best_theta;

  const GrnModel grn_ml = result.theta.apply(base_grn);
  const RnaSeqModel obs_ml = result.theta.apply(base_obs);
  result.smoothed =
      apf_bks(grn_ml, obs_ml, ys, particle_count, rng, apf_options).smoother;
  return result;
}

}  // namespace pobds
