// Command-line harness: simulation, filtering/smoothing on CSV time series,
// discrete and continuous identification, and the three batch experiments.

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pobds/harness.hpp"
#include "pobds/io.hpp"

namespace fs = std::filesystem;
using namespace pobds;

namespace {

struct Args {
  std::string network;
  std::string obs_model;
  std::string config;
  std::string data;
  std::string bank;
  std::string out = "out";
  std::string estimators = "bkf,bks,apf-bkf,apf-bks";
  std::string params = "p,mu,delta";
  int horizon = 100;
  std::vector<int> particles{1000};
  int runs = 0;  // 0 = experiment default
  std::uint64_t seed = 1;
  double epsilon = 1e-4;
  std::vector<double> noise;
  std::vector<double> dispersions;
  std::vector<int> horizons;
};

// The configuration file overrides command-line flags.
void apply_config(Args& args) {
  if (args.config.empty()) return;
  std::ifstream in(args.config);
  if (!in) throw std::runtime_error("cannot open config " + args.config);
  nlohmann::json j;
  in >> j;
  if (j.contains("network")) args.network = j["network"].get<std::string>();
  if (j.contains("obs_model")) args.obs_model = j["obs_model"].get<std::string>();
  if (j.contains("data")) args.data = j["data"].get<std::string>();
  if (j.contains("bank")) args.bank = j["bank"].get<std::string>();
  if (j.contains("out")) args.out = j["out"].get<std::string>();
  if (j.contains("estimators")) args.estimators = j["estimators"].get<std::string>();
  if (j.contains("params")) args.params = j["params"].get<std::string>();
  if (j.contains("T")) args.horizon = j["T"].get<int>();
  if (j.contains("runs")) args.runs = j["runs"].get<int>();
  if (j.contains("seed")) args.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("epsilon")) args.epsilon = j["epsilon"].get<double>();
  if (j.contains("N")) {
    args.particles.clear();
    if (j["N"].is_array())
      for (const auto& n : j["N"]) args.particles.push_back(n.get<int>());
    else
      args.particles.push_back(j["N"].get<int>());
  }
  if (j.contains("p")) {
    args.noise.clear();
    for (const auto& v : j["p"]) args.noise.push_back(v.get<double>());
  }
  if (j.contains("phi")) {
    args.dispersions.clear();
    for (const auto& v : j["phi"]) args.dispersions.push_back(v.get<double>());
  }
  if (j.contains("horizons")) {
    args.horizons.clear();
    for (const auto& v : j["horizons"]) args.horizons.push_back(v.get<int>());
  }
}

std::set<std::string> estimator_set(const std::string& csv) {
  std::set<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

std::string out_path(const Args& args, const std::string& file) {
  fs::create_directories(args.out);
  return (fs::path(args.out) / file).string();
}

ParameterVector default_theta0(const std::string& params, const RnaSeqModel& obs,
                               int dim) {
  // Mid-box start for every requested component.
  ParameterVector theta;
  std::stringstream ss(params);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "p") theta.add(ParameterVector::noise_intensity(0.25));
    else if (item == "mu") theta.add(ParameterVector::baseline(1.0));
    else if (item == "s") theta.add(ParameterVector::depth(1.25));
    else if (item == "delta")
      for (int g = 0; g < dim; ++g) theta.add(ParameterVector::differential(g, 5.05));
    else if (item == "phi")
      for (int g = 0; g < dim; ++g) theta.add(ParameterVector::inverse_dispersion(g, 10.25));
    else if (!item.empty())
      throw std::runtime_error("unknown parameter name: " + item);
  }
  (void)obs;
  if (theta.empty()) throw std::runtime_error("no parameters selected");
  return theta;
}

ParameterVector truth_for(const ParameterVector& shape, const GrnModel& grn,
                          const RnaSeqModel& obs) {
  ParameterVector truth;
  for (int i = 0; i < shape.size(); ++i) {
    Parameter c = shape[i];
    switch (c.kind) {
      case ParamKind::NoiseIntensity: c.value = grn.noise_intensity(); break;
      case ParamKind::Depth: c.value = obs.depth(); break;
      case ParamKind::Baseline: c.value = obs.baseline(); break;
      case ParamKind::Differential: c.value = obs.differential(c.gene); break;
      case ParamKind::InverseDispersion: c.value = obs.inverse_dispersion(c.gene); break;
      case ParamKind::Interaction: break;
    }
    truth.add(std::move(c));
  }
  return truth;
}

int cmd_simulate(const Args& args) {
  const NamedGrnModel net = load_grn_model(args.network);
  const RnaSeqModel obs = load_rnaseq_model(args.obs_model);
  Rng rng(args.seed);
  const SimulationResult sim = simulate(net.model, obs, args.horizon, rng);
  write_states_csv(out_path(args, "states.csv"), net.genes, sim.states, 0);
  write_observations_csv(out_path(args, "observations.csv"), net.genes, sim.observations);
  std::cout << "wrote " << args.out << "/states.csv and observations.csv (T="
            << args.horizon << ")\n";
  return 0;
}

int cmd_filter(const Args& args, bool smooth) {
  const NamedGrnModel net = load_grn_model(args.network);
  const RnaSeqModel obs = load_rnaseq_model(args.obs_model);
  const std::vector<ReadCountVector> ys = read_observations_csv(args.data);
  const StateDistribution pi0 = StateDistribution::uniform(net.model.dim());
  const std::set<std::string> wanted = estimator_set(args.estimators);

  if (!smooth && wanted.count("bkf")) {
    const FilterTrace trace = run_bkf(net.model, obs, ys, pi0);
    write_filter_trace_csv(out_path(args, "bkf_trace.csv"), trace);
    std::cout << "bkf log-likelihood " << format_double(trace.log_likelihood) << "\n";
  }
  if (smooth && wanted.count("bks")) {
    const SmootherTrace trace = run_bks(net.model, obs, ys, pi0);
    write_smoother_trace_csv(out_path(args, "bks_trace.csv"), trace);
    std::cout << "bks log-likelihood " << format_double(trace.filter.log_likelihood)
              << "\n";
  }
  for (const int n : args.particles) {
    Rng rng(args.seed);
    if (!smooth && wanted.count("apf-bkf")) {
      const ApfTrace trace = run_apf_bkf(net.model, obs, ys, n, rng);
      write_apf_trace_csv(out_path(args, "apf_bkf_trace_N" + std::to_string(n) + ".csv"),
                          trace);
      std::cout << "apf-bkf N=" << n << " log-likelihood "
                << format_double(trace.log_likelihood) << "\n";
    }
    if (smooth && wanted.count("apf-bks")) {
      const ApfBksResult result = apf_bks(net.model, obs, ys, n, rng);
      write_apf_smoother_trace_csv(
          out_path(args, "apf_bks_trace_N" + std::to_string(n) + ".csv"), result.forward,
          result.smoother);
      std::cout << "apf-bks N=" << n << " log-likelihood "
                << format_double(result.forward.log_likelihood) << "\n";
    }
  }
  return 0;
}

int cmd_identify_discrete(const Args& args) {
  const NamedGrnModel net = load_grn_model(args.network);
  const RnaSeqModel obs = load_rnaseq_model(args.obs_model);
  const std::vector<ReadCountVector> ys = read_observations_csv(args.data);
  const BankSpec spec = load_bank_spec(args.bank);

  CandidateBank bank(net.model, obs, spec.candidates, args.particles.front(), args.seed,
                     spec.labels);
  std::ofstream trace(out_path(args, "selection_trace.csv"));
  trace << "k,selected";
  for (int i = 0; i < bank.size(); ++i) trace << ",L_" << bank.label(i);
  trace << "\n";
  int selected = 0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const BankStep step = bank.step(ys[k]);
    selected = step.selected;
    trace << k + 1 << "," << bank.label(selected);
    for (const double ll : step.log_likelihoods) trace << "," << format_double(ll);
    trace << "\n";
  }
  std::cout << "selected candidate: " << bank.label(selected) << "\n";
  return 0;
}

int cmd_identify_em(const Args& args) {
  const NamedGrnModel net = load_grn_model(args.network);
  const RnaSeqModel obs = load_rnaseq_model(args.obs_model);
  const std::vector<ReadCountVector> ys = read_observations_csv(args.data);
  const ParameterVector theta0 = default_theta0(args.params, obs, net.model.dim());

  Rng rng(args.seed);
  const EmResult result =
      em_fit(net.model, obs, ys, theta0, args.particles.front(), args.epsilon, rng);
  write_em_report_csv(out_path(args, "em_report.csv"), result.theta, result.history);
  write_parameters_json(out_path(args, "theta_ml.json"), result.theta);
  std::cout << (result.converged ? "converged" : "NOT converged (best iterate kept)")
            << " after " << result.history.size() << " iterations\n";
  for (int i = 0; i < result.theta.size(); ++i)
    std::cout << "  " << result.theta.name(i) << " = "
              << format_double(result.theta[i].value) << "\n";
  return 0;
}

int cmd_experiment(const Args& args, int which) {
  const NamedGrnModel net = load_grn_model(args.network);
  const RnaSeqModel obs = load_rnaseq_model(args.obs_model);

  if (which == 1) {
    Experiment1Config config{net.model, obs, {}, args.particles, args.horizon,
                             args.runs ? args.runs : 200, args.seed, true, true};
    const std::set<std::string> wanted = estimator_set(args.estimators);
    config.run_exact = wanted.count("bkf") || wanted.count("bks");
    config.run_particle = wanted.count("apf-bkf") || wanted.count("apf-bks");
    std::vector<double> noise = args.noise.empty() ? std::vector<double>{0.01, 0.05} : args.noise;
    std::vector<double> phis =
        args.dispersions.empty() ? std::vector<double>{5.0, 1.0} : args.dispersions;
    for (const double p : noise)
      for (const double phi : phis) config.cells.emplace_back(p, phi);

    const Experiment1Result result = experiment1(config);
    std::ofstream csv(out_path(args, "experiment1.csv"));
    csv << "p,phi,N,estimator,rate_per_gene,rate_whole_vector,mean_runtime_s,runs_used,"
           "runs_excluded,valid\n";
    std::vector<PlotPoint> plot;
    for (const auto& row : result.rows) {
      csv << format_double(row.p) << "," << format_double(row.phi) << "," << row.particles
          << "," << row.estimator << "," << format_double(row.rate_per_gene) << ","
          << format_double(row.rate_whole_vector) << ","
          << format_double(row.mean_runtime_seconds) << "," << row.runs_used << ","
          << row.runs_excluded << "," << (row.valid ? 1 : 0) << "\n";
      std::ostringstream series;
      series << row.estimator << "(p=" << row.p << ",phi=" << row.phi << ")";
      plot.push_back({static_cast<double>(row.particles), row.rate_per_gene, series.str()});
      std::cout << "p=" << row.p << " phi=" << row.phi << " N=" << row.particles << " "
                << row.estimator << ": " << row.rate_per_gene << "%\n";
    }
    write_plot_data_csv(out_path(args, "experiment1_plot.csv"), plot);
    return 0;
  }

  if (which == 2) {
    const BankSpec spec = args.bank.empty()
                              ? BankSpec{{ParameterVector({ParameterVector::interaction(3, 1, -1)}),
                                          ParameterVector({ParameterVector::interaction(3, 1, 0)}),
                                          ParameterVector({ParameterVector::interaction(3, 1, 1)})},
                                         {"a42=-1", "a42=0", "a42=+1"}}
                              : load_bank_spec(args.bank);
    Experiment2Config config{net.model,
                             obs,
                             spec.candidates,
                             spec.labels,
                             0,
                             args.horizons.empty() ? std::vector<int>{30, 60} : args.horizons,
                             args.noise.empty() ? std::vector<double>{0.01, 0.05} : args.noise,
                             args.dispersions.empty() ? std::vector<double>{1.0, 5.0}
                                                      : args.dispersions,
                             args.particles,
                             args.runs ? args.runs : 100,
                             args.seed};
    const Experiment2Result result = experiment2(config);

    std::ofstream csv(out_path(args, "experiment2.csv"));
    csv << "n,p,phi,N,accuracy,runs_used,runs_excluded,valid\n";
    std::vector<PlotPoint> plot;
    for (const auto& row : result.rows) {
      csv << row.horizon << "," << format_double(row.p) << "," << format_double(row.phi)
          << "," << row.particles << "," << format_double(row.accuracy) << ","
          << row.runs_used << "," << row.runs_excluded << "," << (row.valid ? 1 : 0)
          << "\n";
      std::ostringstream series;
      series << "phi=" << row.phi << ",p=" << row.p << ",N=" << row.particles;
      plot.push_back({static_cast<double>(row.horizon), row.accuracy, series.str()});
      std::cout << "n=" << row.horizon << " p=" << row.p << " phi=" << row.phi
                << " N=" << row.particles << ": accuracy " << row.accuracy << "\n";
    }
    write_plot_data_csv(out_path(args, "experiment2_plot.csv"), plot);

    std::ofstream trace(out_path(args, "experiment2_trace.csv"));
    trace << "n,p,phi,N,run,k,selected";
    for (const std::string& label : result.labels) trace << ",L_" << label;
    trace << "\n";
    for (const auto& point : result.traces) {
      trace << point.horizon << "," << format_double(point.p) << ","
            << format_double(point.phi) << "," << point.particles << "," << point.run
            << "," << point.step << "," << result.labels[point.selected];
      for (const double ll : point.log_likelihoods) trace << "," << format_double(ll);
      trace << "\n";
    }
    return 0;
  }

  if (which == 3) {
    const ParameterVector theta0 = default_theta0(args.params, obs, net.model.dim());
    Experiment3Config config{net.model,
                             obs,
                             theta0,
                             truth_for(theta0, net.model, obs),
                             args.horizons.empty() ? std::vector<int>{50, 100} : args.horizons,
                             args.particles,
                             args.runs ? args.runs : 20,
                             args.seed,
                             args.epsilon,
                             {}};
    const Experiment3Result result = experiment3(config);

    std::ofstream csv(out_path(args, "experiment3.csv"));
    csv << "T,N,parameter,mean_relative_distance,runs_used,runs_excluded,valid\n";
    std::vector<PlotPoint> plot;
    for (const auto& row : result.rows) {
      csv << row.horizon << "," << row.particles << "," << row.parameter << ","
          << format_double(row.mean_relative_distance) << "," << row.runs_used << ","
          << row.runs_excluded << "," << (row.valid ? 1 : 0) << "\n";
      plot.push_back({static_cast<double>(row.horizon), row.mean_relative_distance,
                      row.parameter + "(N=" + std::to_string(row.particles) + ")"});
      std::cout << "T=" << row.horizon << " N=" << row.particles << " " << row.parameter
                << ": mean relative distance " << row.mean_relative_distance << "\n";
    }
    write_plot_data_csv(out_path(args, "experiment3_plot.csv"), plot);

    std::ofstream runs_csv(out_path(args, "experiment3_runs.csv"));
    runs_csv << "T,N,run,converged";
    for (int i = 0; i < config.theta0.size(); ++i)
      runs_csv << "," << config.theta0.name(i);
    runs_csv << "\n";
    for (const auto& rec : result.run_records) {
      runs_csv << rec.horizon << "," << rec.particles << "," << rec.run << ","
               << (rec.converged ? 1 : 0);
      for (const double v : rec.theta) runs_csv << "," << format_double(v);
      runs_csv << "\n";
    }
    return 0;
  }

  throw std::runtime_error("experiment must be 1, 2 or 3");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boolean dynamical system estimation toolkit"};
  app.require_subcommand(1);
  Args args;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--network", args.network, "network definition JSON");
    cmd->add_option("--obs-model", args.obs_model, "observation model JSON");
    cmd->add_option("--config", args.config, "JSON config; overrides flags");
    cmd->add_option("--T", args.horizon, "time series length");
    cmd->add_option("--N", args.particles, "particle count(s)");
    cmd->add_option("--runs", args.runs, "independent runs");
    cmd->add_option("--seed", args.seed, "master seed");
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--estimators", args.estimators, "comma list of estimators");
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic time series");
  add_common(sim);

  CLI::App* filter = app.add_subcommand("filter", "run filtering on a data CSV");
  add_common(filter);
  filter->add_option("--data", args.data, "observations CSV");

  CLI::App* smooth = app.add_subcommand("smooth", "run fixed-interval smoothing");
  add_common(smooth);
  smooth->add_option("--data", args.data, "observations CSV");

  CLI::App* discrete =
      app.add_subcommand("identify-discrete", "candidate-bank parameter selection");
  add_common(discrete);
  discrete->add_option("--data", args.data, "observations CSV");
  discrete->add_option("--bank", args.bank, "candidate bank JSON");

  CLI::App* em = app.add_subcommand("identify-em", "EM continuous-parameter estimation");
  add_common(em);
  em->add_option("--data", args.data, "observations CSV");
  em->add_option("--params", args.params, "comma list: p,mu,s,delta,phi");
  em->add_option("--epsilon", args.epsilon, "EM stopping tolerance");

  CLI::App* experiment = app.add_subcommand("experiment", "batch experiments 1|2|3");
  add_common(experiment);
  int which = 1;
  experiment->add_option("which", which, "experiment number")->required();
  experiment->add_option("--bank", args.bank, "candidate bank JSON (experiment 2)");
  experiment->add_option("--params", args.params, "estimated set (experiment 3)");
  experiment->add_option("--epsilon", args.epsilon, "EM stopping tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    apply_config(args);
    if (sim->parsed()) return cmd_simulate(args);
    if (filter->parsed()) return cmd_filter(args, false);
    if (smooth->parsed()) return cmd_filter(args, true);
    if (discrete->parsed()) return cmd_identify_discrete(args);
    if (em->parsed()) return cmd_identify_em(args);
    if (experiment->parsed()) return cmd_experiment(args, which);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
